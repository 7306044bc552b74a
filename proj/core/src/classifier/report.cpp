#include "tmdc/classifier/report.hpp"

#include <cmath>

#include "json.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/tensor/hash.hpp"

namespace tmdc {

namespace {

nlohmann::ordered_json real_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

std::string eval_rows_csv(const EvalReport& report) {
  const std::size_t c = report.num_classes;
  std::string out = "sample_id,true_label,predicted_label";
  for (std::size_t l = 0; l < c; ++l) out += ",loss_" + std::to_string(l);
  for (std::size_t l = 0; l < c; ++l) out += ",posterior_" + std::to_string(l);
  out += "\n";
  for (const auto& row : report.rows) {
    out += std::to_string(row.sample_id) + "," + std::to_string(row.true_label) + "," + std::to_string(row.predicted);
    for (const auto& v : row.losses) out += "," + (v ? format_real(*v) : std::string());
    for (const auto& v : row.posterior) out += "," + (v ? format_real(*v) : std::string());
    out += "\n";
  }
  return out;
}

std::string eval_summary_json(const EvalReport& report, std::string_view run_id) {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["num_samples"] = report.rows.size();
  j["accuracy"] = real_or_null(report.accuracy);
  auto& per_class = j["per_class_accuracy"] = nlohmann::ordered_json::array();
  for (double v : report.per_class_accuracy) per_class.push_back(real_or_null(v));
  auto& losses = j["mean_losses"] = nlohmann::ordered_json::array();
  for (double v : report.mean_losses) losses.push_back(real_or_null(v));
  const EvalConfig& cfg = report.config;
  nlohmann::ordered_json echo;
  echo["mode"] = cfg.mode == EvalMode::Flat ? "flat" : "staged";
  echo["k"] = cfg.k;
  echo["strategy"] = to_string(cfg.strategy);
  auto& stages = echo["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : cfg.stage_plan.stages) stages.push_back({s.num_timesteps, s.keep});
  echo["threads"] = cfg.threads;
  j["config"] = echo;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

std::string make_run_id(std::string_view material) { return sha256_hex(material).substr(0, 12); }

}  // namespace tmdc
