#include "tmdc/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/harness/experiment.hpp"
#include "tmdc/tensor/checkpoint.hpp"

namespace tmdc {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kMetricsHeader = "model,eval_set,attack,kind,accuracy";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("metrics: '" + s + "' is not a number");
  return v;
}

std::string note_for(const MetricRow& row) { return row.kind == "pgd_restarts" ? kAutoAttackLiteNote : ""; }

}  // namespace

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.eval_set + "," + r.attack + "," + r.kind + "," + format_real(r.accuracy) + "\n";
  }
  return out;
}

std::vector<MetricRow> metrics_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw Error("metrics: unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw Error("metrics: expected 5 columns in '" + line + "'");
    rows.push_back({cells[0], cells[1], cells[2], cells[3], parse_real(cells[4])});
  }
  return rows;
}

std::string summary_to_csv(const Summary& s) {
  std::string out = "model,eval_set,attack,kind,accuracy,note\n";
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    out += r.model + "," + r.eval_set + "," + r.attack + "," + r.kind + "," + format_real(r.accuracy) + "," +
           s.notes[i] + "\n";
  }
  return out;
}

std::string summary_to_json(const Summary& s) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    rows.push_back(Json{{"model", r.model},
                        {"eval_set", r.eval_set},
                        {"attack", r.attack},
                        {"kind", r.kind},
                        {"accuracy", r.accuracy},
                        {"note", s.notes[i]}});
  }
  return Json{{"rows", rows}}.dump(2) + "\n";
}

Summary summary_from_json(std::string_view text) {
  try {
    const auto j = Json::parse(text);
    Summary s;
    for (const auto& r : j.at("rows")) {
      s.rows.push_back({r.at("model").get<std::string>(), r.at("eval_set").get<std::string>(),
                        r.at("attack").get<std::string>(), r.at("kind").get<std::string>(),
                        r.at("accuracy").get<double>()});
      s.notes.push_back(r.at("note").get<std::string>());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("summary: ") + e.what());
  }
}

std::string comparison_csv(const Summary& s) {
  std::vector<std::string> models, attacks;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& r : s.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    // Self-attacks on the adversarially trained model get their own column.
    const std::string column = r.eval_set.ends_with("_advself") ? r.attack + "_self" : r.attack;
    if (std::find(attacks.begin(), attacks.end(), column) == attacks.end()) attacks.push_back(column);
    cell[{r.model, column}] = r.accuracy;
  }
  std::string out = "model";
  for (const auto& a : attacks) out += "," + a;
  out += "\n";
  for (const auto& m : models) {
    out += m;
    for (const auto& a : attacks) {
      const auto it = cell.find({m, a});
      out += "," + (it == cell.end() ? std::string() : format_real(it->second));
    }
    out += "\n";
  }
  return out;
}

Summary emit_report(const fs::path& run_dir) {
  if (!fs::exists(run_paths::manifest(run_dir))) {
    throw Error("emit_report: no run manifest in " + run_dir.string());
  }
  std::vector<fs::path> files;
  const fs::path metrics_dir = run_dir / "metrics";
  if (fs::is_directory(metrics_dir)) {
    for (const auto& e : fs::directory_iterator(metrics_dir)) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  Summary s;
  for (const auto& f : files) {
    for (auto& row : metrics_from_csv(read_text(f))) {
      s.notes.push_back(note_for(row));
      s.rows.push_back(std::move(row));
    }
  }
  write_text_atomic(run_dir / "report" / "summary.csv", summary_to_csv(s));
  write_text_atomic(run_dir / "report" / "summary.json", summary_to_json(s));
  write_text_atomic(run_dir / "report" / "comparison.csv", comparison_csv(s));
  return s;
}

}  // namespace tmdc
