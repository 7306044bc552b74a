#include "tmdc/tm/tm_trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "tmdc/classifier/report.hpp"
#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/hash.hpp"
#include "tmdc/tensor/optim.hpp"
#include "tmdc/tensor/tape.hpp"
#include "tmdc/tm/lora.hpp"

namespace tmdc {

namespace fs = std::filesystem;

void TmRunConfig::validate() const {
  if (rank < 1) throw Error("tm: rank must be at least 1");
  if (checkpoint_every < 1) throw Error("tm: checkpoint cadence must be at least 1");
  if (steps < checkpoint_every) throw Error("tm: steps must be at least the checkpoint cadence");
  if (batch_size < 1 || timesteps_per_sample < 1) throw Error("tm: batch size and timesteps per sample must be positive");
  if (learning_rate < 0.0) throw Error("tm: learning rate must be non-negative");
}

namespace {

std::string checkpoint_name(std::size_t step) { return "ckpt_" + std::to_string(step) + ".tmdc"; }

std::string config_json(const TmRunConfig& c) {
  nlohmann::ordered_json j{{"steps", c.steps},
                           {"batch_size", c.batch_size},
                           {"timesteps_per_sample", c.timesteps_per_sample},
                           {"learning_rate", c.learning_rate},
                           {"warmup_steps", c.warmup_steps},
                           {"checkpoint_every", c.checkpoint_every},
                           {"rank", c.rank},
                           {"alpha", c.alpha},
                           {"weight_decay", c.weight_decay},
                           {"seed", c.seed}};
  return j.dump();
}

}  // namespace

TmRunResult tm_finetune(Denoiser& model, const LabeledDataset& adv_train, const NoiseSchedule& sched,
                        const TmRunConfig& config, const fs::path& out_dir, const LossLogFn& log) {
  config.validate();
  if (adv_train.size() == 0) throw Error("tm_finetune: dataset is empty");
  if (adv_train.dim != model.config().dim) throw ShapeError("tm_finetune: dataset dimension differs from model");
  if (!model.has_adapters()) attach_lora(model, config.rank, config.alpha, config.seed);
  model.set_trainable(false, true);

  TmRunResult result;
  result.base_hash = hash_tensors(model.base_state());
  result.run_id = make_run_id(config_json(config) + result.base_hash + sha256_hex(dataset_to_csv(adv_train)));
  fs::create_directories(out_dir);

  auto check_frozen = [&](std::size_t step) {
    if (hash_tensors(model.base_state()) != result.base_hash) {
      throw FrozenWeightError("tm_finetune: base weights changed by step " + std::to_string(step));
    }
  };

  AdamOptions opts;
  opts.weight_decay = config.weight_decay;
  Adam optimizer(model.adapter_parameters(), opts);
  const std::size_t per = config.timesteps_per_sample;
  const std::size_t rows = config.batch_size * per;
  double window = 0.0;
  result.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(config.seed, derive_stream("tm_finetune", step));
    std::vector<std::size_t> idx(rows);
    std::vector<int> ts(rows);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t i = rng.below(adv_train.size());
      for (std::size_t k = 0; k < per; ++k) idx[b * per + k] = i;
    }
    for (auto& t : ts) t = static_cast<int>(rng.below(sched.steps()));
    const Tensor eps = randn(rng, Shape{rows, adv_train.dim});
    const Tensor x0 = adv_train.gather(idx);
    const std::vector<int> ys = adv_train.gather_labels(idx);

    double value = 0.0;
    try {
      Tape tape;
      TapeScope scope(tape);
      optimizer.zero_grad();
      const Tensor loss = diffusion_loss(model, x0, ys, ts, eps, sched);
      value = loss.item();
      if (!std::isfinite(value)) throw NumericError("loss is not finite");
      tape.backward(loss);
      optimizer.check_finite_grads();
    } catch (const NumericError& e) {
      throw NumericError("tm_finetune: step " + std::to_string(step) + ": " + e.what());
    }
    optimizer.step(constant_with_warmup(step, config.learning_rate, config.warmup_steps));
    result.losses.push_back(value);
    window += value;

    const std::size_t done = step + 1;
    if (config.log_every > 0 && done % config.log_every == 0) {
      if (log) log(done, window / static_cast<double>(config.log_every));
      window = 0.0;
    }
    if (done % config.checkpoint_every == 0 || done == config.steps) {
      check_frozen(done);
      const auto state = model.state();
      const fs::path path = out_dir / checkpoint_name(done);
      save_checkpoint(path, state);
      result.checkpoints.push_back({done, path, hash_tensors(state)});
    }
  }
  optimizer.zero_grad();
  check_frozen(config.steps);

  nlohmann::ordered_json manifest;
  manifest["run_id"] = result.run_id;
  manifest["config"] = nlohmann::ordered_json::parse(config_json(config));
  manifest["base_sha256"] = result.base_hash;
  manifest["loss_curve"] = result.losses;
  auto& ckpts = manifest["checkpoints"] = nlohmann::ordered_json::array();
  for (const auto& c : result.checkpoints) {
    ckpts.push_back({{"step", c.step}, {"file", c.path.filename().string()}, {"sha256", c.sha256}});
  }
  write_text_atomic(out_dir / "tm_manifest.json", manifest.dump(2) + "\n");
  return result;
}

std::vector<CheckpointRecord> list_checkpoints(const fs::path& dir) {
  std::vector<CheckpointRecord> out;
  if (!fs::is_directory(dir)) throw Error("list_checkpoints: " + dir.string() + " is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("ckpt_") || !name.ends_with(".tmdc")) continue;
    const std::string digits = name.substr(5, name.size() - 10);
    std::size_t step = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), step);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) continue;
    out.push_back({step, entry.path(), {}});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

Selection select_checkpoint(std::span<const CheckpointRecord> checkpoints, const LabeledDataset& robust_val,
                            const NoiseSchedule& sched, const EvalConfig& eval, const LabeledDataset* clean_val) {
  if (checkpoints.empty()) throw Error("select_checkpoint: no checkpoints");
  Selection sel;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto state = load_checkpoint(checkpoints[i].path);
    const Denoiser model = Denoiser::from_state(state);
    SweepRow row;
    row.step = checkpoints[i].step;
    row.robust_acc = evaluate(model, robust_val, sched, eval).accuracy;
    row.clean_acc = clean_val != nullptr ? evaluate(model, *clean_val, sched, eval).accuracy
                                         : std::numeric_limits<double>::quiet_NaN();
    sel.sweep.push_back(row);
    if (sel.sweep[i].robust_acc > sel.sweep[sel.best_index].robust_acc) sel.best_index = i;
  }
  return sel;
}

std::string sweep_csv(const Selection& selection) {
  std::string out = "step,clean_acc,robust_acc\n";
  for (const auto& row : selection.sweep) {
    out += std::to_string(row.step) + "," + (std::isnan(row.clean_acc) ? std::string() : format_real(row.clean_acc)) +
           "," + format_real(row.robust_acc) + "\n";
  }
  return out;
}

}  // namespace tmdc
