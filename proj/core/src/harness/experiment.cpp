#include "tmdc/harness/experiment.hpp"

#include <algorithm>
#include <chrono>

#include "json.hpp"
#include "tmdc/attacks/adv_dataset.hpp"
#include "tmdc/classifier/report.hpp"
#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/harness/report.hpp"
#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/hash.hpp"

namespace tmdc {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace run_paths {
fs::path manifest(const fs::path& dir) { return dir / "run_manifest.json"; }
fs::path dataset(const fs::path& dir, std::string_view split) { return dir / "data" / (std::string(split) + ".csv"); }
fs::path model(const fs::path& dir, std::string_view name) { return dir / "models" / (std::string(name) + ".tmdc"); }
fs::path attack(const fs::path& dir, std::string_view set_name) {
  return dir / "attacks" / (std::string(set_name) + ".csv");
}
fs::path metrics(const fs::path& dir, std::string_view stage) { return dir / "metrics" / (std::string(stage) + ".csv"); }
fs::path tm_dir(const fs::path& dir) { return dir / "tm"; }
}  // namespace run_paths

namespace {

struct Context {
  const ExperimentConfig& config;
  fs::path dir;
  LogFn log;
  Json metrics = Json::object();
  std::vector<fs::path> files;

  void say(const std::string& msg) const {
    if (log) log(msg);
  }
  void wrote(const fs::path& p) { files.push_back(p); }
};

NoiseSchedule schedule_of(const ExperimentConfig& c) {
  return build_schedule(c.diffusion.timesteps, c.diffusion.beta_start, c.diffusion.beta_end);
}

std::string file_sha256(const fs::path& p) { return sha256_hex(read_text(p)); }

LabeledDataset load_split(const Context& ctx, std::string_view split) {
  const fs::path p = run_paths::dataset(ctx.dir, split);
  if (!fs::exists(p)) throw Error("missing " + p.string() + " (run the gen stage first)");
  return read_dataset_csv(p, ctx.config.dataset.num_classes, std::string(split));
}

fs::path require_file(const fs::path& p, std::string_view producer) {
  if (!fs::exists(p)) throw Error("missing " + p.string() + " (run the " + std::string(producer) + " stage first)");
  return p;
}

std::string curve_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i + 1) + "," + format_real(losses[i]) + "\n";
  return out;
}

double window_mean(const std::vector<double>& v, bool first, std::size_t n = 100) {
  if (v.empty()) return 0.0;
  n = std::min(n, v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += first ? v[i] : v[v.size() - 1 - i];
  return s / static_cast<double>(n);
}

bool is_transfer(const AttackConfig& a) { return a.kind != AttackKind::DirectDiffusion; }

void stage_gen(Context& ctx) {
  const BlobSplits s = gen_dataset(ctx.config.dataset);
  for (const auto* d : {&s.train, &s.val, &s.test}) {
    if (d->size() == 0) continue;
    const fs::path p = run_paths::dataset(ctx.dir, d->split);
    write_dataset_csv(p, *d);
    ctx.wrote(p);
  }
  ctx.metrics["train_size"] = s.train.size();
  ctx.metrics["val_size"] = s.val.size();
  ctx.metrics["test_size"] = s.test.size();
  ctx.metrics["nearest_mean_test_accuracy"] = nearest_mean_accuracy(s.test, s.means);
}

void stage_train_diffusion(Context& ctx) {
  const auto& c = ctx.config;
  const LabeledDataset train = load_split(ctx, "train");
  const NoiseSchedule sched = schedule_of(c);
  DenoiserConfig dc{train.dim, train.num_classes, c.diffusion.hidden, c.diffusion.time_dim, c.diffusion.class_dim,
                    c.diffusion.timesteps};
  Denoiser model(dc, component_seed(c, "diffusion.init"));
  TrainConfig tc = c.diffusion.train;
  tc.seed = component_seed(c, "diffusion.train");
  const auto losses = train_base(model, train, sched, tc, [&](std::size_t step, double mean) {
    ctx.say("train_diffusion step " + std::to_string(step) + " loss " + format_real(mean));
  });
  const fs::path mp = run_paths::model(ctx.dir, "diffusion");
  save_checkpoint(mp, model.state());
  ctx.wrote(mp);
  const fs::path cp = ctx.dir / "curves" / "diffusion_loss.csv";
  write_text_atomic(cp, curve_csv(losses));
  ctx.wrote(cp);
  ctx.metrics["first_window_loss"] = window_mean(losses, true);
  ctx.metrics["last_window_loss"] = window_mean(losses, false);
}

void train_baseline_common(Context& ctx, bool adversarial) {
  const auto& c = ctx.config;
  const LabeledDataset train = load_split(ctx, "train");
  const LabeledDataset test = load_split(ctx, "test");
  const std::string name = adversarial ? "baseline_adv" : "baseline";
  DiscriminativeModel model(train.dim, train.num_classes, component_seed(c, name + ".init"), c.baseline_hidden);
  TrainCurves curves;
  if (adversarial) {
    BaselineTrainConfig tc = c.adv_training.train;
    tc.seed = component_seed(c, name + ".train");
    AttackConfig attack = c.adv_training.attack;
    attack.seed = component_seed(c, "adv_training.attack");
    curves = adversarial_train(model, train, attack, tc, &test);
  } else {
    BaselineTrainConfig tc = c.baseline;
    tc.seed = component_seed(c, name + ".train");
    curves = train_discriminative(model, train, tc, &test);
  }
  const fs::path mp = run_paths::model(ctx.dir, name);
  save_checkpoint(mp, model.state());
  ctx.wrote(mp);
  const fs::path cp = ctx.dir / "curves" / (name + "_loss.csv");
  write_text_atomic(cp, curve_csv(curves.loss));
  ctx.wrote(cp);
  ctx.metrics["train_accuracy"] = curves.train_accuracy;
  ctx.metrics["test_accuracy"] = curves.test_accuracy.value_or(0.0);
}

DiscriminativeModel load_baseline(const fs::path& p) { return DiscriminativeModel::from_state(load_checkpoint(p)); }

AttackConfig seeded(const ExperimentConfig& c, const NamedAttack& a, std::string_view target) {
  AttackConfig out = a.attack;
  out.seed = component_seed(c, "attack." + a.name + "." + std::string(target));
  return out;
}

void write_adv(Context& ctx, std::string_view set_name, const AdvDataset& adv) {
  const fs::path p = run_paths::attack(ctx.dir, set_name);
  write_adv_dataset(p, adv);
  ctx.wrote(p);
  ctx.wrote(provenance_path(p));
}

void stage_attack(Context& ctx) {
  const auto& c = ctx.config;
  const LabeledDataset test = load_split(ctx, "test");
  const fs::path base_path = run_paths::model(ctx.dir, "baseline");
  const fs::path adv_path = run_paths::model(ctx.dir, "baseline_adv");
  const fs::path diff_path = run_paths::model(ctx.dir, "diffusion");

  for (const auto& a : c.attacks) {
    if (is_transfer(a.attack)) {
      const DiscriminativeModel surrogate = load_baseline(require_file(base_path, "train_baseline"));
      ctx.say("attack " + a.name + " against baseline");
      write_adv(ctx, "test_" + a.name, gen_adv_dataset(surrogate, test, seeded(c, a, "test"), file_sha256(base_path)));
      if (fs::exists(adv_path)) {
        const DiscriminativeModel robust = load_baseline(adv_path);
        ctx.say("attack " + a.name + " against baseline_adv");
        write_adv(ctx, "test_" + a.name + "_advself",
                  gen_adv_dataset(robust, test, seeded(c, a, "test_advself"), file_sha256(adv_path)));
      }
    } else {
      const Denoiser model = Denoiser::from_state(load_checkpoint(require_file(diff_path, "train_diffusion")));
      ctx.say("direct attack " + a.name + " against the diffusion classifier");
      AdvDataset adv = direct_attack_dataset(model, schedule_of(c), test, seeded(c, a, "test"), c.eval.k);
      adv.provenance.surrogate_hash = file_sha256(diff_path);
      write_adv(ctx, "test_" + a.name, adv);
    }
  }

  if (c.has_stage("tm") || c.has_stage("select")) {
    const NamedAttack& a = c.attack(c.tm.attack);
    const DiscriminativeModel surrogate = load_baseline(require_file(base_path, "train_baseline"));
    for (const char* split : {"train", "val"}) {
      const LabeledDataset source = load_split(ctx, split);
      ctx.say("attack " + a.name + " on the " + split + " split for truth maximization");
      write_adv(ctx, std::string(split) + "_" + a.name,
                gen_adv_dataset(surrogate, source, seeded(c, a, split), file_sha256(base_path)));
    }
  }
}

/// Test sets to evaluate on: clean plus every attack set present on disk.
struct EvalSet {
  std::string name;
  std::string attack;
  std::string kind;
  LabeledDataset data;
};

std::vector<EvalSet> eval_sets(const Context& ctx, bool include_self) {
  std::vector<EvalSet> sets;
  sets.push_back({"test", "clean", "", load_split(ctx, "test")});
  for (const auto& a : ctx.config.attacks) {
    for (const bool self : {false, true}) {
      if (self && (!include_self || !is_transfer(a.attack))) continue;
      const std::string name = "test_" + a.name + (self ? "_advself" : "");
      const fs::path p = run_paths::attack(ctx.dir, name);
      if (!fs::exists(p)) continue;
      sets.push_back({name, a.name, to_string(a.attack.kind), read_adv_dataset(p, ctx.config.dataset.num_classes).data});
    }
  }
  return sets;
}

EvalConfig eval_config_of(const ExperimentConfig& c) {
  EvalConfig e = c.eval;
  e.seed = component_seed(c, "eval");
  return e;
}

MetricRow eval_diffusion(Context& ctx, const Denoiser& model, const std::string& model_name, const EvalSet& set) {
  const EvalReport report = evaluate(model, set.data, schedule_of(ctx.config), eval_config_of(ctx.config));
  const fs::path rows = ctx.dir / "eval" / (model_name + "__" + set.name + ".csv");
  const fs::path summary = ctx.dir / "eval" / (model_name + "__" + set.name + ".json");
  write_text_atomic(rows, eval_rows_csv(report));
  write_text_atomic(summary, eval_summary_json(report, make_run_id(config_to_json(ctx.config) + model_name + set.name)));
  ctx.wrote(rows);
  ctx.wrote(summary);
  ctx.say(model_name + " on " + set.name + ": " + format_real(report.accuracy));
  return {model_name, set.name, set.attack, set.kind, report.accuracy};
}

void stage_eval(Context& ctx) {
  std::vector<MetricRow> rows;
  const auto sets = eval_sets(ctx, true);
  for (const char* name : {"baseline", "baseline_adv"}) {
    const fs::path p = run_paths::model(ctx.dir, name);
    if (!fs::exists(p)) continue;
    const DiscriminativeModel model = load_baseline(p);
    const bool adv = std::string(name) == "baseline_adv";
    for (const auto& s : sets) {
      if (!adv && s.name.ends_with("_advself")) continue;
      rows.push_back({name, s.name, s.attack, s.kind, accuracy(model, s.data)});
    }
  }
  const fs::path dp = run_paths::model(ctx.dir, "diffusion");
  if (fs::exists(dp)) {
    const Denoiser model = Denoiser::from_state(load_checkpoint(dp));
    for (const auto& s : sets) {
      if (s.name.ends_with("_advself")) continue;
      rows.push_back(eval_diffusion(ctx, model, "diffusion_classifier", s));
    }
  }
  const fs::path mp = run_paths::metrics(ctx.dir, "eval");
  write_text_atomic(mp, metrics_to_csv(rows));
  ctx.wrote(mp);
  ctx.metrics["rows"] = rows.size();
}

void stage_tm(Context& ctx) {
  const auto& c = ctx.config;
  Denoiser model =
      Denoiser::from_state(load_checkpoint(require_file(run_paths::model(ctx.dir, "diffusion"), "train_diffusion")));
  const fs::path adv_path = require_file(run_paths::attack(ctx.dir, "train_" + c.tm.attack), "attack");
  const AdvDataset adv = read_adv_dataset(adv_path, c.dataset.num_classes);
  TmRunConfig run = c.tm.run;
  run.seed = component_seed(c, "tm");
  const fs::path out = run_paths::tm_dir(ctx.dir);
  const TmRunResult r = tm_finetune(model, adv.data, schedule_of(c), run, out, [&](std::size_t step, double mean) {
    ctx.say("tm step " + std::to_string(step) + " loss " + format_real(mean));
  });
  for (const auto& ck : r.checkpoints) ctx.wrote(ck.path);
  ctx.wrote(out / "tm_manifest.json");
  ctx.metrics["first_window_loss"] = window_mean(r.losses, true);
  ctx.metrics["last_window_loss"] = window_mean(r.losses, false);
  ctx.metrics["base_sha256"] = r.base_hash;
  ctx.metrics["run_id"] = r.run_id;
}

void stage_select(Context& ctx) {
  const auto& c = ctx.config;
  const fs::path tm = run_paths::tm_dir(ctx.dir);
  if (!fs::is_directory(tm)) throw Error("missing " + tm.string() + " (run the tm stage first)");
  const auto ckpts = list_checkpoints(tm);
  const LabeledDataset robust_val =
      read_adv_dataset(require_file(run_paths::attack(ctx.dir, "val_" + c.tm.attack), "attack"), c.dataset.num_classes)
          .data;
  const LabeledDataset clean_val = load_split(ctx, "val");
  const Selection sel = select_checkpoint(ckpts, robust_val, schedule_of(c), eval_config_of(c), &clean_val);
  write_text_atomic(tm / "sweep.csv", sweep_csv(sel));
  ctx.wrote(tm / "sweep.csv");
  Json sj{{"selected_step", sel.best().step},
          {"selected_robust_val_accuracy", sel.best().robust_acc},
          {"final_step", sel.sweep.back().step},
          {"final_robust_val_accuracy", sel.sweep.back().robust_acc},
          {"checkpoint", ckpts[sel.best_index].path.filename().string()}};
  write_text_atomic(tm / "selection.json", sj.dump(2) + "\n");
  ctx.wrote(tm / "selection.json");
  ctx.metrics["selected_step"] = sel.best().step;

  std::vector<MetricRow> rows;
  const Denoiser best = Denoiser::from_state(load_checkpoint(ckpts[sel.best_index].path));
  for (const auto& s : eval_sets(ctx, false)) rows.push_back(eval_diffusion(ctx, best, "tmdc", s));
  const fs::path mp = run_paths::metrics(ctx.dir, "select");
  write_text_atomic(mp, metrics_to_csv(rows));
  ctx.wrote(mp);
}

void stage_report(Context& ctx) {
  const Summary s = emit_report(ctx.dir);
  for (const char* f : {"summary.csv", "summary.json", "comparison.csv"}) ctx.wrote(ctx.dir / "report" / f);
  ctx.metrics["rows"] = s.rows.size();
}

Json load_manifest(const ExperimentConfig& c, const fs::path& dir) {
  const fs::path p = run_paths::manifest(dir);
  if (fs::exists(p)) {
    try {
      Json j = Json::parse(read_text(p));
      if (j.value("format_version", 0) == kManifestVersion) return j;
    } catch (const nlohmann::json::exception&) {
      // Unreadable manifests are replaced below.
    }
  }
  Json j;
  j["format_version"] = kManifestVersion;
  j["run_id"] = make_run_id(config_to_json(c));
  j["config"] = Json::parse(config_to_json(c));
  Json seeds;
  seeds["experiment"] = c.seed;
  seeds["dataset"] = c.dataset.seed;
  for (const char* comp : {"diffusion.init", "diffusion.train", "baseline.init", "baseline.train", "baseline_adv.init",
                           "baseline_adv.train", "adv_training.attack", "eval", "tm"}) {
    seeds[comp] = component_seed(c, comp);
  }
  j["seeds"] = seeds;
  j["stages"] = Json::object();
  j["checkpoints"] = Json::object();
  j["wall_clock_seconds"] = 0.0;
  return j;
}

void write_manifest(const fs::path& dir, Json& manifest) {
  // Only keep references to files that still exist.
  for (auto& [name, stage] : manifest["stages"].items()) {
    Json kept = Json::array();
    for (const auto& f : stage["files"]) {
      if (fs::exists(dir / f.get<std::string>())) kept.push_back(f);
    }
    stage["files"] = kept;
  }
  Json ck = Json::object();
  for (const auto& [rel, sha] : manifest["checkpoints"].items()) {
    if (fs::exists(dir / rel)) ck[rel] = sha;
  }
  manifest["checkpoints"] = ck;
  double total = 0.0;
  for (const auto& [name, stage] : manifest["stages"].items()) total += stage.value("seconds", 0.0);
  manifest["wall_clock_seconds"] = total;
  write_text_atomic(run_paths::manifest(dir), manifest.dump(2) + "\n");
}

}  // namespace

void run_stage(const ExperimentConfig& config, std::string_view stage, const LogFn& log) {
  if (std::find(kStageOrder.begin(), kStageOrder.end(), stage) == kStageOrder.end()) {
    throw ConfigError("unknown stage '" + std::string(stage) + "'");
  }
  Context ctx{config, config.output_dir, log, Json::object(), {}};
  fs::create_directories(ctx.dir);
  Json manifest = load_manifest(config, ctx.dir);
  write_text_atomic(ctx.dir / "config.json", config_to_json(config));

  const auto start = std::chrono::steady_clock::now();
  std::string error;
  try {
    if (stage == "gen") stage_gen(ctx);
    if (stage == "train_diffusion") stage_train_diffusion(ctx);
    if (stage == "train_baseline") train_baseline_common(ctx, false);
    if (stage == "adv_train_baseline") train_baseline_common(ctx, true);
    if (stage == "attack") stage_attack(ctx);
    if (stage == "eval") stage_eval(ctx);
    if (stage == "tm") stage_tm(ctx);
    if (stage == "select") stage_select(ctx);
    if (stage == "report") stage_report(ctx);
  } catch (const std::exception& e) {
    error = e.what();
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json entry;
  entry["status"] = error.empty() ? "ok" : "failed";
  if (!error.empty()) entry["error"] = error;
  entry["seconds"] = seconds;
  entry["metrics"] = ctx.metrics;
  Json files = Json::array();
  for (const auto& f : ctx.files) {
    const std::string rel = fs::relative(f, ctx.dir).generic_string();
    files.push_back(rel);
    if (f.extension() == ".tmdc" && fs::exists(f)) manifest["checkpoints"][rel] = file_sha256(f);
  }
  entry["files"] = files;
  manifest["stages"][std::string(stage)] = entry;
  write_manifest(ctx.dir, manifest);
  if (!error.empty()) throw StageError(std::string(stage), error);
}

fs::path run_experiment(const ExperimentConfig& config, const LogFn& log) {
  config.validate();
  for (const auto& stage : kStageOrder) {
    if (config.has_stage(stage)) run_stage(config, stage, log);
  }
  return config.output_dir;
}

}  // namespace tmdc
