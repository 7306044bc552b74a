#include "tmdc/harness/config.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/rng.hpp"

namespace tmdc {

using Json = nlohmann::ordered_json;

namespace {

/// Strict object reader: every key must be consumed, types must match.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), path_ + "." + key);
  }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const Json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

  template <typename T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

 private:
  std::string where() const { return path_; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto wrap(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void read_attack(Reader& r, AttackConfig& a) {
  std::string kind = to_string(a.kind), norm = to_string(a.norm);
  r.get("kind", kind);
  r.get("norm", norm);
  wrap(r.path(), [&] {
    a.kind = parse_attack_kind(kind);
    a.norm = parse_norm(norm);
    return 0;
  });
  r.get("epsilon", a.epsilon);
  r.get("iters", a.iters);
  r.get("step_size", a.step_size);
  r.get("restarts", a.restarts);
  r.get("random_start", a.random_start);
  r.get("patience", a.patience);
  r.get("stop_on_success", a.stop_on_success);
  r.get("lower", a.lower);
  r.get("upper", a.upper);
}

Json attack_json(const AttackConfig& a) {
  return Json{{"kind", to_string(a.kind)}, {"norm", to_string(a.norm)},
              {"epsilon", a.epsilon},      {"iters", a.iters},
              {"step_size", a.step_size},  {"restarts", a.restarts},
              {"random_start", a.random_start}, {"patience", a.patience},
              {"stop_on_success", a.stop_on_success}, {"lower", a.lower},
              {"upper", a.upper}};
}

void read_baseline_train(Reader& r, BaselineTrainConfig& t) {
  r.get("steps", t.steps);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.learning_rate);
  r.get("log_every", t.log_every);
}

Json baseline_train_json(const BaselineTrainConfig& t) {
  return Json{{"steps", t.steps}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
              {"log_every", t.log_every}};
}

}  // namespace

bool ExperimentConfig::has_stage(std::string_view stage) const {
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

const NamedAttack& ExperimentConfig::attack(std::string_view name) const {
  for (const auto& a : attacks) {
    if (a.name == name) return a;
  }
  throw ConfigError("no attack named '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  for (const auto& s : stages) {
    if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end()) {
      throw ConfigError("stages: unknown stage '" + s + "'");
    }
  }
  wrap("dataset", [&] {
    dataset.validate();
    return 0;
  });
  if (diffusion.timesteps < 2 || !(diffusion.beta_start > 0.0) || diffusion.beta_start > diffusion.beta_end ||
      !(diffusion.beta_end < 1.0)) {
    throw ConfigError("diffusion: need timesteps >= 2 and 0 < beta_start <= beta_end < 1");
  }
  if (diffusion.time_dim % 2 != 0) throw ConfigError("diffusion.time_dim: must be even");
  std::set<std::string> names;
  for (const auto& a : attacks) {
    if (a.name.empty()) throw ConfigError("attacks: every attack needs a name");
    if (!names.insert(a.name).second) throw ConfigError("attacks: duplicate name '" + a.name + "'");
    wrap("attacks." + a.name, [&] {
      a.attack.validate();
      return 0;
    });
    if (a.attack.kind == AttackKind::DirectDiffusion && a.attack.restarts < 1) {
      throw ConfigError("attacks." + a.name + ": restarts must be at least 1");
    }
  }
  if (adv_training.attack.kind != AttackKind::Pgd) throw ConfigError("adv_training.attack.kind: must be pgd");
  wrap("adv_training.attack", [&] {
    adv_training.attack.validate();
    return 0;
  });
  if (eval.k < 1) throw ConfigError("eval.k: must be at least 1");
  if (eval.mode == EvalMode::Staged && !eval.stage_plan.stages.empty()) {
    wrap("eval.stages", [&] {
      eval.stage_plan.validate(dataset.num_classes);
      return 0;
    });
  }
  wrap("tm", [&] {
    tm.run.validate();
    return 0;
  });
  if (has_stage("tm") || has_stage("select")) {
    const auto& a = attack(tm.attack);
    if (a.attack.kind == AttackKind::DirectDiffusion) throw ConfigError("tm.attack: must be a transfer attack");
  }
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.baseline.steps = 2000;
  c.adv_training.train = c.baseline;
  c.adv_training.attack.kind = AttackKind::Pgd;
  c.adv_training.attack.iters = 10;
  AttackConfig f;
  f.kind = AttackKind::Fgsm;
  AttackConfig p;
  p.kind = AttackKind::Pgd;
  AttackConfig r;
  r.kind = AttackKind::PgdRestarts;
  r.restarts = 3;
  c.attacks = {{"fgsm", f}, {"pgd", p}, {"autoattack_lite", r}};
  return c;
}

ExperimentConfig config_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = default_config();
  Reader root(j, "config");

  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;
  root.get("seed", c.seed);
  if (root.has("stages")) {
    const Json& s = root.raw("stages");
    if (!s.is_array()) throw ConfigError("config.stages: expected an array");
    c.stages.clear();
    for (const auto& v : s) c.stages.push_back(Reader::convert<std::string>(v, "config.stages[]"));
  }
  if (root.has("dataset")) {
    Reader r = root.child("dataset");
    BlobSpec& d = c.dataset;
    r.get("num_classes", d.num_classes);
    r.get("dim", d.dim);
    r.get("train_per_class", d.train_per_class);
    r.get("val_per_class", d.val_per_class);
    r.get("test_per_class", d.test_per_class);
    r.get("radius", d.radius);
    r.get("sigma", d.sigma);
    r.get("fine_dims", d.fine_dims);
    r.get("fine_radius", d.fine_radius);
    r.get("fine_sigma", d.fine_sigma);
    r.get("seed", d.seed);
    r.finish();
  }
  if (root.has("diffusion")) {
    Reader r = root.child("diffusion");
    DiffusionSpec& d = c.diffusion;
    r.get("timesteps", d.timesteps);
    r.get("beta_start", d.beta_start);
    r.get("beta_end", d.beta_end);
    r.get("hidden", d.hidden);
    r.get("time_dim", d.time_dim);
    r.get("class_dim", d.class_dim);
    r.get("steps", d.train.steps);
    r.get("batch_size", d.train.batch_size);
    r.get("learning_rate", d.train.learning_rate);
    r.get("log_every", d.train.log_every);
    r.finish();
  }
  if (root.has("baseline")) {
    Reader r = root.child("baseline");
    r.get("hidden", c.baseline_hidden);
    read_baseline_train(r, c.baseline);
    r.finish();
  }
  if (root.has("adv_training")) {
    Reader r = root.child("adv_training");
    read_baseline_train(r, c.adv_training.train);
    if (r.has("attack")) {
      Reader a = r.child("attack");
      read_attack(a, c.adv_training.attack);
      a.finish();
    }
    r.finish();
  }
  if (root.has("attacks")) {
    const Json& list = root.raw("attacks");
    if (!list.is_array()) throw ConfigError("config.attacks: expected an array");
    c.attacks.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      Reader r(list[i], "config.attacks[" + std::to_string(i) + "]");
      NamedAttack a;
      r.get("name", a.name);
      read_attack(r, a.attack);
      r.finish();
      c.attacks.push_back(std::move(a));
    }
  }
  if (root.has("eval")) {
    Reader r = root.child("eval");
    std::string mode = c.eval.mode == EvalMode::Flat ? "flat" : "staged";
    std::string strategy = to_string(c.eval.strategy);
    r.get("mode", mode);
    r.get("k", c.eval.k);
    r.get("strategy", strategy);
    r.get("threads", c.eval.threads);
    if (mode == "flat") {
      c.eval.mode = EvalMode::Flat;
    } else if (mode == "staged") {
      c.eval.mode = EvalMode::Staged;
    } else {
      throw ConfigError("config.eval.mode: expected 'flat' or 'staged'");
    }
    c.eval.strategy = wrap("config.eval.strategy", [&] { return parse_strategy(strategy); });
    if (r.has("stages")) {
      const Json& s = r.raw("stages");
      if (!s.is_array()) throw ConfigError("config.eval.stages: expected an array of [num_timesteps, keep]");
      for (const auto& st : s) {
        if (!st.is_array() || st.size() != 2) {
          throw ConfigError("config.eval.stages: each stage is [num_timesteps, keep]");
        }
        c.eval.stage_plan.stages.push_back({Reader::convert<std::size_t>(st[0], "config.eval.stages[][0]"),
                                            Reader::convert<std::size_t>(st[1], "config.eval.stages[][1]")});
      }
    }
    r.finish();
  }
  if (root.has("tm")) {
    Reader r = root.child("tm");
    TmRunConfig& t = c.tm.run;
    r.get("steps", t.steps);
    r.get("batch_size", t.batch_size);
    r.get("timesteps_per_sample", t.timesteps_per_sample);
    r.get("learning_rate", t.learning_rate);
    r.get("warmup_steps", t.warmup_steps);
    r.get("checkpoint_every", t.checkpoint_every);
    r.get("rank", t.rank);
    r.get("alpha", t.alpha);
    r.get("weight_decay", t.weight_decay);
    r.get("log_every", t.log_every);
    r.get("attack", c.tm.attack);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(text);
}

std::string config_to_json(const ExperimentConfig& c) {
  Json j;
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["stages"] = c.stages;
  const BlobSpec& d = c.dataset;
  j["dataset"] = Json{{"num_classes", d.num_classes},     {"dim", d.dim},
                      {"train_per_class", d.train_per_class}, {"val_per_class", d.val_per_class},
                      {"test_per_class", d.test_per_class},   {"radius", d.radius},
                      {"sigma", d.sigma},                   {"fine_dims", d.fine_dims},
                      {"fine_radius", d.fine_radius},       {"fine_sigma", d.fine_sigma},
                      {"seed", d.seed}};
  const DiffusionSpec& f = c.diffusion;
  j["diffusion"] = Json{{"timesteps", f.timesteps},     {"beta_start", f.beta_start},
                        {"beta_end", f.beta_end},       {"hidden", f.hidden},
                        {"time_dim", f.time_dim},       {"class_dim", f.class_dim},
                        {"steps", f.train.steps},       {"batch_size", f.train.batch_size},
                        {"learning_rate", f.train.learning_rate}, {"log_every", f.train.log_every}};
  Json b = baseline_train_json(c.baseline);
  b["hidden"] = c.baseline_hidden;
  j["baseline"] = b;
  Json adv = baseline_train_json(c.adv_training.train);
  adv["attack"] = attack_json(c.adv_training.attack);
  j["adv_training"] = adv;
  Json attacks = Json::array();
  for (const auto& a : c.attacks) {
    Json e{{"name", a.name}};
    e.update(attack_json(a.attack));
    attacks.push_back(e);
  }
  j["attacks"] = attacks;
  Json stages = Json::array();
  for (const auto& s : c.eval.stage_plan.stages) stages.push_back({s.num_timesteps, s.keep});
  j["eval"] = Json{{"mode", c.eval.mode == EvalMode::Flat ? "flat" : "staged"},
                   {"k", c.eval.k},
                   {"strategy", to_string(c.eval.strategy)},
                   {"stages", stages},
                   {"threads", c.eval.threads}};
  const TmRunConfig& t = c.tm.run;
  j["tm"] = Json{{"steps", t.steps},
                 {"batch_size", t.batch_size},
                 {"timesteps_per_sample", t.timesteps_per_sample},
                 {"learning_rate", t.learning_rate},
                 {"warmup_steps", t.warmup_steps},
                 {"checkpoint_every", t.checkpoint_every},
                 {"rank", t.rank},
                 {"alpha", t.alpha},
                 {"weight_decay", t.weight_decay},
                 {"log_every", t.log_every},
                 {"attack", c.tm.attack}};
  return j.dump(2) + "\n";
}

std::uint64_t component_seed(const ExperimentConfig& config, std::string_view component) {
  return derive_stream(component, config.seed);
}

ExperimentConfig apply_recipe(ExperimentConfig config, std::string_view recipe) {
  auto keep_attacks = [&](std::initializer_list<std::string_view> names) {
    std::vector<NamedAttack> kept;
    for (auto n : names) kept.push_back(config.attack(n));
    config.attacks = kept;
  };
  if (recipe == "table1") {
    config.stages = {"gen", "train_diffusion", "train_baseline", "attack", "eval", "report"};
    keep_attacks({"fgsm", "pgd"});
  } else if (recipe == "table2") {
    config.stages = {"gen", "train_diffusion", "train_baseline", "adv_train_baseline", "attack", "eval", "tm",
                     "select", "report"};
    keep_attacks({"pgd"});
    config.tm.attack = "pgd";
  } else if (recipe == "autoattack") {
    config.stages = {"gen", "train_diffusion", "train_baseline", "attack", "eval", "report"};
    NamedAttack linf = config.attack("autoattack_lite");
    linf.name = "autoattack_lite_linf";
    linf.attack.norm = Norm::LInf;
    NamedAttack l2 = linf;
    l2.name = "autoattack_lite_l2";
    l2.attack.norm = Norm::L2;
    l2.attack.epsilon = 0.25;
    config.attacks = {linf, l2};
  } else if (recipe == "ablations") {
    config.stages = kStageOrder;
  } else {
    throw ConfigError("unknown recipe '" + std::string(recipe) + "' (expected table1, table2, autoattack, ablations)");
  }
  config.validate();
  return config;
}

}  // namespace tmdc
