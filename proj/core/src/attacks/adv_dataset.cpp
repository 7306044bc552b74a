#include "tmdc/attacks/adv_dataset.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {

namespace {

constexpr std::size_t kAttackBatch = 128;

LabeledDataset with_samples(const LabeledDataset& source, std::vector<double> samples, const std::string& split) {
  LabeledDataset out;
  out.dim = source.dim;
  out.num_classes = source.num_classes;
  out.samples = std::move(samples);
  out.labels = source.labels;
  out.split = split;
  return out;
}

}  // namespace

AdvDataset gen_adv_dataset(const DiscriminativeModel& surrogate, const LabeledDataset& source,
                           const AttackConfig& config, std::string surrogate_hash) {
  config.validate();
  if (config.kind == AttackKind::DirectDiffusion) throw Error("gen_adv_dataset: direct_diffusion is not a transfer attack");
  if (source.dim != surrogate.dim()) throw ShapeError("gen_adv_dataset: dataset dimension differs from surrogate");
  const DiscriminativeModel frozen = [&] {
    DiscriminativeModel m = surrogate.clone();
    m.set_trainable(false);
    return m;
  }();
  const LossGradFn grad = cross_entropy_gradient(frozen);
  std::vector<double> out(source.samples.size());
  for (std::size_t first = 0, b = 0; first < source.size(); first += kAttackBatch, ++b) {
    const std::size_t count = std::min(kAttackBatch, source.size() - first);
    const Tensor x = source.batch(first, count);
    const std::span<const int> y(source.labels.data() + first, count);
    RngStream stream(config.seed, derive_stream("gen_adv", b));
    const Tensor adv = run_attack(grad, x, y, config, stream);
    std::copy(adv.values().begin(), adv.values().end(), out.begin() + static_cast<std::ptrdiff_t>(first * source.dim));
  }
  AdvDataset result{with_samples(source, std::move(out), source.split + "_adv"),
                    AdvProvenance{config, std::move(surrogate_hash), source.split}};
  check_adv_contract(source, result.data, config);
  return result;
}

void check_adv_contract(const LabeledDataset& source, const LabeledDataset& perturbed, const AttackConfig& config) {
  if (source.size() != perturbed.size() || source.dim != perturbed.dim) {
    throw Error("adversarial set is not aligned with its source");
  }
  if (perturbed.samples.size() != perturbed.size() * perturbed.dim) {
    throw Error("adversarial set has " + std::to_string(perturbed.samples.size()) + " values for " +
                std::to_string(perturbed.size()) + " samples");
  }
  if (perturbed.labels != source.labels) throw Error("adversarial set changes labels of its source");
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto a = source.sample(i), b = perturbed.sample(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < source.dim; ++j) {
      if (b[j] < config.lower || b[j] > config.upper) {
        throw Error("adversarial sample " + std::to_string(i) + " leaves the data bounds");
      }
      const double d = std::abs(a[j] - b[j]);
      acc = config.norm == Norm::LInf ? std::max(acc, d) : acc + d * d;
    }
    const double n = config.norm == Norm::LInf ? acc : std::sqrt(acc);
    if (n > config.epsilon + 1e-9) {
      throw Error("adversarial sample " + std::to_string(i) + " has perturbation norm " + std::to_string(n) +
                  " above epsilon");
    }
  }
}

Tensor direct_attack_diffusion(const Denoiser& model, const NoiseSchedule& sched, const McPlan& plan,
                               std::span<const double> x, int y, const AttackConfig& config, RngStream& stream) {
  const std::size_t c = model.config().num_classes;
  std::vector<int> labels(c);
  for (std::size_t l = 0; l < c; ++l) labels[l] = static_cast<int>(l);

  LossGradFn grad = [&](const Tensor& point, std::span<const int> ys) {
    Tape tape;
    TapeScope scope(tape);
    Tensor input = point.detach();
    input.set_requires_grad(true);
    const Tensor losses = class_losses_tensor(model, input, plan, labels, sched);
    const Tensor logits = ops::reshape(ops::scale(losses, -1.0), Shape{1, c});
    const Tensor ce = ops::cross_entropy(logits, ys);
    tape.backward(ce);
    LossGrad out;
    out.grad = Tensor(input.shape(), std::vector<double>(input.grad().begin(), input.grad().end()));
    out.loss = {ce.item()};
    out.predicted = {static_cast<int>(argmin_first(losses.values()))};
    return out;
  };

  AttackConfig pgd_config = config;
  pgd_config.kind = config.restarts > 1 ? AttackKind::PgdRestarts : AttackKind::Pgd;
  const Tensor start(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end()));
  const int ys[1] = {y};
  return run_attack(grad, start, ys, pgd_config, stream);
}

AdvDataset direct_attack_dataset(const Denoiser& model, const NoiseSchedule& sched, const LabeledDataset& source,
                                 const AttackConfig& config, std::size_t k) {
  config.validate();
  Denoiser frozen = model.clone();
  frozen.set_trainable(false, false);
  std::vector<double> out(source.samples.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto x = source.sample(i);
    RngStream stream = sample_stream(config.seed, x);
    const McPlan plan = make_mc_plan(sched, k, source.dim, TimestepStrategy::EvenlySpaced, stream);
    const Tensor adv = direct_attack_diffusion(frozen, sched, plan, x, source.labels[i], config, stream);
    std::copy(adv.values().begin(), adv.values().end(), out.begin() + static_cast<std::ptrdiff_t>(i * source.dim));
  }
  AdvProvenance prov{config, "", source.split};
  prov.attack.kind = AttackKind::DirectDiffusion;
  AdvDataset result{with_samples(source, std::move(out), source.split + "_direct"), prov};
  check_adv_contract(source, result.data, config);
  return result;
}

std::string provenance_to_json(const AdvProvenance& p) {
  const AttackConfig& a = p.attack;
  nlohmann::ordered_json j;
  j["attack"] = {{"kind", to_string(a.kind)},
                 {"norm", to_string(a.norm)},
                 {"epsilon", a.epsilon},
                 {"iters", a.iters},
                 {"step_size", a.effective_step()},
                 {"restarts", a.restarts},
                 {"seed", a.seed},
                 {"random_start", a.random_start},
                 {"patience", a.patience},
                 {"stop_on_success", a.stop_on_success},
                 {"lower", a.lower},
                 {"upper", a.upper}};
  j["surrogate_hash"] = p.surrogate_hash;
  j["source_split"] = p.source_split;
  return j.dump(2) + "\n";
}

AdvProvenance provenance_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& a = j.at("attack");
    AdvProvenance p;
    p.attack.kind = parse_attack_kind(a.at("kind").get<std::string>());
    p.attack.norm = parse_norm(a.at("norm").get<std::string>());
    p.attack.epsilon = a.at("epsilon").get<double>();
    p.attack.iters = a.at("iters").get<std::size_t>();
    p.attack.step_size = a.at("step_size").get<double>();
    p.attack.restarts = a.at("restarts").get<std::size_t>();
    p.attack.seed = a.at("seed").get<std::uint64_t>();
    p.attack.random_start = a.at("random_start").get<bool>();
    p.attack.patience = a.at("patience").get<std::size_t>();
    p.attack.stop_on_success = a.at("stop_on_success").get<bool>();
    p.attack.lower = a.at("lower").get<double>();
    p.attack.upper = a.at("upper").get<double>();
    p.surrogate_hash = j.at("surrogate_hash").get<std::string>();
    p.source_split = j.at("source_split").get<std::string>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("provenance record: ") + e.what());
  }
}

std::filesystem::path provenance_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_adv_dataset(const std::filesystem::path& csv_path, const AdvDataset& adv) {
  write_dataset_csv(csv_path, adv.data);
  write_text_atomic(provenance_path(csv_path), provenance_to_json(adv.provenance));
}

AdvDataset read_adv_dataset(const std::filesystem::path& csv_path, std::size_t num_classes) {
  AdvDataset adv;
  adv.provenance = provenance_from_json(read_text(provenance_path(csv_path)));
  adv.data = read_dataset_csv(csv_path, num_classes, adv.provenance.source_split + "_adv");
  return adv;
}

}  // namespace tmdc
