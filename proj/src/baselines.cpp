#include "pte/baselines.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {
namespace {

void reject_forget_labels(const LabeledDataset& retain_set, std::span<const int> forget_classes) {
  const std::set<int> fc(forget_classes.begin(), forget_classes.end());
  const auto& y = retain_set.labels();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (fc.count(y[i])) {
      std::ostringstream os;
      os << "retain set sample " << i << " carries forget-class label " << y[i];
      throw ContractViolation(os.str());
    }
  }
}

}  // namespace

Classifier retrain(const Architecture& arch, int class_count, const LabeledDataset& retain_set,
                   std::span<const int> forget_classes, const TrainConfig& cfg,
                   std::uint64_t init_seed) {
  if (retain_set.empty()) throw DataError("retain set is empty");
  reject_forget_labels(retain_set, forget_classes);
  return train_supervised(build_reference_model(arch, class_count, init_seed), retain_set, cfg);
}

Classifier finetune(const Classifier& model, const LabeledDataset& retain_set,
                    std::span<const int> forget_classes, const TrainConfig& cfg) {
  if (retain_set.empty()) throw DataError("retain set is empty");
  reject_forget_labels(retain_set, forget_classes);
  Classifier m = model;
  m.set_frozen(false);
  return train_supervised(std::move(m), retain_set, cfg);
}

std::vector<int> random_non_forget_labels(std::span<const int> forget_classes, int class_count,
                                          std::size_t n, std::uint64_t seed) {
  const std::set<int> fc(forget_classes.begin(), forget_classes.end());
  std::vector<int> pool;
  for (int k = 0; k < class_count; ++k)
    if (!fc.count(k)) pool.push_back(k);
  if (pool.empty()) throw DomainError("no non-forget class to relabel into");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<int> out(n);
  for (auto& y : out) y = pool[pick(rng)];
  return out;
}

Classifier random_label_unlearn(const Classifier& model, const LabeledDataset& forget_set,
                                const TrainConfig& cfg, std::uint64_t seed) {
  if (forget_set.empty()) throw DomainError("forget set is empty");
  const auto forget_classes = distinct_labels(forget_set);
  auto labels = random_non_forget_labels(forget_classes, model.class_count(),
                                         static_cast<std::size_t>(forget_set.size()), seed);
  const LabeledDataset relabeled(forget_set.shape(), forget_set.inputs(), std::move(labels),
                                 forget_set.class_count(), forget_set.split(), forget_set.tag());
  Classifier m = model;
  m.set_frozen(false);
  return train_supervised(std::move(m), relabeled, cfg);
}

GradientAscentResult gradient_ascent_unlearn(const Classifier& model,
                                             const LabeledDataset& forget_set,
                                             const TrainConfig& cfg, double divergence_cap) {
  cfg.validate();
  if (forget_set.empty()) throw DomainError("forget set is empty");
  GradientAscentResult out{model, {}, false, ""};
  out.model.set_frozen(false);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch :
         shuffled_batches(forget_set.size(), cfg.batch_size, derive_seed(cfg.seed, epoch))) {
      const Matrix x = forget_set.gather(batch);
      const auto y = forget_set.gather_labels(batch);
      auto lg = cross_entropy_gradients(out.model, x, y);
      for (auto& g : lg.grads) g = -g;
      sgd_step(out.model, lg.grads, cfg.learning_rate, cfg.weight_decay);
    }
    const double loss = cross_entropy_losses(out.model, forget_set.inputs(), forget_set.labels()).mean();
    out.epoch_forget_loss.push_back(loss);
    if (!std::isfinite(loss) || loss > divergence_cap) {
      std::ostringstream os;
      os << "forget loss " << loss << " exceeded cap " << divergence_cap << " after epoch " << epoch;
      out.diverged = true;
      out.report = os.str();
      break;
    }
  }
  return out;
}

}  // namespace pte
