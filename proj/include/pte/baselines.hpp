#pragma once

#include <span>
#include <vector>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"
#include "pte/training.hpp"

namespace pte {

/// Fresh model trained on D_r only. Throws ContractViolation if D_r holds a
/// forget-class label.
Classifier retrain(const Architecture& arch, int class_count, const LabeledDataset& retain_set,
                   std::span<const int> forget_classes, const TrainConfig& cfg,
                   std::uint64_t init_seed);

/// Continues cross-entropy training of the original model on D_r.
Classifier finetune(const Classifier& model, const LabeledDataset& retain_set,
                    std::span<const int> forget_classes, const TrainConfig& cfg);

/// Uniformly random non-forget label for each forget sample.
std::vector<int> random_non_forget_labels(std::span<const int> forget_classes, int class_count,
                                          std::size_t n, std::uint64_t seed);

/// Fine-tunes on D_f relabeled with random non-forget classes.
Classifier random_label_unlearn(const Classifier& model, const LabeledDataset& forget_set,
                                const TrainConfig& cfg, std::uint64_t seed);

struct GradientAscentResult {
  Classifier model;
  std::vector<double> epoch_forget_loss;  // mean CE on D_f after each epoch
  bool diverged = false;
  std::string report;
};

/// SGD on the negated cross-entropy over D_f. Stops early once the mean forget
/// loss exceeds `divergence_cap`.
GradientAscentResult gradient_ascent_unlearn(const Classifier& model,
                                             const LabeledDataset& forget_set,
                                             const TrainConfig& cfg,
                                             double divergence_cap = 50.0);

}  // namespace pte
