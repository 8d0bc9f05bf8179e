#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"

namespace pte {

/// Mini-batch SGD settings. The seed fixes batch order; initialization is
/// fixed by the model's own seed.
struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.1;
  int batch_size = 32;
  double weight_decay = 1e-4;  // coefficient of the L2 penalty ||w||^2
  std::uint64_t seed = 0;

  void validate() const;
  /// Stable text form used for hashing and manifests.
  std::string canonical() const;
  std::string hash() const;
};

struct TrainHistory {
  double initial_loss = 0.0;       // full-data objective before the first step
  std::vector<double> epoch_loss;  // full-data objective after each epoch
  std::vector<double> epoch_ce;    // cross-entropy part only
};

/// Full-data objective: mean cross-entropy + weight_decay * ||w||^2.
double training_objective(const Classifier& model, const LabeledDataset& data, double weight_decay,
                          double* ce_out = nullptr);

/// Minimizes mean cross-entropy + weight_decay * ||w||^2 with mini-batch SGD.
Classifier train_supervised(Classifier model, const LabeledDataset& data, const TrainConfig& cfg,
                            TrainHistory* history = nullptr);

}  // namespace pte
