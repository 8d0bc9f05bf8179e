#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pte/architecture.hpp"
#include "pte/network.hpp"

namespace pte {

/// A differentiable K-way classifier. Houses the original weights w0, the
/// edited weights, and frozen teacher snapshots.
class Classifier {
 public:
  Classifier() = default;
  Classifier(Architecture arch, int class_count, std::uint64_t seed, Network net);

  const Architecture& architecture() const { return arch_; }
  int class_count() const { return class_count_; }
  std::uint64_t seed() const { return seed_; }
  bool frozen() const { return frozen_; }

  const std::string& train_config_hash() const { return train_config_hash_; }
  void set_train_config_hash(std::string h) { train_config_hash_ = std::move(h); }

  /// Frozen copy with identical outputs.
  Classifier snapshot() const;

  /// B x K logits.
  Matrix logits(const Matrix& x) const { return net_.forward(x); }

  const Network& network() const { return net_; }
  /// Mutable access for optimizers. Throws ContractViolation on a frozen model.
  Network& mutable_network();

  /// FNV-1a over every parameter's bytes.
  std::uint64_t checksum() const;

  // used by the checkpoint loader
  void set_frozen(bool f) { frozen_ = f; }

 private:
  Architecture arch_;
  int class_count_ = 0;
  std::uint64_t seed_ = 0;
  bool frozen_ = false;
  std::string train_config_hash_;
  Network net_;
};

/// Builds one of the reference architectures with deterministic He init.
Classifier build_reference_model(const Architecture& arch, int class_count, std::uint64_t seed);

/// Row-wise argmax of the logits, lowest index on ties.
std::vector<int> predict(const Classifier& model, const Matrix& batch);

/// Per-row gradient of CE(f(x_i), y_i) with respect to x_i. When `losses` is
/// non-null it receives the per-row cross-entropy at x.
Matrix input_gradient(const Classifier& model, const Matrix& x, std::span<const int> labels,
                      Vector* losses = nullptr);

/// Per-row cross-entropy losses.
Vector cross_entropy_losses(const Classifier& model, const Matrix& x, std::span<const int> labels);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Mean cross-entropy over the batch and its parameter gradients.
LossAndGradients cross_entropy_gradients(const Classifier& model, const Matrix& x,
                                         std::span<const int> labels);

/// Parameter gradients for an arbitrary d(loss)/d(logits).
Gradients gradients_from_logit_grad(const Classifier& model, const Matrix& x,
                                    const Matrix& grad_logits);

/// w <- w - lr * (g + 2 * weight_decay * w)
void sgd_step(Classifier& model, const Gradients& grads, double lr, double weight_decay = 0.0);

/// Sum of squared parameters.
double squared_norm(const Classifier& model);

}  // namespace pte
