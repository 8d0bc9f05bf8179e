#include "pte/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {
namespace {

struct Accumulator {
  Matrix train_x, test_x;
  std::vector<int> train_y, test_y;
  Eigen::Index train_at = 0, test_at = 0;

  Accumulator(int k, int n, int width) {
    const int ntr = stratified_train_count(n);
    train_x.resize(static_cast<Eigen::Index>(k) * ntr, width);
    test_x.resize(static_cast<Eigen::Index>(k) * (n - ntr), width);
  }
};

}  // namespace

int stratified_train_count(int n_per_class) {
  const int n = static_cast<int>(std::lround(0.8 * n_per_class));
  return std::clamp(n, 1, n_per_class - 1);
}

TrainTestPair generate_blobs(int class_count, int n_per_class, int dim, double separation,
                             std::uint64_t seed) {
  if (class_count < 2) throw DomainError("blobs need K >= 2");
  if (n_per_class < 2) throw DomainError("blobs need at least 2 samples per class");
  if (dim < 2) throw DomainError("blobs need dim >= 2");
  if (!(separation > 0.0)) throw DomainError("blob separation must be positive");

  const double radius = separation / (2.0 * std::sin(std::numbers::pi / class_count));
  const int ntr = stratified_train_count(n_per_class);
  Accumulator acc(class_count, n_per_class, dim);
  for (int k = 0; k < class_count; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double angle = 2.0 * std::numbers::pi * k / class_count;
    RowVector mean = RowVector::Zero(dim);
    mean(0) = radius * std::cos(angle);
    mean(1) = radius * std::sin(angle);
    for (int i = 0; i < n_per_class; ++i) {
      RowVector x(dim);
      for (int d = 0; d < dim; ++d) x(d) = mean(d) + normal(rng);
      if (i < ntr) {
        acc.train_x.row(acc.train_at++) = x;
        acc.train_y.push_back(k);
      } else {
        acc.test_x.row(acc.test_at++) = x;
        acc.test_y.push_back(k);
      }
    }
  }
  return {LabeledDataset({dim}, std::move(acc.train_x), std::move(acc.train_y), class_count,
                         Split::kTrain, "train"),
          LabeledDataset({dim}, std::move(acc.test_x), std::move(acc.test_y), class_count,
                         Split::kTest, "test")};
}

TrainTestPair generate_synthetic_signals(int class_count, int n_per_class, int channels,
                                         int length, std::uint64_t seed,
                                         const SignalParams& params) {
  if (class_count < 2) throw DomainError("signals need K >= 2");
  if (n_per_class < 2) throw DomainError("signals need at least 2 samples per class");
  if (channels < 1) throw DomainError("signals need at least 1 channel");
  if (length < 64) throw DomainError("signal length must be >= 64");
  if (!(params.base_frequency > 0.0) || !(params.noise_std >= 0.0))
    throw DomainError("bad signal generator parameters");

  const int ntr = stratified_train_count(n_per_class);
  const int width = channels * length;
  Accumulator acc(class_count, n_per_class, width);
  for (int k = 0; k < class_count; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    const double f = params.base_frequency * (1.0 + static_cast<double>(k) / class_count);
    // harmonic pattern: bit 0 of k raises the 2nd harmonic, bit 1 the 3rd
    const double a2 = (k & 1) ? 0.8 : 0.2;
    const double a3 = (k & 2) ? 0.6 : 0.1;
    for (int i = 0; i < n_per_class; ++i) {
      const double phase = phase_dist(rng);
      RowVector x(width);
      for (int c = 0; c < channels; ++c) {
        const double shift = phase + c * std::numbers::pi / 4.0;
        const double gain = 1.0 / (1.0 + 0.25 * c);
        for (int t = 0; t < length; ++t) {
          const double w = 2.0 * std::numbers::pi * f * t;
          const double clean = std::sin(w + shift) + a2 * std::sin(2.0 * w + 2.0 * shift) +
                               a3 * std::sin(3.0 * w + 3.0 * shift);
          x(c * length + t) = gain * clean + params.noise_std * noise(rng);
        }
      }
      if (i < ntr) {
        acc.train_x.row(acc.train_at++) = x;
        acc.train_y.push_back(k);
      } else {
        acc.test_x.row(acc.test_at++) = x;
        acc.test_y.push_back(k);
      }
    }
  }
  return {LabeledDataset({channels, length}, std::move(acc.train_x), std::move(acc.train_y),
                         class_count, Split::kTrain, "train"),
          LabeledDataset({channels, length}, std::move(acc.test_x), std::move(acc.test_y),
                         class_count, Split::kTest, "test")};
}

}  // namespace pte
