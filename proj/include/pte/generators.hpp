#pragma once

#include <cstdint>
#include <utility>

#include "pte/dataset.hpp"

namespace pte {

using TrainTestPair = std::pair<LabeledDataset, LabeledDataset>;

/// Unit-covariance Gaussian clusters. Class means sit on a circle in the first
/// two coordinates, with adjacent means exactly `separation` apart. Each class
/// is split 80/20 into train/test.
TrainTestPair generate_blobs(int class_count, int n_per_class, int dim, double separation,
                             std::uint64_t seed);

struct SignalParams {
  double base_frequency = 0.01;  // cycles per sample for class 0
  double noise_std = 0.5;
};

/// Class k is a sum of sinusoids at f_k = f0 * (1 + k / K) and its 2nd and 3rd
/// harmonics, with class-specific harmonic amplitudes and a random phase per
/// sample, plus Gaussian noise. Samples are C x L, channel-major.
TrainTestPair generate_synthetic_signals(int class_count, int n_per_class, int channels,
                                         int length, std::uint64_t seed,
                                         const SignalParams& params = {});

/// Stratified split sizes used by both generators: round(0.8 n), clamped to [1, n-1].
int stratified_train_count(int n_per_class);

}  // namespace pte
