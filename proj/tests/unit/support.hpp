#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"
#include "pte/generators.hpp"
#include "pte/training.hpp"

namespace pte::testing {

/// Softmax regression z = W x + b as an mlp(d) classifier. W is K x d.
inline Classifier linear_model(const Matrix& w, const RowVector& b) {
  Classifier m = build_reference_model(Architecture::parse("mlp(" + std::to_string(w.cols()) + ")"),
                                       static_cast<int>(w.rows()), 0);
  auto params = m.mutable_network().parameters();
  *params[0] = w;
  *params[1] = b;
  return m;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

struct TrainedBlobs {
  LabeledDataset train;
  LabeledDataset test;
  Classifier model;
};

/// 6-class blobs and an MLP trained on them; built once per process.
inline const TrainedBlobs& trained_blobs() {
  static const TrainedBlobs fixture = [] {
    auto [train, test] = generate_blobs(6, 200, 2, 6.0, 0);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.05;
    Classifier model = train_supervised(
        build_reference_model(Architecture::parse("mlp(2,64,64)"), 6, 0), train, cfg);
    return TrainedBlobs{train, test, model};
  }();
  return fixture;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("pte_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace pte::testing
