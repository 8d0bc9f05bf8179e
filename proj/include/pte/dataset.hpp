#pragma once

#include <span>
#include <string>
#include <vector>

#include "pte/math.hpp"

namespace pte {

enum class Split { kTrain, kTest };

/// N samples of one fixed shape with labels in [0, K). Immutable after
/// construction. Every read of inputs or labels is recorded in the AccessLog
/// under the dataset's tag.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::vector<int> shape, Matrix inputs, std::vector<int> labels, int class_count,
                 Split split, std::string tag = "");

  const std::vector<int>& shape() const { return shape_; }
  int sample_size() const;
  Eigen::Index size() const { return inputs_.rows(); }
  bool empty() const { return inputs_.rows() == 0; }
  int class_count() const { return class_count_; }
  Split split() const { return split_; }
  const std::string& tag() const { return tag_; }

  const Matrix& inputs() const;
  const std::vector<int>& labels() const;

  /// Rows at `indices` (one logged read).
  Matrix gather(std::span<const Eigen::Index> indices) const;
  std::vector<int> gather_labels(std::span<const Eigen::Index> indices) const;

  /// Copy carrying a different audit tag.
  LabeledDataset retagged(std::string tag) const;

  /// Samples whose label satisfies `keep`, in source order.
  template <typename Pred>
  LabeledDataset filter_labels(Pred keep, std::string tag) const;

 private:
  std::vector<int> shape_;
  Matrix inputs_;
  std::vector<int> labels_;
  int class_count_ = 0;
  Split split_ = Split::kTrain;
  std::string tag_;
};

/// Forget/retain split induced by a forget-class set.
struct ForgetPartition {
  std::vector<int> forget_classes;  // sorted, unique
  LabeledDataset forget_train;      // D_f
  LabeledDataset retain_train;      // D_r
  LabeledDataset forget_test;       // D_ft
  LabeledDataset retain_test;       // D_rt
};

inline constexpr const char* kForgetTrainTag = "forget_train";
inline constexpr const char* kRetainTrainTag = "retain_train";
inline constexpr const char* kForgetTestTag = "forget_test";
inline constexpr const char* kRetainTestTag = "retain_test";

ForgetPartition partition_by_class(const LabeledDataset& train, const LabeledDataset& test,
                                   std::vector<int> forget_classes);

/// Concatenates datasets of the same shape and class count.
LabeledDataset concatenate(const std::vector<const LabeledDataset*>& parts, Split split,
                           std::string tag);

/// Sorted unique labels present in the dataset.
std::vector<int> distinct_labels(const LabeledDataset& data);

/// Batches of indices covering [0, n) in a seeded random order.
std::vector<std::vector<Eigen::Index>> shuffled_batches(Eigen::Index n, int batch_size,
                                                        std::uint64_t seed);

template <typename Pred>
LabeledDataset LabeledDataset::filter_labels(Pred keep, std::string tag) const {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (keep(labels_[i])) idx.push_back(static_cast<Eigen::Index>(i));
  LabeledDataset out;
  out.shape_ = shape_;
  out.inputs_ = inputs_(idx, Eigen::all);
  out.labels_.reserve(idx.size());
  for (auto i : idx) out.labels_.push_back(labels_[static_cast<std::size_t>(i)]);
  out.class_count_ = class_count_;
  out.split_ = split_;
  out.tag_ = std::move(tag);
  return out;
}

}  // namespace pte
