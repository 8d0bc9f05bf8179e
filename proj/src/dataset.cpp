#include "pte/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "pte/access_log.hpp"
#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {

LabeledDataset::LabeledDataset(std::vector<int> shape, Matrix inputs, std::vector<int> labels,
                               int class_count, Split split, std::string tag)
    : shape_(std::move(shape)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      class_count_(class_count),
      split_(split),
      tag_(std::move(tag)) {
  if (class_count_ < 2) throw DomainError("dataset needs at least 2 classes");
  if (inputs_.rows() == 0) throw DataError("dataset is empty");
  if (inputs_.cols() != sample_size()) throw DataError("input width does not match sample shape");
  if (static_cast<Eigen::Index>(labels_.size()) != inputs_.rows())
    throw DataError("label count does not match sample count");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= class_count_) {
      std::ostringstream os;
      os << "label " << labels_[i] << " of sample " << i << " is outside [0, " << class_count_ << ")";
      throw DataError(os.str());
    }
  }
  for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
    if (!inputs_.row(i).allFinite()) {
      std::ostringstream os;
      os << "sample " << i << " contains a non-finite value";
      throw DataError(os.str());
    }
  }
}

int LabeledDataset::sample_size() const {
  return std::accumulate(shape_.begin(), shape_.end(), 1, std::multiplies<>());
}

const Matrix& LabeledDataset::inputs() const {
  AccessLog::instance().record_read(tag_);
  return inputs_;
}

const std::vector<int>& LabeledDataset::labels() const {
  AccessLog::instance().record_read(tag_);
  return labels_;
}

Matrix LabeledDataset::gather(std::span<const Eigen::Index> indices) const {
  AccessLog::instance().record_read(tag_);
  Matrix out(static_cast<Eigen::Index>(indices.size()), inputs_.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = inputs_.row(indices[i]);
  return out;
}

std::vector<int> LabeledDataset::gather_labels(std::span<const Eigen::Index> indices) const {
  AccessLog::instance().record_read(tag_);
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels_[static_cast<std::size_t>(i)]);
  return out;
}

LabeledDataset LabeledDataset::retagged(std::string tag) const {
  LabeledDataset copy = *this;
  copy.tag_ = std::move(tag);
  return copy;
}

ForgetPartition partition_by_class(const LabeledDataset& train, const LabeledDataset& test,
                                   std::vector<int> forget_classes) {
  if (train.class_count() != test.class_count())
    throw DomainError("train and test class counts differ");
  if (train.shape() != test.shape()) throw DataError("train and test sample shapes differ");
  std::sort(forget_classes.begin(), forget_classes.end());
  forget_classes.erase(std::unique(forget_classes.begin(), forget_classes.end()),
                       forget_classes.end());
  const int k = train.class_count();
  if (forget_classes.empty()) throw DomainError("forget-class set is empty");
  if (static_cast<int>(forget_classes.size()) >= k)
    throw DomainError("forget-class set covers every class; nothing to retain");
  for (int c : forget_classes)
    if (c < 0 || c >= k) throw DomainError("forget class " + std::to_string(c) + " out of range");

  const std::set<int> fc(forget_classes.begin(), forget_classes.end());
  auto in_forget = [&](int y) { return fc.count(y) > 0; };
  auto in_retain = [&](int y) { return fc.count(y) == 0; };

  ForgetPartition p;
  p.forget_classes = forget_classes;
  // Construction through filter_labels preserves source order; an empty part
  // is legal here and rejected later by whichever consumer needs it.
  p.forget_train = train.filter_labels(in_forget, kForgetTrainTag);
  p.retain_train = train.filter_labels(in_retain, kRetainTrainTag);
  p.forget_test = test.filter_labels(in_forget, kForgetTestTag);
  p.retain_test = test.filter_labels(in_retain, kRetainTestTag);
  return p;
}

LabeledDataset concatenate(const std::vector<const LabeledDataset*>& parts, Split split,
                           std::string tag) {
  if (parts.empty()) throw DataError("nothing to concatenate");
  Eigen::Index rows = 0;
  for (const auto* p : parts) {
    if (p->shape() != parts.front()->shape() || p->class_count() != parts.front()->class_count())
      throw DataError("cannot concatenate datasets of different shape or class count");
    rows += p->size();
  }
  Matrix x(rows, parts.front()->sample_size());
  std::vector<int> y;
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    x.middleRows(at, p->size()) = p->inputs();
    const auto& l = p->labels();
    y.insert(y.end(), l.begin(), l.end());
    at += p->size();
  }
  return LabeledDataset(parts.front()->shape(), std::move(x), std::move(y),
                        parts.front()->class_count(), split, std::move(tag));
}

std::vector<int> distinct_labels(const LabeledDataset& data) {
  std::set<int> s(data.labels().begin(), data.labels().end());
  return {s.begin(), s.end()};
}

std::vector<std::vector<Eigen::Index>> shuffled_batches(Eigen::Index n, int batch_size,
                                                        std::uint64_t seed) {
  if (batch_size < 1) throw DomainError("batch size must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Eigen::Index>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace pte
