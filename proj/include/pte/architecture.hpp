#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pte {

/// Named layer spec for the reference models.
///
///   mlp(d, h1, ..., hn)  dense ReLU network on d-dimensional feature vectors
///   cnn1d(C, L)          two conv/pool stages + two dense layers on C x L windows
///   cnn2d(H, W, C)       two conv/pool stages + two dense layers on H x W x C images
///
/// The class count is not part of the descriptor; it is supplied separately.
struct Architecture {
  enum class Kind { kMlp, kCnn1d, kCnn2d };

  Kind kind = Kind::kMlp;
  std::vector<int> dims;

  static Architecture parse(std::string_view text);
  std::string to_string() const;

  /// Shape of one input sample (row-major flattening gives the feature order).
  std::vector<int> input_shape() const;
  int input_size() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

}  // namespace pte
