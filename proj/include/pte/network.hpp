#pragma once

// Small differentiable layer stack used by the reference classifiers.
// A batch is a row-major B x D matrix; each row is one sample flattened in
// its natural order (C x L channel-major for signals, H x W x C for images).

#include <string>
#include <variant>
#include <vector>

#include "pte/math.hpp"
#include "pte/rng.hpp"

namespace pte {

struct Dense {
  int in = 0, out = 0;
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

struct Relu {};

/// Valid 1D convolution, stride 1, on channel-major C x L input.
struct Conv1d {
  int in_channels = 0, out_channels = 0, kernel = 0, in_length = 0;
  Matrix weight;  // out_channels x (in_channels * kernel)
  Matrix bias;    // 1 x out_channels
  int out_length() const { return in_length - kernel + 1; }
};

/// Non-overlapping max pool along the length of a channel-major C x L input.
struct MaxPool1d {
  int channels = 0, in_length = 0, size = 2;
  int out_length() const { return in_length / size; }
};

/// Valid 2D convolution, stride 1, on H x W x C input.
struct Conv2d {
  int height = 0, width = 0, in_channels = 0, out_channels = 0, kernel = 0;
  Matrix weight;  // out_channels x (kernel * kernel * in_channels)
  Matrix bias;    // 1 x out_channels
  int out_height() const { return height - kernel + 1; }
  int out_width() const { return width - kernel + 1; }
};

/// Non-overlapping size x size max pool on H x W x C input.
struct MaxPool2d {
  int height = 0, width = 0, channels = 0, size = 2;
  int out_height() const { return height / size; }
  int out_width() const { return width / size; }
};

using Layer = std::variant<Dense, Relu, Conv1d, MaxPool1d, Conv2d, MaxPool2d>;

/// Per-layer intermediates kept for the backward pass.
struct Tape {
  struct Entry {
    Matrix input;
    std::vector<Matrix> columns;      // im2col buffers, one per sample (conv layers)
    std::vector<int> argmax;          // winning flat input index (pool layers)
  };
  std::vector<Entry> entries;
};

/// Gradients aligned with Network::parameter_names().
using Gradients = std::vector<Matrix>;

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers, int input_size);

  int input_size() const { return input_size_; }
  int output_size() const;
  const std::vector<Layer>& layers() const { return layers_; }

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;

  /// Activations after the first `layer_count` layers.
  Matrix forward_prefix(const Matrix& x, std::size_t layer_count) const;

  /// Backpropagates d(loss)/d(logits). Accumulates parameter gradients into
  /// `grads` when non-null (it must come from zero_gradients()). Returns
  /// d(loss)/d(input).
  Matrix backward(const Tape& tape, const Matrix& grad_logits, Gradients* grads) const;

  std::vector<std::string> parameter_names() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  Gradients zero_gradients() const;
  std::size_t parameter_count() const;

  /// He-normal weights, zero biases, from a deterministic stream.
  void initialize(std::uint64_t seed);

 private:
  std::vector<Layer> layers_;
  int input_size_ = 0;
};

}  // namespace pte
