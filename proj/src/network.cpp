#include "pte/network.hpp"

#include <algorithm>
#include <cmath>

#include "pte/errors.hpp"

namespace pte {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int layer_output_size(const Layer& layer, int in) {
  return std::visit(Overloaded{
                        [](const Dense& d) { return d.out; },
                        [in](const Relu&) { return in; },
                        [](const Conv1d& c) { return c.out_channels * c.out_length(); },
                        [](const MaxPool1d& p) { return p.channels * p.out_length(); },
                        [](const Conv2d& c) {
                          return c.out_height() * c.out_width() * c.out_channels;
                        },
                        [](const MaxPool2d& p) {
                          return p.out_height() * p.out_width() * p.channels;
                        },
                    },
                    layer);
}

// ---- Dense ----------------------------------------------------------------

Matrix forward_layer(const Dense& d, const Matrix& x, Tape::Entry* e) {
  if (e) e->input = x;
  Matrix y = x * d.weight.transpose();
  y.rowwise() += d.bias.row(0);
  return y;
}

Matrix backward_layer(const Dense& d, const Tape::Entry& e, const Matrix& gy, Matrix* gw,
                      Matrix* gb) {
  if (gw) {
    gw->noalias() += gy.transpose() * e.input;
    *gb += gy.colwise().sum();
  }
  return gy * d.weight;
}

// ---- ReLU -----------------------------------------------------------------

Matrix forward_layer(const Relu&, const Matrix& x, Tape::Entry* e) {
  if (e) e->input = x;
  return x.cwiseMax(0.0);
}

Matrix backward_layer(const Relu&, const Tape::Entry& e, const Matrix& gy) {
  return Matrix((e.input.array() > 0.0).select(gy.array(), 0.0));
}

// ---- Conv1d ---------------------------------------------------------------

Matrix im2col_1d(const Conv1d& c, const double* x) {
  const int lo = c.out_length();
  Matrix cols(lo, c.in_channels * c.kernel);
  for (int ch = 0; ch < c.in_channels; ++ch) {
    const double* row = x + static_cast<std::ptrdiff_t>(ch) * c.in_length;
    for (int t = 0; t < lo; ++t)
      for (int j = 0; j < c.kernel; ++j) cols(t, ch * c.kernel + j) = row[t + j];
  }
  return cols;
}

Matrix forward_layer(const Conv1d& c, const Matrix& x, Tape::Entry* e) {
  const int lo = c.out_length();
  Matrix y(x.rows(), c.out_channels * lo);
  if (e) e->columns.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    Matrix cols = im2col_1d(c, x.row(b).data());
    Matrix out = cols * c.weight.transpose();  // lo x out_channels
    out.rowwise() += c.bias.row(0);
    // channel-major output: y(o, t) = out(t, o)
    Eigen::Map<Matrix> yb(y.row(b).data(), c.out_channels, lo);
    yb = out.transpose();
    if (e) e->columns[static_cast<std::size_t>(b)] = std::move(cols);
  }
  return y;
}

Matrix backward_layer(const Conv1d& c, const Tape::Entry& e, const Matrix& gy, Matrix* gw,
                      Matrix* gb) {
  const int lo = c.out_length();
  Matrix gx = Matrix::Zero(gy.rows(), c.in_channels * c.in_length);
  for (Eigen::Index b = 0; b < gy.rows(); ++b) {
    Eigen::Map<const Matrix> gyb(gy.row(b).data(), c.out_channels, lo);
    const Matrix& cols = e.columns[static_cast<std::size_t>(b)];
    if (gw) {
      gw->noalias() += gyb * cols;
      *gb += gyb.rowwise().sum().transpose();
    }
    Matrix gcols = gyb.transpose() * c.weight;  // lo x (in_channels * kernel)
    double* gxb = gx.row(b).data();
    for (int ch = 0; ch < c.in_channels; ++ch) {
      double* row = gxb + static_cast<std::ptrdiff_t>(ch) * c.in_length;
      for (int t = 0; t < lo; ++t)
        for (int j = 0; j < c.kernel; ++j) row[t + j] += gcols(t, ch * c.kernel + j);
    }
  }
  return gx;
}

// ---- MaxPool1d ------------------------------------------------------------

Matrix forward_layer(const MaxPool1d& p, const Matrix& x, Tape::Entry* e) {
  const int lo = p.out_length();
  Matrix y(x.rows(), p.channels * lo);
  if (e) e->argmax.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (int ch = 0; ch < p.channels; ++ch) {
      for (int t = 0; t < lo; ++t) {
        int best = ch * p.in_length + t * p.size;
        for (int j = 1; j < p.size; ++j) {
          const int idx = ch * p.in_length + t * p.size + j;
          if (x(b, idx) > x(b, best)) best = idx;
        }
        const int o = ch * lo + t;
        y(b, o) = x(b, best);
        if (e) e->argmax[static_cast<std::size_t>(b * y.cols() + o)] = best;
      }
    }
  }
  return y;
}

Matrix backward_pool(const Tape::Entry& e, const Matrix& gy, int in_size) {
  Matrix gx = Matrix::Zero(gy.rows(), in_size);
  for (Eigen::Index b = 0; b < gy.rows(); ++b)
    for (Eigen::Index o = 0; o < gy.cols(); ++o)
      gx(b, e.argmax[static_cast<std::size_t>(b * gy.cols() + o)]) += gy(b, o);
  return gx;
}

// ---- Conv2d ---------------------------------------------------------------

Matrix im2col_2d(const Conv2d& c, const double* x) {
  const int ho = c.out_height(), wo = c.out_width(), k = c.kernel, ci = c.in_channels;
  Matrix cols(ho * wo, k * k * ci);
  for (int i = 0; i < ho; ++i)
    for (int j = 0; j < wo; ++j)
      for (int di = 0; di < k; ++di)
        for (int dj = 0; dj < k; ++dj) {
          const double* src = x + ((i + di) * c.width + (j + dj)) * ci;
          for (int ch = 0; ch < ci; ++ch) cols(i * wo + j, (di * k + dj) * ci + ch) = src[ch];
        }
  return cols;
}

Matrix forward_layer(const Conv2d& c, const Matrix& x, Tape::Entry* e) {
  const int npos = c.out_height() * c.out_width();
  Matrix y(x.rows(), npos * c.out_channels);
  if (e) e->columns.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    Matrix cols = im2col_2d(c, x.row(b).data());
    Eigen::Map<Matrix> yb(y.row(b).data(), npos, c.out_channels);  // H x W x C layout
    yb = cols * c.weight.transpose();
    yb.rowwise() += c.bias.row(0);
    if (e) e->columns[static_cast<std::size_t>(b)] = std::move(cols);
  }
  return y;
}

Matrix backward_layer(const Conv2d& c, const Tape::Entry& e, const Matrix& gy, Matrix* gw,
                      Matrix* gb) {
  const int ho = c.out_height(), wo = c.out_width(), k = c.kernel, ci = c.in_channels;
  Matrix gx = Matrix::Zero(gy.rows(), c.height * c.width * ci);
  for (Eigen::Index b = 0; b < gy.rows(); ++b) {
    Eigen::Map<const Matrix> gyb(gy.row(b).data(), ho * wo, c.out_channels);
    const Matrix& cols = e.columns[static_cast<std::size_t>(b)];
    if (gw) {
      gw->noalias() += gyb.transpose() * cols;
      *gb += gyb.colwise().sum();
    }
    Matrix gcols = gyb * c.weight;
    double* gxb = gx.row(b).data();
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j)
        for (int di = 0; di < k; ++di)
          for (int dj = 0; dj < k; ++dj) {
            double* dst = gxb + ((i + di) * c.width + (j + dj)) * ci;
            for (int ch = 0; ch < ci; ++ch) dst[ch] += gcols(i * wo + j, (di * k + dj) * ci + ch);
          }
  }
  return gx;
}

// ---- MaxPool2d ------------------------------------------------------------

Matrix forward_layer(const MaxPool2d& p, const Matrix& x, Tape::Entry* e) {
  const int ho = p.out_height(), wo = p.out_width(), ch = p.channels;
  Matrix y(x.rows(), ho * wo * ch);
  if (e) e->argmax.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j)
        for (int c = 0; c < ch; ++c) {
          int best = ((i * p.size) * p.width + j * p.size) * ch + c;
          for (int di = 0; di < p.size; ++di)
            for (int dj = 0; dj < p.size; ++dj) {
              const int idx = ((i * p.size + di) * p.width + (j * p.size + dj)) * ch + c;
              if (x(b, idx) > x(b, best)) best = idx;
            }
          const int o = (i * wo + j) * ch + c;
          y(b, o) = x(b, best);
          if (e) e->argmax[static_cast<std::size_t>(b * y.cols() + o)] = best;
        }
  return y;
}

void init_weight(Matrix& w, int fan_in, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
}

}  // namespace

Network::Network(std::vector<Layer> layers, int input_size)
    : layers_(std::move(layers)), input_size_(input_size) {
  int size = input_size_;
  for (const auto& layer : layers_) {
    const int expected = std::visit(
        Overloaded{
            [](const Dense& d) { return d.in; },
            [size](const Relu&) { return size; },
            [](const Conv1d& c) { return c.in_channels * c.in_length; },
            [](const MaxPool1d& p) { return p.channels * p.in_length; },
            [](const Conv2d& c) { return c.height * c.width * c.in_channels; },
            [](const MaxPool2d& p) { return p.height * p.width * p.channels; },
        },
        layer);
    if (expected != size) throw ConfigError("layer input size does not match previous layer");
    size = layer_output_size(layer, size);
    if (size <= 0) throw ConfigError("layer produces an empty output");
  }
}

int Network::output_size() const {
  int size = input_size_;
  for (const auto& layer : layers_) size = layer_output_size(layer, size);
  return size;
}

Matrix Network::forward(const Matrix& x) const {
  if (x.cols() != input_size_) throw DataError("input width does not match the network");
  Matrix h = x;
  for (const auto& layer : layers_)
    h = std::visit([&](const auto& l) { return forward_layer(l, h, nullptr); }, layer);
  return h;
}

Matrix Network::forward_prefix(const Matrix& x, std::size_t layer_count) const {
  if (x.cols() != input_size_) throw DataError("input width does not match the network");
  Matrix h = x;
  for (std::size_t i = 0; i < std::min(layer_count, layers_.size()); ++i)
    h = std::visit([&](const auto& l) { return forward_layer(l, h, nullptr); }, layers_[i]);
  return h;
}

Matrix Network::forward(const Matrix& x, Tape& tape) const {
  if (x.cols() != input_size_) throw DataError("input width does not match the network");
  tape.entries.assign(layers_.size(), {});
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    h = std::visit([&](const auto& l) { return forward_layer(l, h, &tape.entries[i]); },
                   layers_[i]);
  return h;
}

Matrix Network::backward(const Tape& tape, const Matrix& grad_logits, Gradients* grads) const {
  // parameter slots are laid out in layer order, two per parametric layer
  std::vector<std::size_t> slot(layers_.size(), 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    slot[i] = next;
    if (std::holds_alternative<Dense>(layers_[i]) || std::holds_alternative<Conv1d>(layers_[i]) ||
        std::holds_alternative<Conv2d>(layers_[i]))
      next += 2;
  }

  Matrix g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& e = tape.entries[i];
    Matrix* gw = grads ? &(*grads)[slot[i]] : nullptr;
    Matrix* gb = grads ? &(*grads)[slot[i] + 1] : nullptr;
    g = std::visit(Overloaded{
                       [&](const Dense& d) { return backward_layer(d, e, g, gw, gb); },
                       [&](const Relu& r) { return backward_layer(r, e, g); },
                       [&](const Conv1d& c) { return backward_layer(c, e, g, gw, gb); },
                       [&](const MaxPool1d& p) {
                         return backward_pool(e, g, p.channels * p.in_length);
                       },
                       [&](const Conv2d& c) { return backward_layer(c, e, g, gw, gb); },
                       [&](const MaxPool2d& p) {
                         return backward_pool(e, g, p.height * p.width * p.channels);
                       },
                   },
                   layers_[i]);
  }
  return g;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    std::visit(Overloaded{
                   [&](const Dense&) {
                     names.push_back(prefix + ".dense.weight");
                     names.push_back(prefix + ".dense.bias");
                   },
                   [&](const Conv1d&) {
                     names.push_back(prefix + ".conv1d.weight");
                     names.push_back(prefix + ".conv1d.bias");
                   },
                   [&](const Conv2d&) {
                     names.push_back(prefix + ".conv2d.weight");
                     names.push_back(prefix + ".conv2d.bias");
                   },
                   [](const auto&) {},
               },
               layers_[i]);
  }
  return names;
}

std::vector<Matrix*> Network::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_)
    std::visit(Overloaded{
                   [&](Dense& d) { out.insert(out.end(), {&d.weight, &d.bias}); },
                   [&](Conv1d& c) { out.insert(out.end(), {&c.weight, &c.bias}); },
                   [&](Conv2d& c) { out.insert(out.end(), {&c.weight, &c.bias}); },
                   [](auto&) {},
               },
               layer);
  return out;
}

std::vector<const Matrix*> Network::parameters() const {
  auto mut = const_cast<Network*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const Matrix* p : parameters()) g.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

void Network::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    std::visit(Overloaded{
                   [&](Dense& d) {
                     init_weight(d.weight, d.in, rng);
                     d.bias.setZero();
                   },
                   [&](Conv1d& c) {
                     init_weight(c.weight, c.in_channels * c.kernel, rng);
                     c.bias.setZero();
                   },
                   [&](Conv2d& c) {
                     init_weight(c.weight, c.kernel * c.kernel * c.in_channels, rng);
                     c.bias.setZero();
                   },
                   [](auto&) {},
               },
               layers_[i]);
  }
}

}  // namespace pte
