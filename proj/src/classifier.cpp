#include "pte/classifier.hpp"

#include <cmath>
#include <sstream>

#include "pte/errors.hpp"

namespace pte {
namespace {

Dense make_dense(int in, int out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = Matrix::Zero(out, in);
  d.bias = Matrix::Zero(1, out);
  return d;
}

Conv1d make_conv1d(int in_ch, int out_ch, int kernel, int length) {
  Conv1d c;
  c.in_channels = in_ch;
  c.out_channels = out_ch;
  c.kernel = kernel;
  c.in_length = length;
  c.weight = Matrix::Zero(out_ch, in_ch * kernel);
  c.bias = Matrix::Zero(1, out_ch);
  return c;
}

Conv2d make_conv2d(int h, int w, int in_ch, int out_ch, int kernel) {
  Conv2d c;
  c.height = h;
  c.width = w;
  c.in_channels = in_ch;
  c.out_channels = out_ch;
  c.kernel = kernel;
  c.weight = Matrix::Zero(out_ch, kernel * kernel * in_ch);
  c.bias = Matrix::Zero(1, out_ch);
  return c;
}

std::vector<Layer> reference_layers(const Architecture& arch, int k) {
  std::vector<Layer> layers;
  switch (arch.kind) {
    case Architecture::Kind::kMlp: {
      int width = arch.dims[0];
      for (std::size_t i = 1; i < arch.dims.size(); ++i) {
        layers.emplace_back(make_dense(width, arch.dims[i]));
        layers.emplace_back(Relu{});
        width = arch.dims[i];
      }
      layers.emplace_back(make_dense(width, k));
      break;
    }
    case Architecture::Kind::kCnn1d: {
      const int c = arch.dims[0], len = arch.dims[1];
      auto conv1 = make_conv1d(c, 8, 7, len);
      MaxPool1d pool1{8, conv1.out_length(), 4};
      auto conv2 = make_conv1d(8, 16, 5, pool1.out_length());
      MaxPool1d pool2{16, conv2.out_length(), 4};
      const int flat = 16 * pool2.out_length();
      layers = {conv1, Relu{}, pool1, conv2, Relu{}, pool2,
                make_dense(flat, 64), Relu{}, make_dense(64, k)};
      break;
    }
    case Architecture::Kind::kCnn2d: {
      const int h = arch.dims[0], w = arch.dims[1], c = arch.dims[2];
      auto conv1 = make_conv2d(h, w, c, 8, 3);
      MaxPool2d pool1{conv1.out_height(), conv1.out_width(), 8, 2};
      auto conv2 = make_conv2d(pool1.out_height(), pool1.out_width(), 8, 16, 3);
      MaxPool2d pool2{conv2.out_height(), conv2.out_width(), 16, 2};
      const int flat = pool2.out_height() * pool2.out_width() * 16;
      layers = {conv1, Relu{}, pool1, conv2, Relu{}, pool2,
                make_dense(flat, 64), Relu{}, make_dense(64, k)};
      break;
    }
  }
  return layers;
}

}  // namespace

Classifier::Classifier(Architecture arch, int class_count, std::uint64_t seed, Network net)
    : arch_(std::move(arch)), class_count_(class_count), seed_(seed), net_(std::move(net)) {
  if (net_.output_size() != class_count_)
    throw ConfigError("network output width does not match the class count");
}

Classifier Classifier::snapshot() const {
  Classifier copy = *this;
  copy.frozen_ = true;
  return copy;
}

Network& Classifier::mutable_network() {
  if (frozen_) throw ContractViolation("attempted to modify a frozen classifier");
  return net_;
}

std::uint64_t Classifier::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Matrix* p : net_.parameters())
    h = fnv1a(p->data(), static_cast<std::size_t>(p->size()) * sizeof(double), h);
  return h;
}

Classifier build_reference_model(const Architecture& arch, int class_count, std::uint64_t seed) {
  if (class_count < 2) throw DomainError("a classifier needs at least 2 classes");
  Network net(reference_layers(arch, class_count), arch.input_size());
  net.initialize(seed);
  return Classifier(arch, class_count, seed, std::move(net));
}

std::vector<int> predict(const Classifier& model, const Matrix& batch) {
  const Matrix z = model.logits(batch);
  std::vector<int> labels(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    labels[static_cast<std::size_t>(i)] = argmax_lowest(z.row(i));
  return labels;
}

namespace {

void check_labels(const Classifier& model, const Matrix& x, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw DataError("label count does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= model.class_count()) throw DataError("label out of range");
}

// d CE / d logits = softmax(z) - onehot(y), per row (not averaged).
Matrix ce_logit_grad(const Matrix& z, std::span<const int> labels) {
  Matrix g = softmax_rows(z);
  for (Eigen::Index i = 0; i < z.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  return g;
}

}  // namespace

Vector cross_entropy_losses(const Classifier& model, const Matrix& x, std::span<const int> labels) {
  check_labels(model, x, labels);
  const Matrix z = model.logits(x);
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out(i) = cross_entropy(z.row(i), labels[static_cast<std::size_t>(i)]);
  return out;
}

Matrix input_gradient(const Classifier& model, const Matrix& x, std::span<const int> labels,
                      Vector* losses) {
  check_labels(model, x, labels);
  Tape tape;
  const Matrix z = model.network().forward(x, tape);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (!z.row(i).allFinite()) {
      std::ostringstream os;
      os << "non-finite logits at sample " << i;
      throw NumericalError(os.str());
    }
  }
  if (losses) {
    losses->resize(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      (*losses)(i) = cross_entropy(z.row(i), labels[static_cast<std::size_t>(i)]);
  }
  Matrix g = model.network().backward(tape, ce_logit_grad(z, labels), nullptr);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    if (!g.row(i).allFinite()) {
      std::ostringstream os;
      os << "non-finite input gradient at sample " << i;
      throw NumericalError(os.str());
    }
  }
  return g;
}

LossAndGradients cross_entropy_gradients(const Classifier& model, const Matrix& x,
                                         std::span<const int> labels) {
  check_labels(model, x, labels);
  if (x.rows() == 0) throw DomainError("empty batch");
  Tape tape;
  const Matrix z = model.network().forward(x, tape);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    loss += cross_entropy(z.row(i), labels[static_cast<std::size_t>(i)]);
  const double n = static_cast<double>(x.rows());
  LossAndGradients out{loss / n, model.network().zero_gradients()};
  model.network().backward(tape, ce_logit_grad(z, labels) / n, &out.grads);
  return out;
}

Gradients gradients_from_logit_grad(const Classifier& model, const Matrix& x,
                                    const Matrix& grad_logits) {
  Tape tape;
  model.network().forward(x, tape);
  Gradients g = model.network().zero_gradients();
  model.network().backward(tape, grad_logits, &g);
  return g;
}

void sgd_step(Classifier& model, const Gradients& grads, double lr, double weight_decay) {
  auto params = model.mutable_network().parameters();
  if (params.size() != grads.size()) throw DomainError("gradient layout does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (weight_decay > 0.0) *params[i] -= lr * (grads[i] + 2.0 * weight_decay * *params[i]);
    else *params[i] -= lr * grads[i];
  }
}

double squared_norm(const Classifier& model) {
  double s = 0.0;
  for (const Matrix* p : model.network().parameters()) s += p->squaredNorm();
  return s;
}

}  // namespace pte
