#include "hcim/nn.hpp"

#include <cmath>
#include <numbers>

namespace hcim {

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::Gelu;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Gelu: return "gelu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

namespace {

// Exact GELU: x * Phi(x).
double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Matrix activate(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::Gelu: return pre.unaryExpr([](double x) { return gelu(x); });
    case Activation::Relu: return pre.cwiseMax(0.0);
    case Activation::Tanh: return pre.array().tanh().matrix();
  }
  throw std::logic_error("activate: bad kind");
}

Matrix activation_backward(Activation a, const Matrix& pre, const Matrix& upstream) {
  switch (a) {
    case Activation::Gelu:
      return upstream.cwiseProduct(pre.unaryExpr([](double x) { return gelu_grad(x); }));
    case Activation::Relu:
      return upstream.cwiseProduct(pre.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    case Activation::Tanh: {
      const Matrix t = pre.array().tanh().matrix();
      return upstream.cwiseProduct((1.0 - t.array().square()).matrix());
    }
  }
  throw std::logic_error("activation_backward: bad kind");
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

LossGrad softmax_cross_entropy(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("softmax_cross_entropy: label out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  LossGrad out;
  out.loss = lse - logits(label);
  out.dlogits = (logits.array() - lse).exp().matrix();
  out.dlogits(label) -= 1.0;
  return out;
}

DenseAffine::DenseAffine(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : name_(std::move(name)) {
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  w_.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index i = 0; i < w_.size(); ++i) w_.data()[i] = rng.normal(0.0, std);
  b_.setZero(static_cast<Eigen::Index>(out), 1);
  zero_grad();
}

DenseAffine::DenseAffine(std::string name, Matrix w, Vector b)
    : name_(std::move(name)), w_(std::move(w)), b_(std::move(b)) {
  if (b_.rows() != w_.rows()) throw ShapeError("DenseAffine: bias length mismatch");
  zero_grad();
}

Matrix DenseAffine::forward(const Matrix& x) {
  if (x.rows() != w_.cols()) throw ShapeError("DenseAffine " + name_ + ": input shape mismatch");
  x_cache_ = x;
  cache_valid_ = true;
  return (w_ * x).colwise() + b_.col(0);
}

Matrix DenseAffine::backward(const Matrix& dy) {
  if (!cache_valid_) throw StaleCacheError("DenseAffine " + name_ + ": backward without forward");
  if (dy.rows() != w_.rows() || dy.cols() != x_cache_.cols())
    throw ShapeError("DenseAffine " + name_ + ": gradient shape mismatch");
  cache_valid_ = false;
  dw_.noalias() += dy * x_cache_.transpose();
  db_ += dy.rowwise().sum();
  return w_.transpose() * dy;
}

void DenseAffine::zero_grad() {
  dw_.setZero(w_.rows(), w_.cols());
  db_.setZero(b_.rows(), 1);
}

std::vector<ParamRef> DenseAffine::params() {
  return {{name_ + ".weight", &w_, &dw_}, {name_ + ".bias", &b_, &db_}};
}

LIFState LIFState::zeros(std::size_t n, double decay, double threshold) {
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("LIF decay must be in [0, 1)");
  return {Vector::Zero(static_cast<Eigen::Index>(n)), decay, threshold};
}

LIFStep lif_step(LIFState state, const Vector& current) {
  if (current.size() != state.membrane.size()) throw ShapeError("lif_step: current size mismatch");
  state.membrane = state.decay * state.membrane + current;
  Vector spikes = (state.membrane.array() >= state.threshold).cast<double>().matrix();
  state.membrane -= state.threshold * spikes;
  return {std::move(state), std::move(spikes)};
}

}  // namespace hcim
