#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hcim/crossbar.hpp"
#include "hcim/ledger.hpp"
#include "hcim/rng.hpp"
#include "hcim/tensor.hpp"

namespace hcim {

enum class ForwardMode { Digital, Analogue };

/// What a forward pass runs on. Analogue mode needs `rng` (read noise) and
/// `converters`; `ledger` is optional and meters inference events.
struct ExecContext {
  ForwardMode mode = ForwardMode::Digital;
  Rng* rng = nullptr;
  const ConverterConfig* converters = nullptr;
  CostLedger* ledger = nullptr;
};

/// Which tensors receive gradients.
///   Pretrain: weights and biases of every non-frozen layer.
///   Full:     weights (and added output rows) of every non-frozen layer.
///   Lora:     adapter matrices A, B and added output rows only.
enum class TrainScope { Pretrain, Full, Lora };

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

enum class Activation { Gelu, Relu, Tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

Matrix activate(Activation a, const Matrix& pre);
/// upstream * f'(pre), elementwise.
Matrix activation_backward(Activation a, const Matrix& pre, const Matrix& upstream);

Vector softmax(const Vector& logits);

struct LossGrad {
  double loss = 0.0;
  Vector dlogits;  // d loss / d logits = softmax(z) - onehot(label)
};

LossGrad softmax_cross_entropy(const Vector& logits, int label);

/// Plain digital affine layer y = W x + b over column batches.
class DenseAffine {
 public:
  DenseAffine(std::string name, std::size_t in, std::size_t out, Rng& rng);
  DenseAffine(std::string name, Matrix w, Vector b);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);

  void zero_grad();
  std::vector<ParamRef> params();

  const std::string& name() const { return name_; }
  Matrix& weight() { return w_; }
  Matrix bias_matrix() const { return b_; }

 private:
  std::string name_;
  Matrix w_, b_;  // b_ is out x 1
  Matrix dw_, db_;
  Matrix x_cache_;
  bool cache_valid_ = false;
};

/// Leaky integrate-and-fire population with subtract-threshold reset.
struct LIFState {
  Vector membrane;
  double decay = 0.8;  // alpha in [0, 1); 0 gives a memoryless threshold unit
  double threshold = 1.0;

  static LIFState zeros(std::size_t n, double decay, double threshold);
};

struct LIFStep {
  LIFState state;
  Vector spikes;  // 0/1
};

/// membrane <- decay * membrane + current; spike where membrane >= threshold;
/// spiking units subtract the threshold.
LIFStep lif_step(LIFState state, const Vector& current);

}  // namespace hcim
