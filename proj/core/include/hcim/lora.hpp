#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcim/crossbar.hpp"
#include "hcim/nn.hpp"
#include "hcim/tensor.hpp"

namespace hcim {

/// Low-rank branch: delta W = B * A, with A (r x k), B (d x r). No alpha/r
/// scaling is applied.
struct LoRAAdapter {
  Matrix a;  // r x k
  Matrix b;  // d x r
  Matrix grad_a, grad_b;

  std::size_t rank() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t element_count() const { return static_cast<std::size_t>(a.size() + b.size()); }
};

/// A ~ N(0, 1/sqrt(k)) entrywise, B = 0, so the adapted layer starts out
/// identical to its backbone. Throws for r == 0 or r > min(d, k).
LoRAAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng);

/// B * A. Analysis and export only; never written to the array.
Matrix merge(const LoRAAdapter& adapter);

struct ParamCount {
  std::uint64_t full = 0;  // d * k
  std::uint64_t lora = 0;  // r * (d + k)

  ParamCount& operator+=(const ParamCount& o) {
    full += o.full;
    lora += o.lora;
    return *this;
  }
};

ParamCount param_count(std::size_t d, std::size_t k, std::size_t r);

/// A dense layer whose backbone weight W0 can live on an analogue crossbar
/// while an optional LoRA adapter, the bias and any rows added after
/// pretraining live in digital memory:
///
///   y_main  = backbone(W0, x) + B (A x) + b
///   y_extra = E x + b_e             (rows appended by add_output_row)
///
/// backbone() is the crossbar MVM in analogue mode and `weight() * x` in
/// digital mode. Backward passes always use the digital weights.
class HybridLayer {
 public:
  HybridLayer(std::string name, Matrix weight, Vector bias);
  /// Random init: W ~ N(0, (gain / sqrt(in))^2), zero bias.
  static HybridLayer random(std::string name, std::size_t in, std::size_t out, Rng& rng,
                            double gain = 1.0);

  const std::string& name() const { return name_; }
  std::size_t in_dim() const { return static_cast<std::size_t>(weight_.cols()); }
  std::size_t backbone_rows() const { return static_cast<std::size_t>(weight_.rows()); }
  std::size_t extra_rows() const { return static_cast<std::size_t>(extra_w_.rows()); }
  std::size_t out_dim() const { return backbone_rows() + extra_rows(); }

  /// Columns of `x` are independent inputs.
  Matrix forward(const Matrix& x, const ExecContext& ctx);
  /// Accumulates gradients permitted by the current scope; returns dL/dx.
  Matrix backward(const Matrix& dy);

  void set_scope(TrainScope scope) { scope_ = scope; }
  TrainScope scope() const { return scope_; }
  /// Frozen layers never receive parameter gradients (reservoir weights).
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  std::vector<ParamRef> trainable();
  void zero_grad();

  void attach_adapter(std::size_t rank, Rng& rng);
  bool has_adapter() const { return adapter_.has_value(); }
  const LoRAAdapter& adapter() const;
  LoRAAdapter& adapter();

  /// Appends one digital output row (zero weights, zero frozen bias).
  void add_output_row();
  /// Moves the digital extra rows into the backbone weight (full-parameter
  /// deployment of a grown head).
  void fold_extra_rows();

  /// Programs the current digital weights onto the crossbar, creating it on
  /// first use and growing it when rows were folded in.
  ProgramReport program_backbone(double tolerance, Rng& rng, CostLedger* ledger,
                                 const DeviceConfig& device);
  /// Reference programming with no pulses (tests and oracles).
  void program_backbone_ideal(const DeviceConfig& device);

  bool has_backbone() const { return backbone_.has_value(); }
  const AnalogueMatrix& backbone() const;

  const Matrix& weight() const { return weight_; }
  Matrix& mutable_weight() { return weight_; }
  Vector bias() const { return bias_.col(0); }
  void set_bias(const Vector& b);
  const Matrix& extra_weight() const { return extra_w_; }
  Matrix& mutable_extra_weight() { return extra_w_; }

  /// (d*k, r*(d+k)) for the backbone block; lora is 0 without an adapter.
  ParamCount param_count() const;
  /// Scalars that the given scope trains.
  std::uint64_t trainable_count(TrainScope scope) const;

  /// Effective digital weight W0 + BA (extra rows appended).
  Matrix effective_weight() const;

 private:
  std::string name_;
  Matrix weight_;
  Matrix bias_;  // d x 1
  Matrix dweight_;
  Matrix dbias_;
  std::optional<LoRAAdapter> adapter_;
  Matrix extra_w_;
  Matrix extra_b_;
  Matrix dextra_w_;
  std::optional<AnalogueMatrix> backbone_;
  TrainScope scope_ = TrainScope::Pretrain;
  bool frozen_ = false;

  Matrix x_cache_;
  Matrix ax_cache_;
  bool cache_valid_ = false;
};

}  // namespace hcim
