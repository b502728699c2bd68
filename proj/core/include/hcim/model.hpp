#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hcim/lora.hpp"
#include "hcim/nn.hpp"

namespace hcim {

/// A classifier built from HybridLayers. Inputs are column batches of
/// flattened examples; forward returns logits (classes x batch).
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::unique_ptr<Classifier> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;

  virtual Matrix forward(const Matrix& x, const ExecContext& ctx) = 0;
  /// Propagates d loss / d logits of the last forward into layer gradients.
  virtual void backward(const Matrix& dlogits) = 0;
  /// Penultimate activations of the last forward (features x batch).
  virtual const Matrix& embedding() const = 0;

  virtual std::vector<HybridLayer*> layers() = 0;
  std::vector<const HybridLayer*> layers() const;
  virtual HybridLayer& head() = 0;
  const HybridLayer& head() const { return const_cast<Classifier*>(this)->head(); }

  std::size_t num_classes() const { return head().out_dim(); }
  HybridLayer* find_layer(const std::string& name);

  void set_scope(TrainScope scope);
  void zero_grad();
  std::vector<ParamRef> trainable();
  std::uint64_t trainable_count(TrainScope scope) const;

  /// Attaches rank-r adapters to the named layers, or to every non-frozen
  /// layer when `mask` is empty. Unknown names throw.
  void attach_adapters(std::size_t rank, Rng& rng, const std::vector<std::string>& mask = {});
  bool has_adapters() const;
  /// One new digital output row on the head.
  void add_class() { head().add_output_row(); }

  /// Sums over layers carrying adapters: (sum d*k, sum r*(d+k)).
  ParamCount adapted_param_count() const;
  /// Scalars a fully fine-tuned model trains (weights of non-frozen layers
  /// and extra rows).
  std::uint64_t full_param_count() const { return trainable_count(TrainScope::Full); }

  /// Checksums over every backbone shadow and conductance map.
  std::uint64_t backbone_checksum() const;
  std::uint64_t shadow_checksum() const;
};

/// Stack of dense layers with one activation between them; the last layer
/// is the head. Used for toy problems and gradient checks.
class MlpClassifier final : public Classifier {
 public:
  /// dims = {in, h1, ..., classes}
  MlpClassifier(const std::vector<std::size_t>& dims, Activation act, Rng& rng);

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<MlpClassifier>(*this); }
  std::string kind() const override { return "mlp"; }
  std::size_t input_dim() const override { return layers_.front().in_dim(); }
  Matrix forward(const Matrix& x, const ExecContext& ctx) override;
  void backward(const Matrix& dlogits) override;
  const Matrix& embedding() const override { return embed_; }
  std::vector<HybridLayer*> layers() override;
  HybridLayer& head() override { return layers_.back(); }

 private:
  std::vector<HybridLayer> layers_;
  Activation act_;
  std::vector<Matrix> pre_;
  Matrix embed_;
};

}  // namespace hcim
