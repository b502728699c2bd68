#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "hcim/model.hpp"

namespace hcim {

struct MixerConfig {
  std::size_t image_size = 64;
  std::size_t patch = 8;
  std::size_t channels = 64;
  std::size_t token_hidden = 32;
  std::size_t channel_hidden = 64;
  std::size_t blocks = 2;
  std::size_t classes = 4;
  Activation activation = Activation::Gelu;
  /// Init gain of the second dense layer in every mixing MLP.
  double residual_gain = 0.5;

  std::size_t tokens() const { return (image_size / patch) * (image_size / patch); }
  std::size_t patch_dim() const { return patch * patch; }
  void validate() const;
  /// Closed-form count of weights and biases.
  std::uint64_t parameter_count() const;
};

void to_json(nlohmann::json& j, const MixerConfig& c);
void from_json(const nlohmann::json& j, MixerConfig& c);

/// Per-patch dense -> blocks of (token MLP on the transposed features +
/// residual, channel MLP + residual) -> mean over tokens -> dense head.
/// Inputs are row-major image_size^2 pixel columns.
class MixerClassifier final : public Classifier {
 public:
  MixerClassifier(const MixerConfig& cfg, Rng& rng);

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<MixerClassifier>(*this); }
  std::string kind() const override { return "mixer"; }
  std::size_t input_dim() const override { return cfg_.image_size * cfg_.image_size; }
  Matrix forward(const Matrix& x, const ExecContext& ctx) override;
  void backward(const Matrix& dlogits) override;
  const Matrix& embedding() const override { return pooled_; }
  std::vector<HybridLayer*> layers() override;
  HybridLayer& head() override { return head_; }

  const MixerConfig& config() const { return cfg_; }

  /// images (pixels x n) -> patches (patch_dim x tokens*n), token-major per image.
  Matrix patchify(const Matrix& x) const;

 private:
  struct Block {
    HybridLayer token1, token2, channel1, channel2;
    Matrix tok_pre, ch_pre;  // pre-activations
  };

  MixerConfig cfg_;
  HybridLayer embed_;
  std::vector<Block> blocks_;
  HybridLayer head_;
  std::size_t batch_ = 0;
  Matrix pooled_;
};

}  // namespace hcim
