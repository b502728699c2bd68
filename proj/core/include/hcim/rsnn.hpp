#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "hcim/model.hpp"
#include "hcim/spikes.hpp"

namespace hcim {

struct RsnnConfig {
  std::size_t channels = 32;
  std::size_t hidden = 128;
  /// Width of the dense layer between spike counts and head; 0 feeds the
  /// counts straight into the head.
  std::size_t readout_hidden = 64;
  std::size_t classes = 4;
  double decay = 0.8;
  double threshold = 1.0;
  double spectral_radius = 0.9;
  double input_gain = 1.0;
  Activation activation = Activation::Gelu;

  void validate() const;
};

void to_json(nlohmann::json& j, const RsnnConfig& c);
void from_json(const nlohmann::json& j, RsnnConfig& c);

/// Largest |eigenvalue| of a square matrix.
double spectral_radius(const Matrix& w);

/// Dense input projection and a recurrent LIF reservoir (both frozen) run
/// over the T windows; spike counts per unit, divided by T, feed a trainable
/// readout. Inputs are columns of channels x T counts (index t * C + c).
class RsnnClassifier final : public Classifier {
 public:
  RsnnClassifier(const RsnnConfig& cfg, Rng& rng);

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<RsnnClassifier>(*this); }
  std::string kind() const override { return "rsnn"; }
  std::size_t input_dim() const override { return cfg_.channels * kSpikeWindows; }
  Matrix forward(const Matrix& x, const ExecContext& ctx) override;
  void backward(const Matrix& dlogits) override;
  const Matrix& embedding() const override { return embed_; }
  std::vector<HybridLayer*> layers() override;
  HybridLayer& head() override { return head_; }

  const RsnnConfig& config() const { return cfg_; }
  const Matrix& spike_rates() const { return rates_; }
  HybridLayer& input_projection() { return input_; }
  HybridLayer& reservoir() { return reservoir_; }

 private:
  RsnnConfig cfg_;
  HybridLayer input_;
  HybridLayer reservoir_;
  std::optional<HybridLayer> readout_;
  HybridLayer head_;
  Matrix rates_;
  Matrix readout_pre_;
  Matrix embed_;
};

}  // namespace hcim
