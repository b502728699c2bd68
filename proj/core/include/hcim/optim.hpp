#pragma once

#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "hcim/ledger.hpp"
#include "hcim/nn.hpp"

namespace hcim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with per-tensor moment state keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every tensor in `params` and records one
  /// training-update event per scalar touched (zero gradients included).
  void step(std::span<const ParamRef> params, CostLedger* ledger = nullptr);

  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, Moments> state_;
  long t_ = 0;
};

}  // namespace hcim
