#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hcim/nn.hpp"

namespace hcim {

struct TensorCheck {
  std::string name;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| / max(max|numeric|, max|analytic|); 0 when
  /// both gradients vanish.
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  bool passed() const;
};

/// Central finite differences of `loss` w.r.t. every entry of each tensor,
/// compared with the analytic gradient already stored in ParamRef::grad.
/// `loss` must recompute the scalar from the current tensor values.
GradCheckReport check_gradients(std::span<const ParamRef> params,
                                const std::function<double()>& loss, double step = 1e-4,
                                double tolerance = 1e-4);

}  // namespace hcim
