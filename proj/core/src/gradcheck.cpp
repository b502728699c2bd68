#include "hcim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hcim {

bool GradCheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.passed; });
}

GradCheckReport check_gradients(std::span<const ParamRef> params,
                                const std::function<double()>& loss, double step,
                                double tolerance) {
  GradCheckReport report;
  for (const auto& p : params) {
    Matrix numeric(p.value->rows(), p.value->cols());
    for (Eigen::Index i = 0; i < p.value->size(); ++i) {
      double& v = p.value->data()[i];
      const double saved = v;
      v = saved + step;
      const double up = loss();
      v = saved - step;
      const double down = loss();
      v = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    TensorCheck tc;
    tc.name = p.name;
    const Matrix& analytic = *p.grad;
    tc.max_abs_error = (analytic - numeric).cwiseAbs().maxCoeff();
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), analytic.cwiseAbs().maxCoeff());
    tc.max_rel_error = scale > 1e-12 ? tc.max_abs_error / scale : 0.0;
    tc.passed = tc.max_rel_error <= tolerance;
    report.tensors.push_back(tc);
  }
  return report;
}

}  // namespace hcim
