#include "hcim/optim.hpp"

#include <cmath>

namespace hcim {

void Adam::step(std::span<const ParamRef> params, CostLedger* ledger) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::uint64_t touched = 0;
  for (const auto& p : params) {
    if (p.value->rows() != p.grad->rows() || p.value->cols() != p.grad->cols())
      throw ShapeError("Adam: gradient shape mismatch for " + p.name);
    auto& mom = state_[p.name];
    if (mom.m.rows() != p.value->rows() || mom.m.cols() != p.value->cols()) {
      // New or resized tensor (e.g. a grown output row) restarts its moments.
      mom.m.setZero(p.value->rows(), p.value->cols());
      mom.v.setZero(p.value->rows(), p.value->cols());
    }
    mom.m = cfg_.beta1 * mom.m + (1.0 - cfg_.beta1) * *p.grad;
    mom.v = cfg_.beta2 * mom.v + (1.0 - cfg_.beta2) * p.grad->cwiseAbs2();
    p.value->array() -= cfg_.lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + cfg_.eps);
    touched += static_cast<std::uint64_t>(p.value->size());
  }
  if (ledger != nullptr) ledger->record(EventKind::TrainingUpdate, touched);
}

}  // namespace hcim
