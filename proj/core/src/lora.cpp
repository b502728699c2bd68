#include "hcim/lora.hpp"

#include <cmath>

namespace hcim {

LoRAAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng) {
  if (r == 0 || r > std::min(d, k))
    throw std::invalid_argument("init_adapter: rank " + std::to_string(r) +
                                " must be in [1, min(d, k) = " + std::to_string(std::min(d, k)) + "]");
  LoRAAdapter ad;
  const auto ri = static_cast<Eigen::Index>(r);
  ad.a.resize(ri, static_cast<Eigen::Index>(k));
  const double std = 1.0 / std::sqrt(static_cast<double>(k));
  for (Eigen::Index i = 0; i < ad.a.size(); ++i) ad.a.data()[i] = rng.normal(0.0, std);
  ad.b.setZero(static_cast<Eigen::Index>(d), ri);
  ad.grad_a.setZero(ad.a.rows(), ad.a.cols());
  ad.grad_b.setZero(ad.b.rows(), ad.b.cols());
  return ad;
}

Matrix merge(const LoRAAdapter& adapter) { return adapter.b * adapter.a; }

ParamCount param_count(std::size_t d, std::size_t k, std::size_t r) {
  return {static_cast<std::uint64_t>(d) * k, static_cast<std::uint64_t>(r) * (d + k)};
}

HybridLayer::HybridLayer(std::string name, Matrix weight, Vector bias)
    : name_(std::move(name)), weight_(std::move(weight)), bias_(std::move(bias)) {
  if (bias_.rows() != weight_.rows()) throw ShapeError("HybridLayer " + name_ + ": bias length mismatch");
  extra_w_.setZero(0, weight_.cols());
  extra_b_.setZero(0, 1);
  zero_grad();
}

HybridLayer HybridLayer::random(std::string name, std::size_t in, std::size_t out, Rng& rng,
                                double gain) {
  Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  const double std = gain / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, std);
  return HybridLayer(std::move(name), std::move(w), Vector::Zero(static_cast<Eigen::Index>(out)));
}

void HybridLayer::set_bias(const Vector& b) {
  if (b.size() != bias_.rows()) throw ShapeError("HybridLayer " + name_ + ": bias length mismatch");
  bias_.col(0) = b;
}

Matrix HybridLayer::forward(const Matrix& x, const ExecContext& ctx) {
  if (static_cast<std::size_t>(x.rows()) != in_dim())
    throw ShapeError("HybridLayer " + name_ + ": input has " + std::to_string(x.rows()) +
                     " rows, expected " + std::to_string(in_dim()));
  const auto n = static_cast<std::uint64_t>(x.cols());
  const auto d = static_cast<Eigen::Index>(backbone_rows());
  Matrix y(static_cast<Eigen::Index>(out_dim()), x.cols());

  if (ctx.mode == ForwardMode::Analogue) {
    if (!backbone_ || backbone_->rows() != backbone_rows())
      throw std::logic_error("HybridLayer " + name_ + ": analogue forward before programming");
    if (ctx.converters == nullptr) throw std::invalid_argument("analogue forward needs converters");
    // Per-column events are summed so each layer forward streams one record per kind.
    CostLedger local;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      y.col(j).head(d) = backbone_->mvm(x.col(j), ctx.rng, *ctx.converters, &local);
    if (ctx.ledger != nullptr)
      for (auto kind : {EventKind::AnalogueCellRead, EventKind::DacConversion,
                        EventKind::AdcConversion, EventKind::DigitalMac})
        ctx.ledger->record(kind, local.count(kind));
  } else {
    y.topRows(d).noalias() = weight_ * x;
    if (ctx.ledger != nullptr) ctx.ledger->record(EventKind::DigitalMac, n * backbone_rows() * in_dim());
  }
  y.topRows(d).colwise() += bias_.col(0);

  if (adapter_) {
    ax_cache_ = adapter_->a * x;
    y.topRows(d).noalias() += adapter_->b * ax_cache_;
    if (ctx.ledger != nullptr)
      ctx.ledger->record(EventKind::DigitalMac, n * adapter_->rank() * (in_dim() + backbone_rows()));
  }
  if (extra_rows() > 0) {
    y.bottomRows(extra_w_.rows()) = (extra_w_ * x).colwise() + extra_b_.col(0);
    if (ctx.ledger != nullptr) ctx.ledger->record(EventKind::DigitalMac, n * extra_rows() * in_dim());
  }
  if (ctx.ledger != nullptr) ctx.ledger->record(EventKind::GpuMacBaseline, n * out_dim() * in_dim());

  x_cache_ = x;
  cache_valid_ = true;
  return y;
}

Matrix HybridLayer::backward(const Matrix& dy) {
  if (!cache_valid_) throw StaleCacheError("HybridLayer " + name_ + ": backward without forward");
  if (static_cast<std::size_t>(dy.rows()) != out_dim() || dy.cols() != x_cache_.cols())
    throw ShapeError("HybridLayer " + name_ + ": gradient shape mismatch");
  cache_valid_ = false;
  const auto d = static_cast<Eigen::Index>(backbone_rows());
  const auto dy_main = dy.topRows(d);
  const auto dy_extra = dy.bottomRows(static_cast<Eigen::Index>(extra_rows()));

  if (!frozen_) {
    if (scope_ == TrainScope::Pretrain || scope_ == TrainScope::Full)
      dweight_.noalias() += dy_main * x_cache_.transpose();
    if (scope_ == TrainScope::Pretrain) dbias_ += dy_main.rowwise().sum();
    if (scope_ == TrainScope::Lora && adapter_) {
      adapter_->grad_b.noalias() += dy_main * ax_cache_.transpose();
      adapter_->grad_a.noalias() += (adapter_->b.transpose() * dy_main) * x_cache_.transpose();
    }
    if (extra_rows() > 0 && scope_ != TrainScope::Pretrain)
      dextra_w_.noalias() += dy_extra * x_cache_.transpose();
  }

  Matrix dx = weight_.transpose() * dy_main;
  if (adapter_) dx.noalias() += adapter_->a.transpose() * (adapter_->b.transpose() * dy_main);
  if (extra_rows() > 0) dx.noalias() += extra_w_.transpose() * dy_extra;
  return dx;
}

std::vector<ParamRef> HybridLayer::trainable() {
  std::vector<ParamRef> out;
  if (frozen_) return out;
  if (scope_ == TrainScope::Pretrain || scope_ == TrainScope::Full)
    out.push_back({name_ + ".weight", &weight_, &dweight_});
  if (scope_ == TrainScope::Pretrain) out.push_back({name_ + ".bias", &bias_, &dbias_});
  if (scope_ == TrainScope::Lora && adapter_) {
    out.push_back({name_ + ".lora_a", &adapter_->a, &adapter_->grad_a});
    out.push_back({name_ + ".lora_b", &adapter_->b, &adapter_->grad_b});
  }
  if (extra_rows() > 0 && scope_ != TrainScope::Pretrain)
    out.push_back({name_ + ".extra_weight", &extra_w_, &dextra_w_});
  return out;
}

std::uint64_t HybridLayer::trainable_count(TrainScope scope) const {
  if (frozen_) return 0;
  std::uint64_t n = 0;
  if (scope == TrainScope::Pretrain || scope == TrainScope::Full) n += weight_.size();
  if (scope == TrainScope::Pretrain) n += bias_.size();
  if (scope == TrainScope::Lora && adapter_) n += adapter_->element_count();
  if (extra_rows() > 0 && scope != TrainScope::Pretrain) n += extra_w_.size();
  return n;
}

void HybridLayer::zero_grad() {
  dweight_.setZero(weight_.rows(), weight_.cols());
  dbias_.setZero(bias_.rows(), 1);
  dextra_w_.setZero(extra_w_.rows(), extra_w_.cols());
  if (adapter_) {
    adapter_->grad_a.setZero(adapter_->a.rows(), adapter_->a.cols());
    adapter_->grad_b.setZero(adapter_->b.rows(), adapter_->b.cols());
  }
}

void HybridLayer::attach_adapter(std::size_t rank, Rng& rng) {
  adapter_ = init_adapter(backbone_rows(), in_dim(), rank, rng);
}

const LoRAAdapter& HybridLayer::adapter() const {
  if (!adapter_) throw std::logic_error("HybridLayer " + name_ + ": no adapter attached");
  return *adapter_;
}

LoRAAdapter& HybridLayer::adapter() {
  if (!adapter_) throw std::logic_error("HybridLayer " + name_ + ": no adapter attached");
  return *adapter_;
}

void HybridLayer::add_output_row() {
  extra_w_.conservativeResize(extra_w_.rows() + 1, Eigen::NoChange);
  extra_w_.row(extra_w_.rows() - 1).setZero();
  extra_b_.conservativeResize(extra_b_.rows() + 1, Eigen::NoChange);
  extra_b_(extra_b_.rows() - 1, 0) = 0.0;
  dextra_w_.setZero(extra_w_.rows(), extra_w_.cols());
}

void HybridLayer::fold_extra_rows() {
  if (extra_rows() == 0) return;
  if (adapter_) throw std::logic_error("HybridLayer " + name_ + ": cannot fold rows under an adapter");
  Matrix w(weight_.rows() + extra_w_.rows(), weight_.cols());
  w << weight_, extra_w_;
  Matrix b(bias_.rows() + extra_b_.rows(), 1);
  b << bias_, extra_b_;
  weight_ = std::move(w);
  bias_ = std::move(b);
  extra_w_.setZero(0, weight_.cols());
  extra_b_.setZero(0, 1);
  zero_grad();
}

ProgramReport HybridLayer::program_backbone(double tolerance, Rng& rng, CostLedger* ledger,
                                            const DeviceConfig& device) {
  if (!backbone_) backbone_.emplace(backbone_rows(), in_dim(), device);
  if (backbone_->rows() < backbone_rows()) backbone_->grow_rows(backbone_rows() - backbone_->rows());
  return backbone_->program(weight_, tolerance, rng, ledger);
}

void HybridLayer::program_backbone_ideal(const DeviceConfig& device) {
  if (!backbone_) backbone_.emplace(backbone_rows(), in_dim(), device);
  if (backbone_->rows() < backbone_rows()) backbone_->grow_rows(backbone_rows() - backbone_->rows());
  backbone_->program_ideal(weight_);
}

const AnalogueMatrix& HybridLayer::backbone() const {
  if (!backbone_) throw std::logic_error("HybridLayer " + name_ + ": no analogue backbone");
  return *backbone_;
}

ParamCount HybridLayer::param_count() const {
  ParamCount pc{static_cast<std::uint64_t>(weight_.size()), 0};
  if (adapter_) pc.lora = adapter_->element_count();
  return pc;
}

Matrix HybridLayer::effective_weight() const {
  Matrix w = weight_;
  if (adapter_) w += merge(*adapter_);
  Matrix out(static_cast<Eigen::Index>(out_dim()), weight_.cols());
  out << w, extra_w_;
  return out;
}

}  // namespace hcim
