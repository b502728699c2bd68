#include "hcim/model.hpp"

#include <array>
#include <stdexcept>

namespace hcim {

std::vector<const HybridLayer*> Classifier::layers() const {
  const auto mutable_layers = const_cast<Classifier*>(this)->layers();
  return {mutable_layers.begin(), mutable_layers.end()};
}

HybridLayer* Classifier::find_layer(const std::string& name) {
  for (auto* l : layers())
    if (l->name() == name) return l;
  return nullptr;
}

void Classifier::set_scope(TrainScope scope) {
  for (auto* l : layers()) l->set_scope(scope);
}

void Classifier::zero_grad() {
  for (auto* l : layers()) l->zero_grad();
}

std::vector<ParamRef> Classifier::trainable() {
  std::vector<ParamRef> out;
  for (auto* l : layers()) {
    auto p = l->trainable();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::uint64_t Classifier::trainable_count(TrainScope scope) const {
  std::uint64_t n = 0;
  for (const auto* l : layers()) n += l->trainable_count(scope);
  return n;
}

void Classifier::attach_adapters(std::size_t rank, Rng& rng, const std::vector<std::string>& mask) {
  std::vector<HybridLayer*> chosen;
  if (mask.empty()) {
    for (auto* l : layers())
      if (!l->frozen()) chosen.push_back(l);
  } else {
    for (const auto& name : mask) {
      auto* l = find_layer(name);
      if (l == nullptr) throw std::invalid_argument("attach_adapters: no layer named " + name);
      chosen.push_back(l);
    }
  }
  for (auto* l : chosen) {
    Rng stream = rng.split(l->name());
    l->attach_adapter(rank, stream);
  }
}

bool Classifier::has_adapters() const {
  for (const auto* l : layers())
    if (l->has_adapter()) return true;
  return false;
}

ParamCount Classifier::adapted_param_count() const {
  ParamCount pc;
  for (const auto* l : layers())
    if (l->has_adapter()) pc += l->param_count();
  return pc;
}

namespace {

std::uint64_t combine(const std::vector<std::uint64_t>& parts) {
  return fnv1a64(std::as_bytes(std::span(parts)));
}

}  // namespace

std::uint64_t Classifier::backbone_checksum() const {
  std::vector<std::uint64_t> parts;
  for (const auto* l : layers()) {
    if (!l->has_backbone()) continue;
    parts.push_back(l->backbone().conductance_checksum());
    parts.push_back(l->backbone().shadow_checksum());
  }
  return combine(parts);
}

std::uint64_t Classifier::shadow_checksum() const {
  std::vector<std::uint64_t> parts;
  for (const auto* l : layers()) parts.push_back(checksum(l->weight()));
  return combine(parts);
}

MlpClassifier::MlpClassifier(const std::vector<std::size_t>& dims, Activation act, Rng& rng)
    : act_(act) {
  if (dims.size() < 2) throw std::invalid_argument("MlpClassifier needs at least two dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Rng stream = rng.split(i);
    layers_.push_back(HybridLayer::random("dense" + std::to_string(i), dims[i], dims[i + 1], stream));
  }
}

Matrix MlpClassifier::forward(const Matrix& x, const ExecContext& ctx) {
  pre_.clear();
  Matrix h = x;
  embed_ = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].forward(h, ctx);
    if (i + 1 == layers_.size()) return z;
    pre_.push_back(z);
    h = activate(act_, z);
    if (i + 2 == layers_.size()) embed_ = h;
  }
  return h;
}

void MlpClassifier::backward(const Matrix& dlogits) {
  Matrix g = dlogits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i].backward(g);
    if (i > 0) g = activation_backward(act_, pre_[i - 1], g);
  }
}

std::vector<HybridLayer*> MlpClassifier::layers() {
  std::vector<HybridLayer*> out;
  for (auto& l : layers_) out.push_back(&l);
  return out;
}

}  // namespace hcim
