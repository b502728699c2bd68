#include "hcim/rsnn.hpp"

#include <cmath>
#include <Eigen/Eigenvalues>

namespace hcim {

void RsnnConfig::validate() const {
  if (channels == 0 || hidden == 0 || classes == 0) throw std::invalid_argument("rsnn: dims must be positive");
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("rsnn: decay must be in [0, 1)");
  if (!(threshold > 0.0)) throw std::invalid_argument("rsnn: threshold must be > 0");
  if (!(spectral_radius >= 0.0)) throw std::invalid_argument("rsnn: spectral_radius must be >= 0");
}

void to_json(nlohmann::json& j, const RsnnConfig& c) {
  j = {{"channels", c.channels},   {"hidden", c.hidden},
       {"readout_hidden", c.readout_hidden}, {"classes", c.classes},
       {"decay", c.decay},         {"threshold", c.threshold},
       {"spectral_radius", c.spectral_radius}, {"input_gain", c.input_gain},
       {"activation", to_string(c.activation)}};
}

void from_json(const nlohmann::json& j, RsnnConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "channels") c.channels = v.get<std::size_t>();
    else if (key == "hidden") c.hidden = v.get<std::size_t>();
    else if (key == "readout_hidden") c.readout_hidden = v.get<std::size_t>();
    else if (key == "classes") c.classes = v.get<std::size_t>();
    else if (key == "decay") c.decay = v.get<double>();
    else if (key == "threshold") c.threshold = v.get<double>();
    else if (key == "spectral_radius") c.spectral_radius = v.get<double>();
    else if (key == "input_gain") c.input_gain = v.get<double>();
    else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
    else throw std::invalid_argument("rsnn: unknown key '" + key + "'");
  }
  c.validate();
}

double spectral_radius(const Matrix& w) {
  if (w.rows() != w.cols()) throw ShapeError("spectral_radius needs a square matrix");
  if (w.size() == 0) return 0.0;
  const Eigen::EigenSolver<Matrix> es(w, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

HybridLayer make(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain) {
  Rng stream = rng.split(name);
  return HybridLayer::random(name, in, out, stream, gain);
}

HybridLayer make_reservoir(const RsnnConfig& cfg, Rng& rng) {
  HybridLayer l = make("reservoir", cfg.hidden, cfg.hidden, rng, 1.0);
  const double rho = spectral_radius(l.weight());
  if (rho > 0.0) l.mutable_weight() *= cfg.spectral_radius / rho;
  l.set_frozen(true);
  return l;
}

}  // namespace

RsnnClassifier::RsnnClassifier(const RsnnConfig& cfg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      input_(make("input", cfg.channels, cfg.hidden, rng, cfg.input_gain)),
      reservoir_(make_reservoir(cfg, rng)),
      head_(make("head", cfg.readout_hidden > 0 ? cfg.readout_hidden : cfg.hidden, cfg.classes, rng, 1.0)) {
  input_.set_frozen(true);
  if (cfg.readout_hidden > 0) readout_ = make("readout", cfg.hidden, cfg.readout_hidden, rng, 1.0);
}

Matrix RsnnClassifier::forward(const Matrix& x, const ExecContext& ctx) {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw ShapeError("rsnn: input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(input_dim()));
  const auto c = static_cast<Eigen::Index>(cfg_.channels);
  const auto h = static_cast<Eigen::Index>(cfg_.hidden);
  const Eigen::Index n = x.cols();
  Matrix membrane = Matrix::Zero(h, n);
  Matrix spikes = Matrix::Zero(h, n);
  Matrix counts = Matrix::Zero(h, n);
  for (std::size_t t = 0; t < kSpikeWindows; ++t) {
    Matrix current = input_.forward(x.middleRows(static_cast<Eigen::Index>(t) * c, c), ctx);
    if (t > 0) current += reservoir_.forward(spikes, ctx);
    membrane = cfg_.decay * membrane + current;
    spikes = (membrane.array() >= cfg_.threshold).cast<double>().matrix();
    membrane -= cfg_.threshold * spikes;
    counts += spikes;
  }
  rates_ = counts / static_cast<double>(kSpikeWindows);
  if (readout_) {
    readout_pre_ = readout_->forward(rates_, ctx);
    embed_ = activate(cfg_.activation, readout_pre_);
  } else {
    embed_ = rates_;
  }
  return head_.forward(embed_, ctx);
}

void RsnnClassifier::backward(const Matrix& dlogits) {
  const Matrix demb = head_.backward(dlogits);
  // Spike counts are piecewise constant in everything upstream, so the
  // gradient stops here.
  if (readout_) readout_->backward(activation_backward(cfg_.activation, readout_pre_, demb));
}

std::vector<HybridLayer*> RsnnClassifier::layers() {
  std::vector<HybridLayer*> out{&input_, &reservoir_};
  if (readout_) out.push_back(&*readout_);
  out.push_back(&head_);
  return out;
}

}  // namespace hcim
