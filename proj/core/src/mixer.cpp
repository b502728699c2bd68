#include "hcim/mixer.hpp"

#include <stdexcept>

namespace hcim {

void MixerConfig::validate() const {
  if (patch == 0 || image_size == 0 || image_size % patch != 0)
    throw std::invalid_argument("mixer: image_size must be a positive multiple of patch");
  if (channels == 0 || token_hidden == 0 || channel_hidden == 0 || classes == 0)
    throw std::invalid_argument("mixer: dims must be positive");
}

std::uint64_t MixerConfig::parameter_count() const {
  const std::uint64_t p = patch_dim(), c = channels, t = tokens(), dt = token_hidden,
                      dc = channel_hidden, k = classes;
  const std::uint64_t block = (t * dt + dt) + (dt * t + t) + (c * dc + dc) + (dc * c + c);
  return (p * c + c) + blocks * block + (c * k + k);
}

void to_json(nlohmann::json& j, const MixerConfig& c) {
  j = {{"image_size", c.image_size},     {"patch", c.patch},
       {"channels", c.channels},         {"token_hidden", c.token_hidden},
       {"channel_hidden", c.channel_hidden}, {"blocks", c.blocks},
       {"classes", c.classes},           {"activation", to_string(c.activation)},
       {"residual_gain", c.residual_gain}};
}

void from_json(const nlohmann::json& j, MixerConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "image_size") c.image_size = v.get<std::size_t>();
    else if (key == "patch") c.patch = v.get<std::size_t>();
    else if (key == "channels") c.channels = v.get<std::size_t>();
    else if (key == "token_hidden") c.token_hidden = v.get<std::size_t>();
    else if (key == "channel_hidden") c.channel_hidden = v.get<std::size_t>();
    else if (key == "blocks") c.blocks = v.get<std::size_t>();
    else if (key == "classes") c.classes = v.get<std::size_t>();
    else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
    else if (key == "residual_gain") c.residual_gain = v.get<double>();
    else throw std::invalid_argument("mixer: unknown key '" + key + "'");
  }
  c.validate();
}

namespace {

HybridLayer make(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain) {
  Rng stream = rng.split(name);
  return HybridLayer::random(name, in, out, stream, gain);
}

// Channel layout: C x (T*n), column i*T + t. Token layout: T x (C*n), column i*C + c.
Matrix to_tokens(const Matrix& h, std::size_t tokens, std::size_t n) {
  const auto t = static_cast<Eigen::Index>(tokens);
  const Eigen::Index c = h.rows();
  Matrix u(t, c * static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
    u.middleCols(i * c, c) = h.middleCols(i * t, t).transpose();
  return u;
}

Matrix to_channels(const Matrix& u, std::size_t channels, std::size_t n) {
  const auto c = static_cast<Eigen::Index>(channels);
  const Eigen::Index t = u.rows();
  Matrix h(c, t * static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
    h.middleCols(i * t, t) = u.middleCols(i * c, c).transpose();
  return h;
}

}  // namespace

MixerClassifier::MixerClassifier(const MixerConfig& cfg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      embed_(make("patch_embed", cfg.patch_dim(), cfg.channels, rng, 1.0)),
      head_(make("head", cfg.channels, cfg.classes, rng, 1.0)) {
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    blocks_.push_back({make(p + "token1", cfg.tokens(), cfg.token_hidden, rng, 1.0),
                       make(p + "token2", cfg.token_hidden, cfg.tokens(), rng, cfg.residual_gain),
                       make(p + "channel1", cfg.channels, cfg.channel_hidden, rng, 1.0),
                       make(p + "channel2", cfg.channel_hidden, cfg.channels, rng, cfg.residual_gain),
                       {}, {}});
  }
}

Matrix MixerClassifier::patchify(const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw ShapeError("mixer: input has " + std::to_string(x.rows()) + " pixels, expected " +
                     std::to_string(input_dim()));
  const auto s = static_cast<Eigen::Index>(cfg_.image_size);
  const auto p = static_cast<Eigen::Index>(cfg_.patch);
  const Eigen::Index g = s / p;
  const Eigen::Index t = g * g;
  Matrix out(p * p, t * x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (Eigen::Index tr = 0; tr < g; ++tr)
      for (Eigen::Index tc = 0; tc < g; ++tc)
        for (Eigen::Index r = 0; r < p; ++r)
          for (Eigen::Index c = 0; c < p; ++c)
            out(r * p + c, i * t + tr * g + tc) = x((tr * p + r) * s + tc * p + c, i);
  return out;
}

Matrix MixerClassifier::forward(const Matrix& x, const ExecContext& ctx) {
  batch_ = static_cast<std::size_t>(x.cols());
  const std::size_t t = cfg_.tokens();
  Matrix h = embed_.forward(patchify(x), ctx);
  for (auto& b : blocks_) {
    b.tok_pre = b.token1.forward(to_tokens(h, t, batch_), ctx);
    h += to_channels(b.token2.forward(activate(cfg_.activation, b.tok_pre), ctx), cfg_.channels, batch_);
    b.ch_pre = b.channel1.forward(h, ctx);
    h += b.channel2.forward(activate(cfg_.activation, b.ch_pre), ctx);
  }
  const auto ti = static_cast<Eigen::Index>(t);
  pooled_.resize(h.rows(), static_cast<Eigen::Index>(batch_));
  for (Eigen::Index i = 0; i < pooled_.cols(); ++i) pooled_.col(i) = h.middleCols(i * ti, ti).rowwise().mean();
  return head_.forward(pooled_, ctx);
}

void MixerClassifier::backward(const Matrix& dlogits) {
  const std::size_t t = cfg_.tokens();
  const auto ti = static_cast<Eigen::Index>(t);
  const Matrix dpool = head_.backward(dlogits);
  Matrix dh(dpool.rows(), ti * dpool.cols());
  for (Eigen::Index i = 0; i < dpool.cols(); ++i)
    dh.middleCols(i * ti, ti) = (dpool.col(i) / static_cast<double>(t)).replicate(1, ti);
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    Block& b = blocks_[k];
    const Matrix dch = b.channel2.backward(dh);
    dh += b.channel1.backward(activation_backward(cfg_.activation, b.ch_pre, dch));
    const Matrix dtok = b.token2.backward(to_tokens(dh, t, batch_));
    dh += to_channels(b.token1.backward(activation_backward(cfg_.activation, b.tok_pre, dtok)),
                      cfg_.channels, batch_);
  }
  embed_.backward(dh);
}

std::vector<HybridLayer*> MixerClassifier::layers() {
  std::vector<HybridLayer*> out{&embed_};
  for (auto& b : blocks_) {
    out.push_back(&b.token1);
    out.push_back(&b.token2);
    out.push_back(&b.channel1);
    out.push_back(&b.channel2);
  }
  out.push_back(&head_);
  return out;
}

}  // namespace hcim
