#include "hcim/gradcheck_suite.hpp"

#include "hcim/adaptation.hpp"
#include "hcim/mixer.hpp"
#include "hcim/model.hpp"
#include "hcim/rsnn.hpp"

namespace hcim {

namespace {

Dataset toy_data(std::size_t features, std::size_t n, int classes, Rng& rng, double scale = 1.0) {
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.x.size(); ++i) d.x.data()[i] = rng.normal(0.0, scale);
  for (std::size_t j = 0; j < n; ++j) {
    d.y.push_back(static_cast<int>(j % static_cast<std::size_t>(classes)));
    d.ids.push_back(j);
  }
  return d;
}

void randomize(Matrix& m, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
}

GradCheckReport check_model(Classifier& model, const Dataset& data, TrainScope scope, bool corrupt) {
  model.set_scope(scope);
  model.zero_grad();
  accumulate_objective_gradient(model, data, 1.0, Dataset{}, 0.0);
  const auto params = model.trainable();
  if (corrupt && !params.empty() && params.front().grad->size() > 0) (*params.front().grad)(0, 0) += 0.05;
  return check_gradients(params, [&] { return mean_loss(model, data); });
}

}  // namespace

std::vector<NamedGradCheck> run_gradcheck_suite(std::uint64_t seed, bool corrupt) {
  std::vector<NamedGradCheck> out;
  Rng root(seed);
  bool corrupt_pending = corrupt;
  auto take_corrupt = [&] {
    const bool c = corrupt_pending;
    corrupt_pending = false;
    return c;
  };

  {
    // Plain affine layers with hand-written backward.
    Rng rng = root.split("dense-affine");
    DenseAffine l1("affine0", 5, 7, rng), l2("affine1", 7, 4, rng), l3("affine2", 4, 3, rng);
    const Dataset d = toy_data(5, 6, 3, rng);
    auto loss_and_grad = [&](bool backprop) {
      const Matrix z1 = l1.forward(d.x);
      const Matrix a1 = activate(Activation::Tanh, z1);
      const Matrix z2 = l2.forward(a1);
      const Matrix a2 = activate(Activation::Tanh, z2);
      const Matrix z3 = l3.forward(a2);
      double loss = 0.0;
      Matrix g(z3.rows(), z3.cols());
      for (Eigen::Index j = 0; j < z3.cols(); ++j) {
        const LossGrad lg = softmax_cross_entropy(z3.col(j), d.y[static_cast<std::size_t>(j)]);
        loss += lg.loss / static_cast<double>(d.size());
        g.col(j) = lg.dlogits / static_cast<double>(d.size());
      }
      if (backprop) {
        g = activation_backward(Activation::Tanh, z2, l3.backward(g));
        g = activation_backward(Activation::Tanh, z1, l2.backward(g));
        l1.backward(g);
      }
      return loss;
    };
    for (auto* l : {&l1, &l2, &l3}) l->zero_grad();
    loss_and_grad(true);
    std::vector<ParamRef> params;
    for (auto* l : {&l1, &l2, &l3})
      for (const auto& p : l->params()) params.push_back(p);
    if (take_corrupt()) (*params.front().grad)(0, 0) += 0.05;
    out.push_back({"dense-affine", check_gradients(params, [&] { return loss_and_grad(false); })});
  }

  for (Activation act : {Activation::Gelu, Activation::Relu, Activation::Tanh}) {
    Rng rng = root.split("mlp-" + to_string(act));
    MlpClassifier m({6, 8, 5, 3}, act, rng);
    const Dataset d = toy_data(6, 7, 3, rng);
    out.push_back({"mlp-" + to_string(act) + "+softmax-ce", check_model(m, d, TrainScope::Pretrain, take_corrupt())});
  }

  {
    Rng rng = root.split("lora");
    MlpClassifier m({6, 8, 3}, Activation::Gelu, rng);
    Rng ad = rng.split("adapters");
    m.attach_adapters(2, ad);
    for (auto* l : m.layers()) randomize(l->adapter().b, rng, 0.3);
    const Dataset d = toy_data(6, 7, 3, rng);
    out.push_back({"lora", check_model(m, d, TrainScope::Lora, take_corrupt())});
    m.add_class();
    randomize(m.head().mutable_extra_weight(), rng, 0.3);
    Dataset d4 = toy_data(6, 8, 4, rng);
    out.push_back({"lora+added-row", check_model(m, d4, TrainScope::Lora, take_corrupt())});
  }

  {
    Rng rng = root.split("full-added-row");
    MlpClassifier m({6, 8, 3}, Activation::Gelu, rng);
    m.add_class();
    randomize(m.head().mutable_extra_weight(), rng, 0.3);
    const Dataset d = toy_data(6, 8, 4, rng);
    out.push_back({"full+added-row", check_model(m, d, TrainScope::Full, take_corrupt())});
  }

  {
    Rng rng = root.split("mixer");
    MixerConfig cfg;
    cfg.image_size = 8;
    cfg.patch = 4;
    cfg.channels = 6;
    cfg.token_hidden = 3;
    cfg.channel_hidden = 5;
    cfg.blocks = 2;
    cfg.classes = 3;
    MixerClassifier m(cfg, rng);
    const Dataset d = toy_data(64, 4, 3, rng);
    out.push_back({"mixer", check_model(m, d, TrainScope::Pretrain, take_corrupt())});
    Rng ad = rng.split("adapters");
    m.attach_adapters(2, ad);
    for (auto* l : m.layers()) randomize(l->adapter().b, rng, 0.3);
    out.push_back({"mixer-lora", check_model(m, d, TrainScope::Lora, take_corrupt())});
  }

  {
    // Input projection and reservoir are unfrozen here so their (zero)
    // analytic gradients are compared against finite differences too.
    Rng rng = root.split("lif-recurrent");
    RsnnConfig cfg;
    cfg.channels = 4;
    cfg.hidden = 10;
    cfg.readout_hidden = 5;
    cfg.classes = 3;
    cfg.input_gain = 1.5;
    RsnnClassifier m(cfg, rng);
    m.input_projection().set_frozen(false);
    m.reservoir().set_frozen(false);
    Dataset d = toy_data(cfg.channels * kSpikeWindows, 6, 3, rng);
    for (Eigen::Index i = 0; i < d.x.size(); ++i) d.x.data()[i] = static_cast<double>(rng.poisson(1.0));
    out.push_back({"lif-recurrent", check_model(m, d, TrainScope::Pretrain, take_corrupt())});
  }
  return out;
}

}  // namespace hcim
