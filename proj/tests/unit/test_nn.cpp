#include <gtest/gtest.h>

#include <cmath>

#include "hcim/gradcheck.hpp"
#include "hcim/gradcheck_suite.hpp"
#include "hcim/ledger.hpp"
#include "hcim/nn.hpp"
#include "hcim/optim.hpp"

using namespace hcim;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, s);
  return m;
}

// Three dense layers with tanh and gelu between them, softmax-CE on top.
struct ToyNet {
  DenseAffine l1, l2, l3;
  Matrix x;
  std::vector<int> y;
  Matrix p1, p2;

  explicit ToyNet(Rng& rng)
      : l1("l1", 5, 7, rng), l2("l2", 7, 6, rng), l3("l3", 6, 3, rng), x(randn(5, 4, rng)), y{0, 2, 1, 2} {}

  double loss_and_grad(bool grad) {
    p1 = l1.forward(x);
    p2 = l2.forward(activate(Activation::Tanh, p1));
    const Matrix z = l3.forward(activate(Activation::Gelu, p2));
    double loss = 0;
    Matrix dz(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      const LossGrad lg = softmax_cross_entropy(z.col(i), y[static_cast<std::size_t>(i)]);
      loss += lg.loss / z.cols();
      dz.col(i) = lg.dlogits / z.cols();
    }
    if (grad) {
      const Matrix d2 = activation_backward(Activation::Gelu, p2, l3.backward(dz));
      const Matrix d1 = activation_backward(Activation::Tanh, p1, l2.backward(d2));
      l1.backward(d1);
    }
    return loss;
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto* l : {&l1, &l2, &l3})
      for (auto& p : l->params()) out.push_back(p);
    return out;
  }
};

}  // namespace

TEST(Nn, SoftmaxSumsToOne) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vector z = randn(6, 1, rng, 20.0).col(0);
    EXPECT_NEAR(softmax(z).sum(), 1.0, 1e-6);
  }
}

TEST(Nn, CrossEntropyClosedForm) {
  Vector z(3);
  z << 1.0, 2.0, 0.5;
  const LossGrad lg = softmax_cross_entropy(z, 1);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  EXPECT_NEAR(lg.loss, -std::log(std::exp(2.0) / denom), 1e-12);
  EXPECT_NEAR(lg.dlogits(0), std::exp(1.0) / denom, 1e-12);
  EXPECT_NEAR(lg.dlogits(1), std::exp(2.0) / denom - 1.0, 1e-12);
  EXPECT_THROW(softmax_cross_entropy(z, 3), std::invalid_argument);
}

TEST(Nn, DenseEqualsMatrixProduct) {
  Rng rng(2);
  Matrix w = randn(3, 4, rng);
  Vector b = randn(3, 1, rng).col(0);
  DenseAffine l("d", w, b);
  const Matrix x = randn(4, 5, rng);
  const Matrix y = l.forward(x);
  EXPECT_LE((y - ((w * x).colwise() + b)).cwiseAbs().maxCoeff(), 1e-12);
  DenseAffine zero("z", Matrix::Zero(3, 4), Vector::Zero(3));
  EXPECT_EQ(zero.forward(x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Nn, ZeroUpstreamGivesZeroGradients) {
  Rng rng(3);
  DenseAffine l("d", 4, 3, rng);
  l.zero_grad();
  l.forward(randn(4, 2, rng));
  l.backward(Matrix::Zero(3, 2));
  for (const auto& p : l.params()) EXPECT_EQ(p.grad->cwiseAbs().maxCoeff(), 0.0);
}

TEST(Nn, BackwardWithoutForwardIsStale) {
  Rng rng(4);
  DenseAffine l("d", 4, 3, rng);
  EXPECT_THROW(l.backward(Matrix::Zero(3, 1)), StaleCacheError);
  l.forward(randn(4, 1, rng));
  l.backward(Matrix::Zero(3, 1));
  EXPECT_THROW(l.backward(Matrix::Zero(3, 1)), StaleCacheError);
}

TEST(Nn, ToyNetGradientCheck) {
  Rng rng(5);
  ToyNet net(rng);
  for (auto* l : {&net.l1, &net.l2, &net.l3}) l->zero_grad();
  net.loss_and_grad(true);
  const auto params = net.params();
  const auto rep = check_gradients(params, [&] { return net.loss_and_grad(false); }, 1e-4, 1e-4);
  EXPECT_TRUE(rep.passed());
  for (const auto& t : rep.tensors) EXPECT_LE(t.max_rel_error, 1e-4) << t.name;
}

TEST(Nn, GradientCheckDetectsCorruption) {
  Rng rng(6);
  ToyNet net(rng);
  for (auto* l : {&net.l1, &net.l2, &net.l3}) l->zero_grad();
  net.loss_and_grad(true);
  auto params = net.params();
  (*params[0].grad)(0, 0) += 0.1;
  EXPECT_FALSE(check_gradients(params, [&] { return net.loss_and_grad(false); }).passed());
}

TEST(Nn, SuitePassesAndNegativeControlFails) {
  const auto ok = run_gradcheck_suite(1);
  ASSERT_FALSE(ok.empty());
  for (const auto& c : ok) EXPECT_TRUE(c.report.passed()) << c.check;
  bool any_failed = false;
  for (const auto& c : run_gradcheck_suite(1, true)) any_failed |= !c.report.passed();
  EXPECT_TRUE(any_failed);
}

TEST(Nn, ActivationDerivativesMatchFiniteDifference) {
  Rng rng(7);
  const Matrix pre = randn(4, 4, rng, 2.0);
  const Matrix up = Matrix::Ones(4, 4);
  for (auto a : {Activation::Gelu, Activation::Relu, Activation::Tanh}) {
    const Matrix d = activation_backward(a, pre, up);
    const double h = 1e-6;
    const Matrix fd = (activate(a, pre.array() + h) - activate(a, pre.array() - h)) / (2 * h);
    EXPECT_LE((d - fd).cwiseAbs().maxCoeff(), 1e-6) << to_string(a);
  }
  EXPECT_EQ(parse_activation("gelu"), Activation::Gelu);
  EXPECT_THROW(parse_activation("swish"), std::invalid_argument);
}

TEST(Nn, LifZeroInputNeverSpikes) {
  LIFState s = LIFState::zeros(5, 0.8, 1.0);
  for (int t = 0; t < 100; ++t) {
    LIFStep step = lif_step(s, Vector::Zero(5));
    EXPECT_EQ(step.spikes.sum(), 0.0);
    s = step.state;
  }
}

TEST(Nn, LifMemorylessThreshold) {
  Vector i(3);
  i << 0.99, 1.0, 2.5;
  LIFState s = LIFState::zeros(3, 0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    LIFStep step = lif_step(s, i);
    EXPECT_EQ(step.spikes(0), 0.0);
    EXPECT_EQ(step.spikes(1), 1.0);
    EXPECT_EQ(step.spikes(2), 1.0);
    s = step.state;
  }
}

TEST(Nn, LifSubtractReset) {
  LIFState s = LIFState::zeros(1, 0.5, 1.0);
  Vector i(1);
  i << 0.8;
  LIFStep a = lif_step(s, i);  // 0.8
  EXPECT_EQ(a.spikes(0), 0.0);
  LIFStep b = lif_step(a.state, i);  // 0.4 + 0.8 = 1.2 -> spike, 0.2 left
  EXPECT_EQ(b.spikes(0), 1.0);
  EXPECT_NEAR(b.state.membrane(0), 0.2, 1e-12);
}

TEST(Nn, LifCountsTrackPoissonRate) {
  // Memoryless unit driven by Poisson counts spikes whenever a window holds
  // at least one event: E[count] = T (1 - exp(-rate)).
  const double rate = 0.3;
  const int windows = 10, trials = 4000;
  Rng rng(8);
  double sum = 0;
  for (int k = 0; k < trials; ++k) {
    LIFState s = LIFState::zeros(1, 0.0, 1.0);
    for (int t = 0; t < windows; ++t) {
      Vector i(1);
      i << rng.poisson(rate);
      LIFStep step = lif_step(s, i);
      sum += step.spikes(0);
      s = step.state;
    }
  }
  const double p = 1.0 - std::exp(-rate);
  const double sigma = std::sqrt(windows * p * (1 - p) / trials);
  EXPECT_NEAR(sum / trials, windows * p, 3 * sigma);
}

TEST(Nn, AdamCountsEveryScalarEveryStep) {
  Matrix w = Matrix::Ones(3, 4), g = Matrix::Zero(3, 4);
  Matrix s = Matrix::Ones(1, 1), gs = Matrix::Constant(1, 1, 0.5);
  std::vector<ParamRef> params{{"w", &w, &g}, {"s", &s, &gs}};
  Adam opt;
  CostLedger ledger;
  const int epochs = 3, steps = 7;
  for (int e = 0; e < epochs; ++e)
    for (int k = 0; k < steps; ++k) opt.step(params, &ledger);
  EXPECT_EQ(ledger.training_updates(), static_cast<std::uint64_t>(epochs * steps * 13));
  EXPECT_EQ(w, Matrix::Ones(3, 4));  // zero gradient leaves values unchanged
  EXPECT_LT(s(0, 0), 1.0);
}

TEST(Nn, AdamSingleScalarFirstStep) {
  Matrix s = Matrix::Constant(1, 1, 2.0), g = Matrix::Constant(1, 1, 3.0);
  std::vector<ParamRef> params{{"s", &s, &g}};
  Adam opt(AdamConfig{.lr = 0.1});
  CostLedger ledger;
  opt.step(params, &ledger);
  EXPECT_EQ(ledger.training_updates(), 1u);
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  EXPECT_NEAR(s(0, 0), 2.0 - 0.1 * 3.0 / (3.0 + 1e-8), 1e-12);
}

TEST(Nn, SeparableToyTrainsWithinBudget) {
  Rng rng(9);
  const Eigen::Index n = 40;
  Matrix x = randn(2, n, rng);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = x(0, i) + 0.5 * x(1, i) > 0 ? 1 : 0;
    x(0, i) += y[static_cast<std::size_t>(i)] ? 0.2 : -0.2;
  }
  DenseAffine l("d", 2, 2, rng);
  Adam opt(AdamConfig{.lr = 0.05});
  int steps = 0;
  auto accuracy = [&] {
    const Matrix z = l.forward(x);
    int ok = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg;
      z.col(i).maxCoeff(&arg);
      ok += arg == y[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(ok) / n;
  };
  while (steps < 200 && accuracy() < 1.0) {
    l.zero_grad();
    const Matrix z = l.forward(x);
    Matrix dz(2, n);
    for (Eigen::Index i = 0; i < n; ++i)
      dz.col(i) = softmax_cross_entropy(z.col(i), y[static_cast<std::size_t>(i)]).dlogits / n;
    l.backward(dz);
    const auto p = l.params();
    opt.step(p);
    ++steps;
  }
  EXPECT_DOUBLE_EQ(accuracy(), 1.0);
  EXPECT_LT(steps, 200);
}

TEST(Nn, TrainingIsBitReproducible) {
  auto train = [] {
    Rng rng(10);
    ToyNet net(rng);
    Adam opt;
    for (int k = 0; k < 20; ++k) {
      for (auto* l : {&net.l1, &net.l2, &net.l3}) l->zero_grad();
      net.loss_and_grad(true);
      const auto p = net.params();
      opt.step(p);
    }
    return net.l1.weight();
  };
  EXPECT_EQ(train(), train());
}
