#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hcim/crossbar.hpp"
#include "hcim/ledger.hpp"

using namespace hcim;

namespace {

DeviceConfig quiet() {
  DeviceConfig c;
  c.read_noise_std = 0.0;
  return c;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

// Level-quantized weights computed from the encoding rule alone.
Eigen::MatrixXd oracle_levels(const Eigen::MatrixXd& w, const DeviceConfig& cfg) {
  const double range = cfg.g_max - cfg.g_min;
  const double scale = w.cwiseAbs().maxCoeff() / range;
  const double spacing = range / (cfg.n_levels - 1);
  Eigen::MatrixXd q(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = w.data()[i];
    q.data()[i] = std::copysign(std::round(std::abs(v) / scale / spacing) * spacing * scale, v);
  }
  return q;
}

ConverterConfig bits(int b) {
  ConverterConfig c;
  c.dac_bits = b;
  c.adc_bits = b;
  return c;
}

}  // namespace

TEST(Crossbar, MappingScaleAndClip) {
  DeviceConfig cfg;
  Eigen::MatrixXd w(2, 2);
  w << 0.5, -1.4, 0.0, 0.7;
  const auto m = DifferentialMapping::for_matrix(w, cfg);
  EXPECT_DOUBLE_EQ(m.weight_scale, 1.4 / 70.0);
  EXPECT_DOUBLE_EQ(m.w_clip, 1.4);
}

TEST(Crossbar, MapZeroAndFullScale) {
  DeviceConfig cfg;
  Eigen::MatrixXd w(1, 3);
  w << 0.0, 2.0, -2.0;
  const auto m = DifferentialMapping::for_matrix(w, cfg);
  const auto t = map_weights(w, m, cfg);
  EXPECT_DOUBLE_EQ(t.g_pos(0, 0), cfg.g_min);
  EXPECT_DOUBLE_EQ(t.g_neg(0, 0), cfg.g_min);
  EXPECT_DOUBLE_EQ(t.g_pos(0, 1), cfg.g_max);
  EXPECT_DOUBLE_EQ(t.g_neg(0, 1), cfg.g_min);
  EXPECT_DOUBLE_EQ(t.g_pos(0, 2), cfg.g_min);
  EXPECT_DOUBLE_EQ(t.g_neg(0, 2), cfg.g_max);
  EXPECT_EQ(t.clipped, 0u);
}

TEST(Crossbar, ClippingCounted) {
  DeviceConfig cfg;
  Eigen::MatrixXd w(1, 3);
  w << 1.0, 3.0, -5.0;
  DifferentialMapping m = DifferentialMapping::for_matrix(Eigen::MatrixXd::Constant(1, 1, 1.0), cfg);
  const auto t = map_weights(w, m, cfg);
  EXPECT_EQ(t.clipped, 2u);
  EXPECT_DOUBLE_EQ(t.g_pos(0, 1), cfg.g_max);
  EXPECT_DOUBLE_EQ(t.g_neg(0, 2), cfg.g_max);
}

TEST(Crossbar, RoundTripWithinHalfLevel) {
  DeviceConfig cfg;
  Rng rng(1);
  const Eigen::MatrixXd w = random_matrix(20, 30, rng);
  const auto m = DifferentialMapping::for_matrix(w, cfg);
  const auto t = map_weights(w, m, cfg);
  const Eigen::MatrixXd decoded = (t.g_pos - t.g_neg) * m.weight_scale;
  EXPECT_LE((decoded - w).cwiseAbs().maxCoeff(), m.weight_scale * cfg.level_spacing() / 2 + 1e-12);
  EXPECT_LE((decoded - oracle_levels(w, cfg)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Crossbar, TilingPartitionsShape) {
  AnalogueMatrix am(64, 96, DeviceConfig{});
  EXPECT_EQ(am.tile_rows(), 2u);
  EXPECT_EQ(am.tile_cols(), 3u);
  AnalogueMatrix odd(33, 5, DeviceConfig{});
  EXPECT_EQ(odd.tile_rows(), 2u);
  EXPECT_EQ(odd.tile(1, 0).rows, 1u);
  EXPECT_EQ(odd.tile(0, 0).cols, 5u);
  for (std::size_t tr = 0; tr < am.tile_rows(); ++tr)
    for (std::size_t tc = 0; tc < am.tile_cols(); ++tc) {
      EXPECT_LE(am.tile(tr, tc).rows, kTileSize);
      EXPECT_LE(am.tile(tr, tc).cols, kTileSize);
    }
}

TEST(Crossbar, ZeroMatrixGivesZero) {
  AnalogueMatrix am(8, 8, quiet());
  am.program_ideal(Eigen::MatrixXd::Zero(8, 8));
  Rng rng(2);
  const auto y = am.mvm(random_vector(8, rng), nullptr, bits(16));
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Crossbar, IdentityWithIdealConverters) {
  AnalogueMatrix am(16, 16, quiet());
  am.program_ideal(Eigen::MatrixXd::Identity(16, 16));
  ConverterConfig conv;
  conv.ideal = true;
  Rng rng(3);
  const Eigen::VectorXd x = random_vector(16, rng);
  EXPECT_LE((am.mvm(x, nullptr, conv) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Crossbar, MultiTileMatchesDenseProduct) {
  Rng rng(4);
  const Eigen::MatrixXd w = random_matrix(64, 96, rng);
  AnalogueMatrix am(64, 96, quiet());
  am.program_ideal(w);
  const Eigen::MatrixXd wq = oracle_levels(w, am.device());
  const Eigen::VectorXd x = random_vector(96, rng);
  const Eigen::VectorXd exact = wq * x;
  const Eigen::VectorXd y = am.mvm(x, nullptr, bits(24));
  EXPECT_LE((y - exact).norm() / exact.norm(), 1e-3);
}

TEST(Crossbar, AdjointIdentity) {
  Rng rng(5);
  const Eigen::MatrixXd w = random_matrix(40, 70, rng);
  AnalogueMatrix am(40, 70, quiet());
  am.program_ideal(w);
  ConverterConfig conv;
  conv.ideal = true;
  // The forward reads the stored conductances; the adjoint of that map is
  // the transposed realization, which equals transpose_mvm up to quantization.
  const Eigen::VectorXd x = random_vector(70, rng);
  const Eigen::VectorXd d = random_vector(40, rng);
  const double lhs = am.mvm(x, nullptr, conv).dot(d);
  const double rhs = x.dot(am.realized_weights().transpose() * d);
  EXPECT_LE(std::abs(lhs - rhs), 1e-6 * std::abs(rhs) + 1e-12);
  EXPECT_LE((am.transpose_mvm(d) - w.transpose() * d).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(am.transpose_mvm(Eigen::VectorXd::Zero(40)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Crossbar, ShapeErrors) {
  AnalogueMatrix am(4, 6, quiet());
  am.program_ideal(Eigen::MatrixXd::Ones(4, 6));
  EXPECT_THROW(am.mvm(Eigen::VectorXd::Ones(5), nullptr, bits(16)), ShapeError);
  EXPECT_THROW(am.transpose_mvm(Eigen::VectorXd::Ones(6)), ShapeError);
  Rng rng(6);
  EXPECT_THROW(am.program(Eigen::MatrixXd::Ones(6, 4), 1.0, rng), ShapeError);
}

TEST(Crossbar, ProgramUpdatesShadowAndLedger) {
  DeviceConfig cfg;
  Rng rng(7);
  const Eigen::MatrixXd w = random_matrix(10, 12, rng);
  AnalogueMatrix am(10, 12, cfg);
  CostLedger ledger;
  const ProgramReport rep = am.program(w, 1.0, rng, &ledger);
  EXPECT_EQ(am.digital_shadow(), w);
  EXPECT_EQ(rep.cells, 240u);
  EXPECT_EQ(ledger.rm_pulses(), rep.total_pulses);
  EXPECT_GT(rep.total_pulses, 0u);
  EXPECT_LE(rep.mean_abs_error, 1.0 + 3 * cfg.read_noise_std);
}

TEST(Crossbar, ReprogramIdenticalIsNearlyFree) {
  DeviceConfig cfg;
  Rng rng(8);
  const Eigen::MatrixXd w = random_matrix(16, 16, rng);
  AnalogueMatrix am(16, 16, cfg);
  const auto first = am.program(w, 1.0, rng);
  const auto again = am.program(w, 4.0, rng);
  EXPECT_EQ(again.cells_changed, 0u);
  EXPECT_LT(again.total_pulses, first.total_pulses / 100 + 2);
}

TEST(Crossbar, PulsesMatchCalibrationCurve) {
  DeviceConfig cfg;
  Rng rng(9);
  const Eigen::MatrixXd w = random_matrix(32, 32, rng);
  AnalogueMatrix am(32, 32, cfg);
  const auto rep = am.program(w, 1.0, rng);
  const auto t = map_weights(w, am.mapping(), cfg);
  std::vector<double> targets;
  for (Eigen::Index i = 0; i < t.g_pos.size(); ++i) {
    targets.push_back(t.g_pos.data()[i]);
    targets.push_back(t.g_neg.data()[i]);
  }
  const double expected = expected_pulses_from_reset(cfg, targets, 1.0, 4, 99);
  EXPECT_NEAR(static_cast<double>(rep.total_pulses), expected, 0.2 * expected);
}

TEST(Crossbar, PerOutputNoiseMatchesPerCellNoise) {
  // Reference: independent N(0, s^2) noise on every cell conductance.
  DeviceConfig cfg;
  cfg.read_noise_std = 0.5;
  Rng rng(10);
  const Eigen::MatrixXd w = random_matrix(4, 20, rng);
  AnalogueMatrix am(4, 20, cfg);
  am.program_ideal(w);
  ConverterConfig conv;
  conv.ideal = true;
  conv.auto_input_range = false;
  const Eigen::VectorXd x = random_vector(20, rng);
  const double scale = am.mapping().weight_scale;
  const Eigen::MatrixXd gp = am.conductance_pos(), gn = am.conductance_neg();
  const int n = 20000;
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(4), sq_a = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(4), sq_b = Eigen::VectorXd::Zero(4);
  Rng ra(11), rb(12);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd a = am.mvm(x, &ra, conv);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 20; ++j)
        b(i) += ((gp(i, j) + rb.normal(0, 0.5)) - (gn(i, j) + rb.normal(0, 0.5))) * x(j) * scale;
    mean_a += a;
    sq_a += a.cwiseProduct(a);
    mean_b += b;
    sq_b += b.cwiseProduct(b);
  }
  for (int i = 0; i < 4; ++i) {
    const double va = sq_a(i) / n - std::pow(mean_a(i) / n, 2);
    const double vb = sq_b(i) / n - std::pow(mean_b(i) / n, 2);
    EXPECT_NEAR(va / vb, 1.0, 0.05) << i;
    EXPECT_NEAR(mean_a(i) / n, mean_b(i) / n, 4 * std::sqrt(vb / n));
  }
}

TEST(Crossbar, NoiseFreeMvmIgnoresSeed) {
  Rng rng(13);
  const Eigen::MatrixXd w = random_matrix(8, 40, rng);
  AnalogueMatrix am(8, 40, quiet());
  am.program_ideal(w);
  const Eigen::VectorXd x = random_vector(40, rng);
  Rng a(1), b(2);
  EXPECT_EQ(am.mvm(x, &a, bits(14)), am.mvm(x, &b, bits(14)));
}

TEST(Crossbar, NoisyMvmReproducible) {
  DeviceConfig cfg;
  Rng rng(14);
  AnalogueMatrix am(8, 8, cfg);
  am.program_ideal(random_matrix(8, 8, rng));
  const Eigen::VectorXd x = random_vector(8, rng);
  Rng a(5), b(5);
  EXPECT_EQ(am.mvm(x, &a, bits(14)), am.mvm(x, &b, bits(14)));
  EXPECT_THROW(am.mvm(x, nullptr, bits(14)), std::invalid_argument);
}

TEST(Crossbar, MvmLedgerCounts) {
  AnalogueMatrix am(40, 70, quiet());
  am.program_ideal(Eigen::MatrixXd::Ones(40, 70));
  CostLedger ledger;
  am.mvm(Eigen::VectorXd::Ones(70), nullptr, bits(14), &ledger);
  EXPECT_EQ(ledger.count(EventKind::AnalogueCellRead), 2u * 40 * 70);
  EXPECT_EQ(ledger.count(EventKind::DacConversion), 70u * 2);
  EXPECT_EQ(ledger.count(EventKind::AdcConversion), 40u * 3);
}

TEST(Crossbar, QuantizerSaturates) {
  EXPECT_DOUBLE_EQ(quantize_signed(5.0, 4, 1.0), 7.0 / 8.0);
  EXPECT_DOUBLE_EQ(quantize_signed(-5.0, 4, 1.0), -1.0);
  EXPECT_DOUBLE_EQ(quantize_signed(0.26, 2, 1.0), 0.5);
}

TEST(Crossbar, GrowRowsKeepsState) {
  Rng rng(15);
  const Eigen::MatrixXd w = random_matrix(30, 10, rng);
  AnalogueMatrix am(30, 10, quiet());
  am.program_ideal(w);
  const Eigen::MatrixXd before = am.conductance_pos();
  am.grow_rows(5);
  EXPECT_EQ(am.rows(), 35u);
  EXPECT_EQ(am.conductance_pos().topRows(30), before);
  EXPECT_EQ(am.digital_shadow().bottomRows(5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Crossbar, ConductanceCsv) {
  AnalogueMatrix am(2, 2, quiet());
  am.program_ideal(Eigen::MatrixXd::Identity(2, 2));
  std::ostringstream os;
  am.write_conductance_csv(os);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "row,col,g_plus_uS,g_minus_uS");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}
