#include <gtest/gtest.h>

#include <cmath>

#include "hcim/device.hpp"

using namespace hcim;

namespace {

DeviceConfig deterministic(double step) {
  DeviceConfig c;
  c.pulse_step_mean = step;
  c.pulse_step_std = 0.0;
  c.read_noise_std = 0.0;
  return c;
}

}  // namespace

TEST(Device, DefaultsMatchDeviceRange) {
  DeviceConfig c;
  EXPECT_DOUBLE_EQ(c.g_min, 10.0);
  EXPECT_DOUBLE_EQ(c.g_max, 80.0);
  EXPECT_EQ(c.n_levels, 128);
  EXPECT_EQ(c.max_cycles, 500);
  EXPECT_FALSE(c.drift_enabled);
  EXPECT_NO_THROW(c.validate());
}

TEST(Device, InvalidConfigRejected) {
  DeviceConfig c;
  c.g_min = 90.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.n_levels = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.read_noise_std = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Device, DeterministicStep) {
  DeviceConfig c = deterministic(1.0);
  Rng rng(1);
  CellState cell{20.0, 0, std::nullopt};
  cell = program_pulse(cell, 60.0, rng, c);
  EXPECT_DOUBLE_EQ(cell.conductance, 21.0);
  EXPECT_EQ(cell.cycle_count, 1u);
  cell = program_pulse(cell, 10.0, rng, c);
  EXPECT_DOUBLE_EQ(cell.conductance, 20.0);
}

TEST(Device, ZeroDistanceTargetStillCountsPulse) {
  DeviceConfig c;
  Rng rng(2);
  CellState cell{40.0, 5, std::nullopt};
  const CellState after = program_pulse(cell, 40.0, rng, c);
  EXPECT_EQ(after.cycle_count, 6u);
  EXPECT_DOUBLE_EQ(after.conductance, 40.0);
}

TEST(Device, ClipsAtBoundaries) {
  DeviceConfig c;
  c.pulse_step_std = 5.0;
  Rng rng(3);
  CellState hi{c.g_max, 0, std::nullopt};
  for (int i = 0; i < 200; ++i) {
    hi = program_pulse(hi, c.g_max, rng, c);
    ASSERT_LE(hi.conductance, c.g_max);
    ASSERT_GE(hi.conductance, c.g_min);
  }
  CellState cell = CellState::reset_state(c);
  for (int i = 0; i < 2000; ++i) {
    const double target = c.g_min + (c.g_max - c.g_min) * rng.uniform();
    cell = program_pulse(cell, target, rng, c);
    ASSERT_GE(cell.conductance, c.g_min);
    ASSERT_LE(cell.conductance, c.g_max);
  }
  EXPECT_EQ(cell.cycle_count, 2000u);
}

TEST(Device, OutOfRangeTargetThrows) {
  DeviceConfig c;
  Rng rng(4);
  const CellState cell = CellState::reset_state(c);
  EXPECT_THROW(program_pulse(cell, 5.0, rng, c), RangeError);
  EXPECT_THROW(write_verify(cell, 81.0, 1.0, rng, c), RangeError);
  EXPECT_THROW(quantize_level(100.0, c), RangeError);
}

TEST(Device, ReadIsPureAndNoiseFreeWhenDisabled) {
  DeviceConfig c = deterministic(1.0);
  Rng rng(5);
  const CellState cell{33.3, 7, std::nullopt};
  EXPECT_DOUBLE_EQ(read(cell, rng, c), 33.3);
  EXPECT_EQ(cell.cycle_count, 7u);
}

TEST(Device, ReadNoiseStd) {
  DeviceConfig c;
  c.read_noise_std = 0.5;
  Rng rng(6);
  const CellState cell{50.0, 0, std::nullopt};
  const int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = read(cell, rng, c);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(sd, 0.5, 0.05);
  EXPECT_NEAR(mean, 50.0, 0.05);
}

TEST(Device, QuantizeLevels) {
  DeviceConfig c;
  const double spacing = 70.0 / 127.0;
  EXPECT_DOUBLE_EQ(c.level_spacing(), spacing);
  EXPECT_DOUBLE_EQ(quantize_level(c.g_min, c), c.g_min);
  EXPECT_DOUBLE_EQ(quantize_level(c.g_max, c), c.g_max);
  const double half = 10.0 + 70.0 / 254.0;
  const double q = quantize_level(half, c);
  EXPECT_LE(std::abs(q - half), 70.0 / 254.0 + 1e-12);
  EXPECT_TRUE(std::abs(q - 10.0) < 1e-9 || std::abs(q - (10.0 + spacing)) < 1e-9);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(c.g_min, c.g_max);
    const double lvl = quantize_level(t, c);
    EXPECT_LE(std::abs(lvl - t), spacing / 2 + 1e-12);
    const double k = (lvl - c.g_min) / spacing;
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(Device, WriteVerifyAlreadyWithinTolerance) {
  DeviceConfig c;
  Rng rng(8);
  const CellState cell{40.0, 0, std::nullopt};
  c.read_noise_std = 0.0;
  const auto [after, rep] = write_verify(cell, 40.5, 1.0, rng, c);
  EXPECT_EQ(rep.cycles_used, 0);
  EXPECT_TRUE(rep.converged);
  EXPECT_DOUBLE_EQ(after.conductance, 40.0);
}

TEST(Device, DeterministicConvergenceBound) {
  for (double step : {0.5, 1.0, 2.0}) {
    DeviceConfig c = deterministic(step);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const double g0 = rng.uniform(c.g_min, c.g_max);
      const double target = rng.uniform(c.g_min, c.g_max);
      const auto [cell, rep] = write_verify(CellState{g0, 0, std::nullopt}, target, step / 2, rng, c);
      EXPECT_TRUE(rep.converged);
      EXPECT_LE(rep.cycles_used, static_cast<int>(std::ceil(std::abs(g0 - target) / step)) + 1);
      EXPECT_LE(std::abs(cell.conductance - target), step / 2 + 1e-12);
    }
  }
}

TEST(Device, ConvergedImpliesVerifyWithinTolerance) {
  DeviceConfig c;
  Rng rng(10);
  for (int i = 0; i < 300; ++i) {
    const double target = quantize_level(rng.uniform(c.g_min, c.g_max), c);
    const auto [cell, rep] = write_verify(CellState::reset_state(c), target, 1.0, rng, c);
    EXPECT_GE(rep.final_error, 0.0);
    if (rep.converged) EXPECT_LE(rep.final_error, 1.0);
    EXPECT_EQ(cell.cycle_count, static_cast<std::uint64_t>(rep.cycles_used));
  }
}

TEST(Device, NonConvergenceReportedNotThrown) {
  DeviceConfig c = deterministic(0.1);
  c.max_cycles = 3;
  Rng rng(11);
  const auto [cell, rep] = write_verify(CellState::reset_state(c), 70.0, 0.5, rng, c);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.cycles_used, 3);
}

TEST(Device, WriteVerifyReproducible) {
  DeviceConfig c;
  Rng a(12), b(12);
  const auto ra = write_verify(CellState::reset_state(c), 55.0, 1.0, a, c);
  const auto rb = write_verify(CellState::reset_state(c), 55.0, 1.0, b, c);
  EXPECT_EQ(ra.first.conductance, rb.first.conductance);
  EXPECT_EQ(ra.second.cycles_used, rb.second.cycles_used);
}

TEST(Device, CalibratedDefaultsGiveAboutFiftyCycles) {
  DeviceConfig c;
  const auto rows = calibration_sweep(c, {0.5, 1.0, 2.0, 4.0}, 1000, 2024);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_GE(rows[1].mean_cycles, 45.0);
  EXPECT_LE(rows[1].mean_cycles, 55.0);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].mean_cycles, rows[i - 1].mean_cycles);
  for (const auto& r : rows) EXPECT_GT(r.converged_fraction, 0.99);
}

TEST(Device, DeterministicSweepMatchesClosedForm) {
  // Noise-free cells need ceil((D - tol) / step) pulses for a distance D > tol.
  DeviceConfig c = deterministic(0.7);
  const double tol = 1.0;
  double analytic = 0;
  for (int k = 0; k < c.n_levels; ++k) {
    const double d = k * c.level_spacing();
    analytic += d > tol ? std::ceil((d - tol) / c.pulse_step_mean) : 0.0;
  }
  analytic /= c.n_levels;
  const auto rows = calibration_sweep(c, {tol}, 4000, 77);
  // Sampling error of the level draw: sd of cycles is about 29, so 4000 cells give < 1.5 at 3 sigma.
  EXPECT_NEAR(rows[0].mean_cycles, analytic, 1.5);
  EXPECT_DOUBLE_EQ(rows[0].converged_fraction, 1.0);
}

TEST(Device, DriftDisabledIsNoOpEnabledDecays) {
  DeviceConfig c;
  CellState cell{60.0, 0, std::nullopt};
  EXPECT_DOUBLE_EQ(apply_drift(cell, 1e6, c).conductance, 60.0);
  c.drift_enabled = true;
  c.drift_exponent = 0.01;
  const double expect = 60.0 * std::pow(1e6 / c.drift_t0, -0.01);
  EXPECT_NEAR(apply_drift(cell, 1e6, c).conductance, expect, 1e-9);
}

TEST(Device, ResetReturnsToGmin) {
  DeviceConfig c;
  const CellState cell = reset_cell(CellState{55.0, 3, 55.0}, c);
  EXPECT_DOUBLE_EQ(cell.conductance, c.g_min);
  EXPECT_EQ(cell.cycle_count, 4u);
}
