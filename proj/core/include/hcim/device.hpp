#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcim/rng.hpp"

namespace hcim {

/// Raised when a conductance target lies outside [g_min, g_max].
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Physics parameters of one multilevel RM cell. Conductances in µS.
///
/// pulse_step_mean / pulse_step_std are the calibrated defaults: with them,
/// write-verify from the reset state to a uniformly drawn level target takes
/// about 50 pulses on average at a 1 µS tolerance (see `hcim calibrate
/// --search` for the grid search that produced them).
struct DeviceConfig {
  double g_min = 10.0;
  double g_max = 80.0;
  int n_levels = 128;
  double pulse_step_mean = 0.62;
  double pulse_step_std = 0.55;
  double read_noise_std = 0.2;
  int max_cycles = 500;
  bool drift_enabled = false;
  double drift_exponent = 0.005;
  double drift_t0 = 1.0;  // seconds; reference time of the power-law drift

  void validate() const;
  double level_spacing() const { return (g_max - g_min) / (n_levels - 1); }
};

void to_json(nlohmann::json& j, const DeviceConfig& c);
void from_json(const nlohmann::json& j, DeviceConfig& c);

struct CellState {
  double conductance = 0.0;
  std::uint64_t cycle_count = 0;  // cumulative pulses, never decreases
  std::optional<double> last_target;

  static CellState reset_state(const DeviceConfig& cfg) { return {cfg.g_min, 0, std::nullopt}; }
};

struct WriteReport {
  int cycles_used = 0;
  double final_error = 0.0;  // |last verify read - target|
  bool converged = false;
};

/// One programming pulse: a step of magnitude max(0, mean + eta) towards
/// the target, eta ~ N(0, pulse_step_std), clipped to [g_min, g_max].
CellState program_pulse(CellState cell, double target, Rng& rng, const DeviceConfig& cfg);

/// Noisy readout. Never mutates the cell.
double read(const CellState& cell, Rng& rng, const DeviceConfig& cfg);

/// Read-then-pulse until the verify read is within `tolerance` of target or
/// max_cycles pulses were spent. Non-convergence is reported, not thrown.
std::pair<CellState, WriteReport> write_verify(CellState cell, double target, double tolerance,
                                               Rng& rng, const DeviceConfig& cfg);

/// Snap to the nearest of n_levels equally spaced levels over [g_min, g_max].
double quantize_level(double target, const DeviceConfig& cfg);

/// Block RESET: returns the cell to g_min. Counts as one pulse.
CellState reset_cell(CellState cell, const DeviceConfig& cfg);

/// Power-law retention drift g(t) = g0 * (t / t0)^(-drift_exponent), applied
/// to the conductance programmed at t0. No-op when drift is disabled.
CellState apply_drift(CellState cell, double t_seconds, const DeviceConfig& cfg);

struct CalibrationRow {
  double tolerance = 0.0;
  double mean_cycles = 0.0;
  double std_cycles = 0.0;
  double mean_final_error = 0.0;  // true |g - target| after programming
  double converged_fraction = 0.0;
};

/// Monte Carlo tolerance sweep. Cell i starts at reset and is programmed to
/// a uniformly drawn level target using stream derive_seed(seed, i), so the
/// same cell population is used at every tolerance.
std::vector<CalibrationRow> calibration_sweep(const DeviceConfig& cfg,
                                              const std::vector<double>& tolerances,
                                              std::size_t n_cells, std::uint64_t seed);

/// Expected pulses for programming each target from reset, estimated by
/// Monte Carlo with `repeats` independent trials per target.
double expected_pulses_from_reset(const DeviceConfig& cfg, const std::vector<double>& targets,
                                  double tolerance, int repeats, std::uint64_t seed);

struct StepSearchPoint {
  double pulse_step_mean = 0.0;
  double pulse_step_std = 0.0;
  double mean_cycles = 0.0;
};

/// Grid search over (pulse_step_mean, pulse_step_std) for the mean cycle
/// count at `tolerance`. Returns every grid point, best match to
/// `target_cycles` first.
std::vector<StepSearchPoint> search_pulse_parameters(DeviceConfig cfg, double tolerance,
                                                     double target_cycles,
                                                     const std::vector<double>& means,
                                                     const std::vector<double>& stds,
                                                     std::size_t n_cells, std::uint64_t seed);

}  // namespace hcim
