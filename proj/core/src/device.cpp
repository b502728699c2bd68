#include "hcim/device.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hcim {

void DeviceConfig::validate() const {
  if (!(g_min > 0.0 && g_min < g_max)) throw std::invalid_argument("device: need 0 < g_min < g_max");
  if (n_levels < 2) throw std::invalid_argument("device: n_levels must be >= 2");
  if (!(pulse_step_std >= 0.0) || !(read_noise_std >= 0.0))
    throw std::invalid_argument("device: noise std must be >= 0");
  if (max_cycles < 1) throw std::invalid_argument("device: max_cycles must be >= 1");
  if (!(drift_t0 > 0.0)) throw std::invalid_argument("device: drift_t0 must be > 0");
}

void to_json(nlohmann::json& j, const DeviceConfig& c) {
  j = {{"g_min", c.g_min},
       {"g_max", c.g_max},
       {"n_levels", c.n_levels},
       {"pulse_step_mean", c.pulse_step_mean},
       {"pulse_step_std", c.pulse_step_std},
       {"read_noise_std", c.read_noise_std},
       {"max_cycles", c.max_cycles},
       {"drift_enabled", c.drift_enabled},
       {"drift_exponent", c.drift_exponent},
       {"drift_t0", c.drift_t0}};
}

void from_json(const nlohmann::json& j, DeviceConfig& c) {
  c.g_min = j.value("g_min", c.g_min);
  c.g_max = j.value("g_max", c.g_max);
  c.n_levels = j.value("n_levels", c.n_levels);
  c.pulse_step_mean = j.value("pulse_step_mean", c.pulse_step_mean);
  c.pulse_step_std = j.value("pulse_step_std", c.pulse_step_std);
  c.read_noise_std = j.value("read_noise_std", c.read_noise_std);
  c.max_cycles = j.value("max_cycles", c.max_cycles);
  c.drift_enabled = j.value("drift_enabled", c.drift_enabled);
  c.drift_exponent = j.value("drift_exponent", c.drift_exponent);
  c.drift_t0 = j.value("drift_t0", c.drift_t0);
}

namespace {

void check_target(double target, const DeviceConfig& cfg) {
  if (!(target >= cfg.g_min && target <= cfg.g_max)) {
    throw RangeError("conductance target " + std::to_string(target) + " uS outside [" +
                     std::to_string(cfg.g_min) + ", " + std::to_string(cfg.g_max) + "]");
  }
}

}  // namespace

CellState program_pulse(CellState cell, double target, Rng& rng, const DeviceConfig& cfg) {
  check_target(target, cfg);
  const double diff = target - cell.conductance;
  const double eta = cfg.pulse_step_std > 0.0 ? rng.normal(0.0, cfg.pulse_step_std) : 0.0;
  const double magnitude = std::max(0.0, cfg.pulse_step_mean + eta);
  const double direction = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  cell.conductance = std::clamp(cell.conductance + direction * magnitude, cfg.g_min, cfg.g_max);
  cell.cycle_count += 1;
  return cell;
}

double read(const CellState& cell, Rng& rng, const DeviceConfig& cfg) {
  if (cfg.read_noise_std == 0.0) return cell.conductance;
  return cell.conductance + rng.normal(0.0, cfg.read_noise_std);
}

std::pair<CellState, WriteReport> write_verify(CellState cell, double target, double tolerance,
                                               Rng& rng, const DeviceConfig& cfg) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("write_verify: tolerance must be > 0");
  check_target(target, cfg);
  WriteReport report;
  cell.last_target = target;
  while (true) {
    report.final_error = std::abs(read(cell, rng, cfg) - target);
    if (report.final_error <= tolerance) {
      report.converged = true;
      break;
    }
    if (report.cycles_used >= cfg.max_cycles) break;
    cell = program_pulse(cell, target, rng, cfg);
    ++report.cycles_used;
  }
  return {cell, report};
}

double quantize_level(double target, const DeviceConfig& cfg) {
  check_target(target, cfg);
  const double spacing = cfg.level_spacing();
  const double idx = std::round((target - cfg.g_min) / spacing);
  return std::min(cfg.g_max, cfg.g_min + idx * spacing);
}

CellState reset_cell(CellState cell, const DeviceConfig& cfg) {
  cell.conductance = cfg.g_min;
  cell.cycle_count += 1;
  cell.last_target.reset();
  return cell;
}

CellState apply_drift(CellState cell, double t_seconds, const DeviceConfig& cfg) {
  if (!cfg.drift_enabled || t_seconds <= cfg.drift_t0) return cell;
  const double factor = std::pow(t_seconds / cfg.drift_t0, -cfg.drift_exponent);
  cell.conductance = std::clamp(cell.conductance * factor, cfg.g_min, cfg.g_max);
  return cell;
}

namespace {

double draw_level_target(Rng& rng, const DeviceConfig& cfg) {
  const auto level = rng.uniform_int(static_cast<std::uint64_t>(cfg.n_levels));
  return std::min(cfg.g_max, cfg.g_min + static_cast<double>(level) * cfg.level_spacing());
}

}  // namespace

std::vector<CalibrationRow> calibration_sweep(const DeviceConfig& cfg,
                                              const std::vector<double>& tolerances,
                                              std::size_t n_cells, std::uint64_t seed) {
  cfg.validate();
  if (n_cells == 0) throw std::invalid_argument("calibration_sweep: n_cells must be > 0");
  std::vector<CalibrationRow> rows;
  rows.reserve(tolerances.size());
  for (double tol : tolerances) {
    double sum = 0, sum_sq = 0, err_sum = 0;
    std::size_t converged = 0;
    for (std::size_t i = 0; i < n_cells; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      const double target = draw_level_target(rng, cfg);
      auto [cell, report] = write_verify(CellState::reset_state(cfg), target, tol, rng, cfg);
      const double c = report.cycles_used;
      sum += c;
      sum_sq += c * c;
      err_sum += std::abs(cell.conductance - target);
      converged += report.converged ? 1 : 0;
    }
    const double n = static_cast<double>(n_cells);
    CalibrationRow row;
    row.tolerance = tol;
    row.mean_cycles = sum / n;
    row.std_cycles = std::sqrt(std::max(0.0, sum_sq / n - row.mean_cycles * row.mean_cycles));
    row.mean_final_error = err_sum / n;
    row.converged_fraction = static_cast<double>(converged) / n;
    rows.push_back(row);
  }
  return rows;
}

double expected_pulses_from_reset(const DeviceConfig& cfg, const std::vector<double>& targets,
                                  double tolerance, int repeats, std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int r = 0; r < repeats; ++r) {
      total += write_verify(CellState::reset_state(cfg), targets[i], tolerance, rng, cfg)
                   .second.cycles_used;
    }
  }
  return total / std::max(1, repeats);
}

std::vector<StepSearchPoint> search_pulse_parameters(DeviceConfig cfg, double tolerance,
                                                     double target_cycles,
                                                     const std::vector<double>& means,
                                                     const std::vector<double>& stds,
                                                     std::size_t n_cells, std::uint64_t seed) {
  std::vector<StepSearchPoint> points;
  for (double m : means) {
    for (double s : stds) {
      cfg.pulse_step_mean = m;
      cfg.pulse_step_std = s;
      const auto rows = calibration_sweep(cfg, {tolerance}, n_cells, seed);
      points.push_back({m, s, rows.front().mean_cycles});
    }
  }
  std::stable_sort(points.begin(), points.end(), [&](const auto& a, const auto& b) {
    return std::abs(a.mean_cycles - target_cycles) < std::abs(b.mean_cycles - target_cycles);
  });
  return points;
}

}  // namespace hcim
