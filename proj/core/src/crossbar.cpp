#include "hcim/crossbar.hpp"

#include <algorithm>
#include <array>
#include <span>
#include <cmath>
#include <ostream>

#include "hcim/csv.hpp"

namespace hcim {

DifferentialMapping DifferentialMapping::for_matrix(const Eigen::MatrixXd& w,
                                                    const DeviceConfig& cfg) {
  const double range = cfg.g_max - cfg.g_min;
  const double max_abs = w.size() > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
  DifferentialMapping m;
  m.weight_scale = max_abs > 0.0 ? max_abs / range : 1.0 / range;
  m.w_clip = m.weight_scale * range;
  return m;
}

void ConverterConfig::validate() const {
  if (dac_bits < 1 || adc_bits < 1 || dac_bits > 52 || adc_bits > 52)
    throw std::invalid_argument("converter bits must be in [1, 52]");
  if (!(input_full_scale > 0.0)) throw std::invalid_argument("input_full_scale must be > 0");
}

void to_json(nlohmann::json& j, const ConverterConfig& c) {
  j = {{"dac_bits", c.dac_bits},
       {"adc_bits", c.adc_bits},
       {"input_full_scale", c.input_full_scale},
       {"output_full_scale", c.output_full_scale},
       {"auto_input_range", c.auto_input_range},
       {"ideal", c.ideal}};
}

void from_json(const nlohmann::json& j, ConverterConfig& c) {
  c.dac_bits = j.value("dac_bits", c.dac_bits);
  c.adc_bits = j.value("adc_bits", c.adc_bits);
  c.input_full_scale = j.value("input_full_scale", c.input_full_scale);
  c.output_full_scale = j.value("output_full_scale", c.output_full_scale);
  c.auto_input_range = j.value("auto_input_range", c.auto_input_range);
  c.ideal = j.value("ideal", c.ideal);
}

double quantize_signed(double x, int bits, double full_scale) {
  const double half_levels = std::ldexp(1.0, bits - 1);
  const double step = full_scale / half_levels;
  const double code = std::clamp(std::round(x / step), -half_levels, half_levels - 1.0);
  return code * step;
}

MappedTargets map_weights(const Eigen::MatrixXd& w, const DifferentialMapping& mapping,
                          const DeviceConfig& cfg) {
  MappedTargets out;
  out.g_pos.setConstant(w.rows(), w.cols(), cfg.g_min);
  out.g_neg.setConstant(w.rows(), w.cols(), cfg.g_min);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      double v = w(r, c);
      if (!std::isfinite(v)) throw std::invalid_argument("map_weights: non-finite weight");
      if (std::abs(v) > mapping.w_clip) {
        v = std::copysign(mapping.w_clip, v);
        ++out.clipped;
      }
      const double g = std::min(cfg.g_max, cfg.g_min + std::abs(v) / mapping.weight_scale);
      (v >= 0.0 ? out.g_pos : out.g_neg)(r, c) = quantize_level(g, cfg);
    }
  }
  return out;
}

CrossbarTile::CrossbarTile(std::size_t r, std::size_t c, const DeviceConfig& cfg)
    : rows(r), cols(c), cells_pos(r * c, CellState::reset_state(cfg)),
      cells_neg(r * c, CellState::reset_state(cfg)) {
  if (r == 0 || c == 0 || r > kTileSize || c > kTileSize)
    throw ShapeError("tile dimensions must be within 1..32");
}

AnalogueMatrix::AnalogueMatrix(std::size_t rows, std::size_t cols, DeviceConfig cfg)
    : rows_(rows), cols_(cols), cfg_(cfg) {
  if (rows == 0 || cols == 0) throw ShapeError("AnalogueMatrix: empty shape");
  cfg_.validate();
  for (std::size_t tr = 0; tr < tile_rows(); ++tr) {
    for (std::size_t tc = 0; tc < tile_cols(); ++tc) {
      tiles_.emplace_back(std::min(kTileSize, rows_ - tr * kTileSize),
                          std::min(kTileSize, cols_ - tc * kTileSize), cfg_);
    }
  }
  shadow_.setZero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  refresh_cache();
}

CellState& AnalogueMatrix::pos_cell(std::size_t r, std::size_t c) {
  return tiles_[(r / kTileSize) * tile_cols() + c / kTileSize].pos(r % kTileSize, c % kTileSize);
}

CellState& AnalogueMatrix::neg_cell(std::size_t r, std::size_t c) {
  return tiles_[(r / kTileSize) * tile_cols() + c / kTileSize].neg(r % kTileSize, c % kTileSize);
}

const DifferentialMapping& AnalogueMatrix::mapping() const {
  if (!mapping_) throw std::logic_error("AnalogueMatrix: not programmed yet");
  return *mapping_;
}

ProgramReport AnalogueMatrix::program(const Eigen::MatrixXd& w, double tolerance, Rng& rng,
                                      CostLedger* ledger) {
  if (static_cast<std::size_t>(w.rows()) != rows_ || static_cast<std::size_t>(w.cols()) != cols_)
    throw ShapeError("program: weight shape does not match the array");
  if (!mapping_) mapping_ = DifferentialMapping::for_matrix(w, cfg_);
  const MappedTargets targets = map_weights(w, *mapping_, cfg_);

  ProgramReport report;
  report.clipped = targets.clipped;
  double err_sum = 0.0;
  auto write_one = [&](CellState& cell, double target) {
    const bool changed = !cell.last_target || *cell.last_target != target;
    if (changed) {
      ++report.cells_changed;
      if (cell.conductance != cfg_.g_min) {
        cell = reset_cell(cell, cfg_);
        report.total_pulses += 1;
      }
    }
    auto [next, wr] = write_verify(cell, target, tolerance, rng, cfg_);
    cell = next;
    report.total_pulses += static_cast<std::uint64_t>(wr.cycles_used);
    report.non_converged += wr.converged ? 0 : 1;
    const double err = std::abs(cell.conductance - target);
    err_sum += err;
    report.max_abs_error = std::max(report.max_abs_error, err);
    ++report.cells;
  };
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      const auto ri = static_cast<Eigen::Index>(r), ci = static_cast<Eigen::Index>(c);
      write_one(pos_cell(r, c), targets.g_pos(ri, ci));
      write_one(neg_cell(r, c), targets.g_neg(ri, ci));
    }
  }
  report.mean_abs_error = report.cells > 0 ? err_sum / static_cast<double>(report.cells) : 0.0;
  shadow_ = w;
  refresh_cache();
  if (ledger != nullptr) ledger->record(EventKind::RmPulse, report.total_pulses);
  return report;
}

void AnalogueMatrix::program_ideal(const Eigen::MatrixXd& w) {
  if (static_cast<std::size_t>(w.rows()) != rows_ || static_cast<std::size_t>(w.cols()) != cols_)
    throw ShapeError("program_ideal: weight shape does not match the array");
  if (!mapping_) mapping_ = DifferentialMapping::for_matrix(w, cfg_);
  const MappedTargets targets = map_weights(w, *mapping_, cfg_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      const auto ri = static_cast<Eigen::Index>(r), ci = static_cast<Eigen::Index>(c);
      pos_cell(r, c).conductance = targets.g_pos(ri, ci);
      pos_cell(r, c).last_target = targets.g_pos(ri, ci);
      neg_cell(r, c).conductance = targets.g_neg(ri, ci);
      neg_cell(r, c).last_target = targets.g_neg(ri, ci);
    }
  }
  shadow_ = w;
  refresh_cache();
}

void AnalogueMatrix::refresh_cache() {
  g_diff_ = conductance_pos() - conductance_neg();
}

Eigen::VectorXd AnalogueMatrix::mvm(const Eigen::VectorXd& x, Rng* rng,
                                    const ConverterConfig& conv, CostLedger* ledger) const {
  if (static_cast<std::size_t>(x.size()) != cols_)
    throw ShapeError("mvm: input length " + std::to_string(x.size()) + " != " +
                     std::to_string(cols_));
  const double read_std = cfg_.read_noise_std;
  if (read_std > 0.0 && rng == nullptr) throw std::invalid_argument("mvm: read noise needs an rng");

  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows_));
  if (ledger != nullptr) {
    ledger->record(EventKind::AnalogueCellRead, 2 * rows_ * cols_);
    ledger->record(EventKind::DacConversion, cols_ * tile_rows());
    ledger->record(EventKind::AdcConversion, rows_ * tile_cols());
    ledger->record(EventKind::DigitalMac, rows_ * tile_cols());
  }

  // Digital pre-scale so the vector spans the DAC range, undone after the ADC.
  double pre_scale = 1.0;
  if (conv.auto_input_range) {
    const double max_abs = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
    if (max_abs == 0.0) return y;
    pre_scale = conv.input_full_scale / max_abs;
  }
  Eigen::VectorXd xq = x * pre_scale;
  if (!conv.ideal) {
    for (Eigen::Index i = 0; i < xq.size(); ++i)
      xq(i) = quantize_signed(xq(i), conv.dac_bits, conv.input_full_scale);
  }

  for (std::size_t tr = 0; tr < tile_rows(); ++tr) {
    for (std::size_t tc = 0; tc < tile_cols(); ++tc) {
      const auto& t = tile(tr, tc);
      const auto r0 = static_cast<Eigen::Index>(tr * kTileSize);
      const auto c0 = static_cast<Eigen::Index>(tc * kTileSize);
      const auto nr = static_cast<Eigen::Index>(t.rows);
      const auto nc = static_cast<Eigen::Index>(t.cols);
      const auto xs = xq.segment(c0, nc);
      Eigen::VectorXd part = g_diff_.block(r0, c0, nr, nc) * xs;
      if (read_std > 0.0) {
        // Independent N(0, s^2) read noise on each of the 2*nc cells feeding
        // output i sums to N(0, 2 s^2 |x|^2): drawn once per output.
        const double out_std = read_std * std::sqrt(2.0 * xs.squaredNorm());
        for (Eigen::Index i = 0; i < nr; ++i) part(i) += rng->normal(0.0, out_std);
      }
      if (!conv.ideal) {
        const double out_fs = conv.output_full_scale > 0.0
                                  ? conv.output_full_scale
                                  : static_cast<double>(nc) * cfg_.g_max * conv.input_full_scale;
        for (Eigen::Index i = 0; i < nr; ++i) part(i) = quantize_signed(part(i), conv.adc_bits, out_fs);
      }
      y.segment(r0, nr) += part;
    }
  }
  const double scale = mapping_ ? mapping_->weight_scale : 0.0;
  return y * (scale / pre_scale);
}

Eigen::VectorXd AnalogueMatrix::transpose_mvm(const Eigen::VectorXd& delta) const {
  if (static_cast<std::size_t>(delta.size()) != rows_)
    throw ShapeError("transpose_mvm: delta length does not match rows");
  return shadow_.transpose() * delta;
}

void AnalogueMatrix::grow_rows(std::size_t extra) {
  if (extra == 0) return;
  AnalogueMatrix grown(rows_ + extra, cols_, cfg_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      grown.pos_cell(r, c) = pos_cell(r, c);
      grown.neg_cell(r, c) = neg_cell(r, c);
    }
  }
  grown.mapping_ = mapping_;
  grown.shadow_.topRows(static_cast<Eigen::Index>(rows_)) = shadow_;
  grown.refresh_cache();
  *this = std::move(grown);
}

Eigen::MatrixXd AnalogueMatrix::conductance_pos() const {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c)
      g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          tile(r / kTileSize, c / kTileSize).pos(r % kTileSize, c % kTileSize).conductance;
  return g;
}

Eigen::MatrixXd AnalogueMatrix::conductance_neg() const {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c)
      g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          tile(r / kTileSize, c / kTileSize).neg(r % kTileSize, c % kTileSize).conductance;
  return g;
}

Eigen::MatrixXd AnalogueMatrix::realized_weights() const {
  const double scale = mapping_ ? mapping_->weight_scale : 0.0;
  return g_diff_ * scale;
}

std::uint64_t checksum(const Eigen::MatrixXd& m) {
  std::uint64_t h = fnv1a64(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size()))));
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()),
                                 static_cast<std::uint64_t>(m.cols())};
  return fnv1a64(std::as_bytes(std::span(dims)), h);
}

std::uint64_t AnalogueMatrix::conductance_checksum() const {
  const std::array<std::uint64_t, 2> parts{checksum(conductance_pos()),
                                           checksum(conductance_neg())};
  return fnv1a64(std::as_bytes(std::span(parts)));
}

std::uint64_t AnalogueMatrix::shadow_checksum() const { return checksum(shadow_); }

void AnalogueMatrix::write_conductance_csv(std::ostream& out) const {
  CsvWriter csv(out, {"row", "col", "g_plus_uS", "g_minus_uS"});
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      const auto& t = tile(r / kTileSize, c / kTileSize);
      csv.cell(r).cell(c)
          .cell(t.pos(r % kTileSize, c % kTileSize).conductance)
          .cell(t.neg(r % kTileSize, c % kTileSize).conductance);
      csv.end_row();
    }
  }
}

}  // namespace hcim
