#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hcim/device.hpp"
#include "hcim/ledger.hpp"
#include "hcim/rng.hpp"

namespace hcim {

inline constexpr std::size_t kTileSize = 32;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Signed weight <-> differential conductance pair. w = (g+ - g-) * weight_scale.
struct DifferentialMapping {
  double weight_scale = 1.0;  // weight units per µS
  double w_clip = 0.0;        // weight_scale * (g_max - g_min)

  /// weight_scale = max|W| / (g_max - g_min); an all-zero W maps with scale
  /// 1 / (g_max - g_min).
  static DifferentialMapping for_matrix(const Eigen::MatrixXd& w, const DeviceConfig& cfg);
};

/// Uniform signed converters with saturating clamps. `ideal` bypasses
/// quantization entirely (infinite resolution).
struct ConverterConfig {
  int dac_bits = 16;
  int adc_bits = 14;
  double input_full_scale = 1.0;
  /// <= 0 selects the default tile_cols * g_max * input_full_scale.
  double output_full_scale = 0.0;
  /// Rescale each input vector digitally so its max |x| spans the DAC range.
  bool auto_input_range = true;
  bool ideal = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const ConverterConfig& c);
void from_json(const nlohmann::json& j, ConverterConfig& c);

/// Mid-tread two's-complement quantizer over [-full_scale, +full_scale).
double quantize_signed(double x, int bits, double full_scale);

struct MappedTargets {
  Eigen::MatrixXd g_pos;
  Eigen::MatrixXd g_neg;
  std::size_t clipped = 0;
};

/// Differential encoding with the smaller cell of each pair pinned at g_min;
/// targets are level-quantized. Entries beyond w_clip are clipped and counted.
MappedTargets map_weights(const Eigen::MatrixXd& w, const DifferentialMapping& mapping,
                          const DeviceConfig& cfg);

struct CrossbarTile {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<CellState> cells_pos;  // row-major
  std::vector<CellState> cells_neg;

  CrossbarTile(std::size_t r, std::size_t c, const DeviceConfig& cfg);
  CellState& pos(std::size_t r, std::size_t c) { return cells_pos[r * cols + c]; }
  CellState& neg(std::size_t r, std::size_t c) { return cells_neg[r * cols + c]; }
  const CellState& pos(std::size_t r, std::size_t c) const { return cells_pos[r * cols + c]; }
  const CellState& neg(std::size_t r, std::size_t c) const { return cells_neg[r * cols + c]; }
};

struct ProgramReport {
  std::uint64_t total_pulses = 0;
  std::size_t cells = 0;          // cells verified (2 per weight)
  std::size_t cells_changed = 0;  // cells whose quantized target level changed
  std::size_t non_converged = 0;
  std::size_t clipped = 0;
  double mean_abs_error = 0.0;    // true |g - target| over all cells, µS
  double max_abs_error = 0.0;
};

/// A d x k signed weight matrix held as differential pairs over a grid of
/// 32 x 32 tiles, plus the exact digital shadow of the last programmed W.
class AnalogueMatrix {
 public:
  AnalogueMatrix(std::size_t rows, std::size_t cols, DeviceConfig cfg);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tile_rows() const { return (rows_ + kTileSize - 1) / kTileSize; }
  std::size_t tile_cols() const { return (cols_ + kTileSize - 1) / kTileSize; }
  const CrossbarTile& tile(std::size_t tr, std::size_t tc) const { return tiles_[tr * tile_cols() + tc]; }
  const DeviceConfig& device() const { return cfg_; }

  /// Write-verifies every pair to its target at `tolerance`. A cell whose
  /// quantized target differs from the one it last held is RESET first and
  /// programmed from g_min; unchanged cells are only verified (and touched
  /// up if they fail verification). The mapping scale is fixed by the first
  /// call and reused afterwards. Pulses go to `ledger` as RM write events.
  ProgramReport program(const Eigen::MatrixXd& w, double tolerance, Rng& rng,
                        CostLedger* ledger = nullptr);

  /// Sets every cell exactly to its quantized target, spending no pulses.
  /// Reference programming for oracles and tests.
  void program_ideal(const Eigen::MatrixXd& w);

  /// Analogue MVM: DAC quantization of x, per-tile (G+ - G-) x with read
  /// noise, per-tile ADC quantization, digital accumulation and rescale.
  /// `rng` may be null only when read_noise_std == 0.
  Eigen::VectorXd mvm(const Eigen::VectorXd& x, Rng* rng, const ConverterConfig& conv,
                      CostLedger* ledger = nullptr) const;

  /// W0^T delta using the digital shadow (exact, noiseless).
  Eigen::VectorXd transpose_mvm(const Eigen::VectorXd& delta) const;

  /// Appends zero rows: new cells at reset, shadow rows zero.
  void grow_rows(std::size_t extra);

  bool programmed() const { return mapping_.has_value(); }
  const DifferentialMapping& mapping() const;
  const Eigen::MatrixXd& digital_shadow() const { return shadow_; }
  /// (G+ - G-) * weight_scale of the stored (noise-free) conductances.
  Eigen::MatrixXd realized_weights() const;
  Eigen::MatrixXd conductance_pos() const;
  Eigen::MatrixXd conductance_neg() const;

  std::uint64_t conductance_checksum() const;
  std::uint64_t shadow_checksum() const;

  /// CSV: row,col,g_plus_uS,g_minus_uS
  void write_conductance_csv(std::ostream& out) const;

 private:
  CellState& pos_cell(std::size_t r, std::size_t c);
  CellState& neg_cell(std::size_t r, std::size_t c);
  void refresh_cache();

  std::size_t rows_, cols_;
  DeviceConfig cfg_;
  std::vector<CrossbarTile> tiles_;
  std::optional<DifferentialMapping> mapping_;
  Eigen::MatrixXd shadow_;
  Eigen::MatrixXd g_diff_;  // cached G+ - G- in µS
};

std::uint64_t checksum(const Eigen::MatrixXd& m);

}  // namespace hcim
