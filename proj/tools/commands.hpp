#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcim/config.hpp"
#include "hcim/device.hpp"

namespace hcim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

struct Options {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> task;
  std::optional<std::string> out;
  int jobs = 1;
  int num_seeds = 1;
  bool search = false;   // calibrate: also grid-search the pulse parameters
  bool corrupt = false;  // gradcheck: negative control
  std::string baseline;  // report
  std::string ours;      // report
};

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err);
int cmd_glyph_demo(const Options& o, std::ostream& out, std::ostream& err);
int cmd_run(const Options& o, std::ostream& out, std::ostream& err);
int cmd_report(const Options& o, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err);

/// Bundled 32 x 32 binary glyph maps ("UL", "CL"); row-major, 1 = on.
using GlyphMap = std::array<std::uint8_t, 32 * 32>;
GlyphMap glyph(const std::string& text);

struct GlyphResult {
  std::string name;
  std::vector<double> target;      // µS, row-major 32 x 32
  std::vector<double> programmed;  // true conductance after write-verify
  double mean_abs_error = 0.0;
  double max_abs_error = 0.0;
  double mean_cycles = 0.0;
  std::uint64_t total_pulses = 0;
};

/// On pixels target 60 µS, off pixels 20 µS (level-quantized); every cell
/// starts at reset and is write-verified at `tolerance`.
GlyphResult program_glyph(const std::string& text, const DeviceConfig& device, double tolerance,
                          std::uint64_t seed);

}  // namespace hcim::cli
