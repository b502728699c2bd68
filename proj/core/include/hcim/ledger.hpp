#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hcim {

enum class EventKind : std::size_t {
  TrainingUpdate = 0,  // one scalar parameter touched by the optimizer
  RmPulse,             // one programming pulse on one RM cell
  SramByte,            // one byte written to the digital SRAM buffer
  AnalogueCellRead,    // one cell participating in one analogue MVM
  DigitalMac,          // one digital multiply-accumulate
  DacConversion,
  AdcConversion,
  GpuMacBaseline,      // one MAC the GPU proxy would perform for the same inference
};

inline constexpr std::size_t kEventKindCount = 8;

std::string_view to_string(EventKind kind);
/// Throws std::invalid_argument for unknown kinds.
EventKind parse_event_kind(std::string_view name);

/// Per-event energies in joules. The defaults are placeholders for
/// comparison work, not measurements; override them in the run config.
struct EnergyConfig {
  double e_rm_pulse = 10e-12;      // per programming pulse (incl. verify read)
  double e_rm_read = 0.01e-12;     // per cell per analogue MVM
  double e_sram_write = 1e-12;     // per byte
  double e_digital_mac = 1e-12;    // per MAC
  double e_dac = 1e-12;            // per conversion
  double e_adc = 2e-12;            // per conversion
  double e_gpu_mac = 10e-12;       // per MAC, GPU proxy

  void validate() const;
};

void to_json(nlohmann::json& j, const EnergyConfig& c);
void from_json(const nlohmann::json& j, EnergyConfig& c);

/// Counters for update, write and inference events. Counters only grow;
/// merging two ledgers adds them component-wise.
class CostLedger {
 public:
  CostLedger() = default;

  void record(EventKind kind, std::uint64_t magnitude);
  /// String form for event streams; throws on unknown kinds.
  void record(std::string_view kind, std::uint64_t magnitude);

  std::uint64_t count(EventKind kind) const {
    return counters_[static_cast<std::size_t>(kind)];
  }

  std::uint64_t training_updates() const { return count(EventKind::TrainingUpdate); }
  std::uint64_t rm_pulses() const { return count(EventKind::RmPulse); }
  std::uint64_t sram_bytes() const { return count(EventKind::SramByte); }

  CostLedger& merge(const CostLedger& other);
  friend CostLedger merged(CostLedger a, const CostLedger& b) { return a.merge(b); }

  bool operator==(const CostLedger& other) const { return counters_ == other.counters_; }

  /// Streams one JSON object per record() call to `sink`, tagged with
  /// `phase`. Pass nullptr to stop streaming.
  void stream_to(std::ostream* sink, std::string phase = {});

  nlohmann::json to_json() const;
  static CostLedger from_json(const nlohmann::json& j);

 private:
  std::array<std::uint64_t, kEventKindCount> counters_{};
  std::ostream* sink_ = nullptr;
  std::string phase_;
};

/// Joules per category. Write = RM pulses + SRAM bytes; inference =
/// analogue reads + converters + digital MACs; the GPU proxy is separate.
struct EnergyReport {
  double rm_write = 0, sram_write = 0, analogue_read = 0, digital_mac = 0, dac = 0,
         adc = 0, gpu_baseline = 0;

  double write_total() const { return rm_write + sram_write; }
  double inference_total() const { return analogue_read + digital_mac + dac + adc; }
  double total() const { return write_total() + inference_total(); }

  /// Category lookup by name (see category_names()); throws on unknown names.
  double category(std::string_view name) const;
  static const std::array<std::string_view, 10>& category_names();

  nlohmann::json to_json() const;
};

EnergyReport energy_report(const CostLedger& ledger, const EnergyConfig& cfg);

struct ReductionFactor {
  double value = 0.0;
  bool infinite = false;  // ours == 0 with baseline > 0

  std::string to_string() const;
};

/// baseline / ours. Both zero gives 1.0; ours zero alone is flagged infinite.
ReductionFactor reduction_factor(double baseline, double ours);
ReductionFactor reduction_factor(const EnergyReport& baseline, const EnergyReport& ours,
                                 std::string_view category);

}  // namespace hcim
