#include "hcim/ledger.hpp"

#include <ostream>

#include "hcim/csv.hpp"

namespace hcim {

namespace {

constexpr std::array<std::string_view, kEventKindCount> kKindNames = {
    "training_updates", "rm_pulses",       "sram_bytes",      "analogue_cell_reads",
    "digital_macs",     "dac_conversions", "adc_conversions", "gpu_macs_baseline",
};

}  // namespace

std::string_view to_string(EventKind kind) {
  return kKindNames.at(static_cast<std::size_t>(kind));
}

EventKind parse_event_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<EventKind>(i);
  }
  throw std::invalid_argument("unknown ledger event kind: " + std::string(name));
}

void EnergyConfig::validate() const {
  for (double e : {e_rm_pulse, e_rm_read, e_sram_write, e_digital_mac, e_dac, e_adc, e_gpu_mac}) {
    if (!(e >= 0.0)) throw std::invalid_argument("energy constants must be >= 0");
  }
}

void to_json(nlohmann::json& j, const EnergyConfig& c) {
  j = {{"e_rm_pulse", c.e_rm_pulse},       {"e_rm_read", c.e_rm_read},
       {"e_sram_write", c.e_sram_write},   {"e_digital_mac", c.e_digital_mac},
       {"e_dac", c.e_dac},                 {"e_adc", c.e_adc},
       {"e_gpu_mac", c.e_gpu_mac}};
}

void from_json(const nlohmann::json& j, EnergyConfig& c) {
  c.e_rm_pulse = j.value("e_rm_pulse", c.e_rm_pulse);
  c.e_rm_read = j.value("e_rm_read", c.e_rm_read);
  c.e_sram_write = j.value("e_sram_write", c.e_sram_write);
  c.e_digital_mac = j.value("e_digital_mac", c.e_digital_mac);
  c.e_dac = j.value("e_dac", c.e_dac);
  c.e_adc = j.value("e_adc", c.e_adc);
  c.e_gpu_mac = j.value("e_gpu_mac", c.e_gpu_mac);
}

void CostLedger::record(EventKind kind, std::uint64_t magnitude) {
  const auto idx = static_cast<std::size_t>(kind);
  if (idx >= kEventKindCount) throw std::invalid_argument("unknown ledger event kind");
  counters_[idx] += magnitude;
  if (sink_ != nullptr && magnitude > 0) {
    nlohmann::json ev = {{"phase", phase_}, {"kind", to_string(kind)}, {"n", magnitude}};
    *sink_ << ev.dump() << '\n';
  }
}

void CostLedger::record(std::string_view kind, std::uint64_t magnitude) {
  record(parse_event_kind(kind), magnitude);
}

CostLedger& CostLedger::merge(const CostLedger& other) {
  for (std::size_t i = 0; i < kEventKindCount; ++i) counters_[i] += other.counters_[i];
  return *this;
}

void CostLedger::stream_to(std::ostream* sink, std::string phase) {
  sink_ = sink;
  phase_ = std::move(phase);
}

nlohmann::json CostLedger::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kEventKindCount; ++i) j[std::string(kKindNames[i])] = counters_[i];
  return j;
}

CostLedger CostLedger::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("ledger JSON must be an object");
  CostLedger ledger;
  for (const auto& [key, value] : j.items()) {
    ledger.counters_[static_cast<std::size_t>(parse_event_kind(key))] =
        value.get<std::uint64_t>();
  }
  return ledger;
}

const std::array<std::string_view, 10>& EnergyReport::category_names() {
  static const std::array<std::string_view, 10> names = {
      "rm_write",  "sram_write",      "analogue_read", "digital_mac",  "dac",
      "adc",       "gpu_baseline",    "write_total",   "inference_total", "total"};
  return names;
}

double EnergyReport::category(std::string_view name) const {
  if (name == "rm_write") return rm_write;
  if (name == "sram_write") return sram_write;
  if (name == "analogue_read") return analogue_read;
  if (name == "digital_mac") return digital_mac;
  if (name == "dac") return dac;
  if (name == "adc") return adc;
  if (name == "gpu_baseline") return gpu_baseline;
  if (name == "write_total") return write_total();
  if (name == "inference_total") return inference_total();
  if (name == "total") return total();
  throw std::invalid_argument("unknown energy category: " + std::string(name));
}

nlohmann::json EnergyReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (auto name : category_names()) j[std::string(name)] = category(name);
  return j;
}

EnergyReport energy_report(const CostLedger& ledger, const EnergyConfig& cfg) {
  auto n = [&](EventKind k) { return static_cast<double>(ledger.count(k)); };
  EnergyReport r;
  r.rm_write = n(EventKind::RmPulse) * cfg.e_rm_pulse;
  r.sram_write = n(EventKind::SramByte) * cfg.e_sram_write;
  r.analogue_read = n(EventKind::AnalogueCellRead) * cfg.e_rm_read;
  r.digital_mac = n(EventKind::DigitalMac) * cfg.e_digital_mac;
  r.dac = n(EventKind::DacConversion) * cfg.e_dac;
  r.adc = n(EventKind::AdcConversion) * cfg.e_adc;
  r.gpu_baseline = n(EventKind::GpuMacBaseline) * cfg.e_gpu_mac;
  return r;
}

std::string ReductionFactor::to_string() const {
  return infinite ? std::string("inf") : format_double(value);
}

ReductionFactor reduction_factor(double baseline, double ours) {
  if (ours > 0.0) return {baseline / ours, false};
  if (baseline == 0.0) return {1.0, false};
  return {0.0, true};
}

ReductionFactor reduction_factor(const EnergyReport& baseline, const EnergyReport& ours,
                                 std::string_view category) {
  return reduction_factor(baseline.category(category), ours.category(category));
}

}  // namespace hcim
