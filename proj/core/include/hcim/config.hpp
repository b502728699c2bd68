#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcim/adaptation.hpp"
#include "hcim/crossbar.hpp"
#include "hcim/device.hpp"
#include "hcim/faces.hpp"
#include "hcim/ledger.hpp"
#include "hcim/mixer.hpp"
#include "hcim/rsnn.hpp"
#include "hcim/spikes.hpp"

namespace hcim {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { Face, Speaker };
std::string to_string(Task t);
Task parse_task(const std::string& s);

struct PhaseSet {
  AdaptationConfig learn;
  AdaptationConfig unlearn;
  AdaptationConfig continual;
};

struct FaceTaskConfig {
  /// OLIV1 file; empty selects the synthetic generator.
  std::string dataset;
  SyntheticFaceConfig synthetic;
  std::uint64_t synthetic_seed = 2024;
  std::vector<int> learn_ids{0, 1, 2, 3};
  std::vector<int> unlearn_ids{2};
  std::vector<int> continual_ids{4};
  std::size_t train_per_id = 8;
  /// Rescale every image to zero mean and unit variance before training.
  bool standardize = true;
  MixerConfig mixer;
  PhaseSet phases;
};

struct SpeakerTaskConfig {
  /// HCNT spike container; empty selects the synthetic generator.
  std::string dataset;
  std::size_t speakers = 5;
  std::size_t train_per_speaker = 30;
  std::size_t test_per_speaker = 20;
  std::uint64_t synthetic_seed = 2024;
  SpikeGenConfig generator;
  std::vector<int> learn_ids{0, 1, 2, 3};
  std::vector<int> unlearn_ids{1};
  std::vector<int> continual_ids{4};
  RsnnConfig rsnn;
  PhaseSet phases;
};

struct PipelineConfig {
  AdaptMode mode = AdaptMode::Lora;
  double program_tolerance = 1.0;  // µS
  std::size_t replay_per_class = 20;
  std::size_t bytes_per_element = 4;
  bool analogue_eval = true;
};

struct CalibrationConfig {
  std::vector<double> tolerances{0.5, 1.0, 2.0, 4.0};
  std::size_t cells = 1000;
};

struct GlyphConfig {
  double tolerance = 2.0;
};

/// Everything a run needs; serializes to the resolved config.json.
struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 1;
  DeviceConfig device;
  ConverterConfig converters;
  EnergyConfig energy;
  CalibrationConfig calibration;
  GlyphConfig glyph;
  PipelineConfig pipeline;
  FaceTaskConfig face;
  SpeakerTaskConfig speaker;

  static RunConfig defaults();
  /// Validates the whole tree; throws ConfigError.
  void validate() const;
  const PhaseSet& phases(Task t) const { return t == Task::Face ? face.phases : speaker.phases; }
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys and a wrong
/// schema_version throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace hcim
