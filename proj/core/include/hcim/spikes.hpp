#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hcim/adaptation.hpp"
#include "hcim/checkpoint.hpp"
#include "hcim/rng.hpp"

namespace hcim {

inline constexpr std::size_t kSpikeWindows = 10;

struct SpikeGenConfig {
  std::size_t channels = 32;
  double max_rate = 4.0;  // spikes per window, upper end of a signature
  /// Per-sample multiplicative rate jitter (std of a normal factor around 1).
  double jitter = 0.2;
  /// Fraction of a signature shared by all speakers; higher is harder.
  double shared = 0.2;
};

/// Count-valued spike tensors. Each sample is channels x T, stored as one
/// column with index t * channels + c.
struct SpikeDataset {
  std::size_t channels = 0;
  std::size_t windows = kSpikeWindows;
  Matrix counts;
  std::vector<int> speakers;
  Matrix signatures;  // per speaker rates, (channels * T) x speakers

  std::size_t size() const { return speakers.size(); }
  ParameterSet to_parameter_set() const;
  static SpikeDataset from_parameter_set(const ParameterSet& set);
  /// Speakers `ids` relabelled 0..n-1 in order.
  Dataset as_dataset(const std::vector<int>& ids) const;
};

/// Each speaker gets a fixed random (channel, window) rate signature;
/// samples are Poisson draws of the signature scaled by per-channel jitter.
SpikeDataset gen_spikes(std::size_t num_speakers, std::size_t samples_per_speaker,
                        const SpikeGenConfig& cfg, Rng& rng);

/// Bins an event list exported from the Spiking Speech Commands HDF5 files
/// as CSV lines "sample,label,unit,time_s" into `channels` x T counts
/// (units pooled evenly, time split into T equal windows of `duration_s`).
SpikeDataset load_spike_events_csv(const std::filesystem::path& path, std::size_t channels,
                                   std::size_t units = 700, double duration_s = 1.0);

}  // namespace hcim
