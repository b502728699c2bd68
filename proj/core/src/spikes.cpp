#include "hcim/spikes.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace hcim {

SpikeDataset gen_spikes(std::size_t num_speakers, std::size_t samples_per_speaker,
                        const SpikeGenConfig& cfg, Rng& rng) {
  if (num_speakers < 2) throw std::invalid_argument("gen_spikes needs at least two speakers");
  if (cfg.channels == 0) throw std::invalid_argument("gen_spikes needs at least one channel");
  SpikeDataset ds;
  ds.channels = cfg.channels;
  const auto f = static_cast<Eigen::Index>(cfg.channels * kSpikeWindows);
  const auto spk = static_cast<Eigen::Index>(num_speakers);
  ds.signatures.resize(f, spk);

  Rng sig = rng.split("signatures");
  Vector common(f);
  for (Eigen::Index i = 0; i < f; ++i) common(i) = sig.uniform(0.0, cfg.max_rate);
  for (Eigen::Index s = 0; s < spk; ++s) {
    // Smooth in time: a per-channel level with a random temporal envelope.
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const double level = sig.uniform(0.0, cfg.max_rate);
      const double onset = sig.uniform(0.0, 1.0);
      for (std::size_t t = 0; t < kSpikeWindows; ++t) {
        const double phase = static_cast<double>(t) / (kSpikeWindows - 1);
        const double env = 0.5 + 0.5 * std::cos(2.0 * 3.141592653589793 * (phase - onset));
        const auto i = static_cast<Eigen::Index>(t * cfg.channels + c);
        ds.signatures(i, s) = cfg.shared * common(i) + (1.0 - cfg.shared) * level * env;
      }
    }
  }

  ds.counts.resize(f, spk * static_cast<Eigen::Index>(samples_per_speaker));
  Rng draws = rng.split("samples");
  Eigen::Index col = 0;
  for (Eigen::Index s = 0; s < spk; ++s) {
    for (std::size_t k = 0; k < samples_per_speaker; ++k, ++col) {
      std::vector<double> gain(cfg.channels);
      for (auto& g : gain) g = std::max(0.0, 1.0 + draws.normal(0.0, cfg.jitter));
      for (Eigen::Index i = 0; i < f; ++i) {
        const double rate = ds.signatures(i, s) * gain[static_cast<std::size_t>(i) % cfg.channels];
        ds.counts(i, col) = static_cast<double>(draws.poisson(rate));
      }
      ds.speakers.push_back(static_cast<int>(s));
    }
  }
  return ds;
}

ParameterSet SpikeDataset::to_parameter_set() const {
  ParameterSet set;
  set.tag = "spikes";
  Tensor c;
  c.shape = {size(), windows, channels};
  c.data.assign(counts.data(), counts.data() + counts.size());
  set.tensors["counts"] = std::move(c);
  Tensor l;
  l.shape = {size()};
  for (int s : speakers) l.data.push_back(s);
  set.tensors["speakers"] = std::move(l);
  if (signatures.size() > 0) set.tensors["signatures"] = Tensor::from_matrix(signatures);
  return set;
}

SpikeDataset SpikeDataset::from_parameter_set(const ParameterSet& set) {
  const auto ci = set.tensors.find("counts");
  const auto li = set.tensors.find("speakers");
  if (ci == set.tensors.end() || li == set.tensors.end() || ci->second.shape.size() != 3)
    throw FormatError("spike container needs counts[n, T, C] and speakers[n]");
  const Tensor& c = ci->second;
  SpikeDataset ds;
  ds.windows = c.shape[1];
  ds.channels = c.shape[2];
  if (ds.windows != kSpikeWindows) throw FormatError("spike container: T must be 10");
  if (li->second.numel() != c.shape[0]) throw FormatError("spike container: label count mismatch");
  ds.counts = Eigen::Map<const Matrix>(c.data.data(), static_cast<Eigen::Index>(ds.windows * ds.channels),
                                       static_cast<Eigen::Index>(c.shape[0]));
  for (double v : li->second.data) ds.speakers.push_back(static_cast<int>(v));
  if (auto si = set.tensors.find("signatures"); si != set.tensors.end()) ds.signatures = si->second.to_matrix();
  return ds;
}

Dataset SpikeDataset::as_dataset(const std::vector<int>& ids) const {
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto it = std::find(ids.begin(), ids.end(), speakers[i]);
    if (it == ids.end()) continue;
    idx.push_back(i);
    labels.push_back(static_cast<int>(it - ids.begin()));
  }
  Dataset d;
  d.x.resize(counts.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    d.x.col(static_cast<Eigen::Index>(j)) = counts.col(static_cast<Eigen::Index>(idx[j]));
  d.y = std::move(labels);
  d.ids = std::move(idx);
  return d;
}

SpikeDataset load_spike_events_csv(const std::filesystem::path& path, std::size_t channels,
                                   std::size_t units, double duration_s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spike events " + path.string());
  if (channels == 0 || units < channels) throw std::invalid_argument("load_spike_events_csv: bad channel count");
  std::map<long, std::pair<int, std::vector<double>>> samples;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t f = channels * kSpikeWindows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long sample = 0;
    int label = 0;
    long unit = 0;
    double t = 0.0;
    if (!(ls >> sample >> label >> unit >> t))
      throw FormatError("spike events: malformed line " + std::to_string(line_no));
    if (unit < 0 || static_cast<std::size_t>(unit) >= units || t < 0.0) continue;
    auto& [lab, cnt] = samples[sample];
    if (cnt.empty()) cnt.assign(f, 0.0);
    lab = label;
    const auto c = static_cast<std::size_t>(unit) * channels / units;
    const auto w = std::min(kSpikeWindows - 1, static_cast<std::size_t>(t / duration_s * kSpikeWindows));
    cnt[w * channels + c] += 1.0;
  }
  SpikeDataset ds;
  ds.channels = channels;
  ds.counts.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(samples.size()));
  Eigen::Index col = 0;
  for (auto& [id, s] : samples) {
    ds.counts.col(col++) = Eigen::Map<const Vector>(s.second.data(), static_cast<Eigen::Index>(f));
    ds.speakers.push_back(s.first);
  }
  return ds;
}

}  // namespace hcim
