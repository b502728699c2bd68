#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcim/ledger.hpp"
#include "hcim/model.hpp"
#include "hcim/optim.hpp"

namespace hcim {

/// Labeled examples as columns of `x`. `ids` are stable sample ids used in
/// exported embeddings and for disjointness checks.
struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::vector<std::size_t> ids;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  void validate() const;

  Dataset subset(std::span<const std::size_t> idx) const;
  Dataset with_classes(const std::vector<int>& labels) const;
  Dataset without_classes(const std::vector<int>& labels) const;
  static Dataset concat(const Dataset& a, const Dataset& b);
};

/// D_f, D_r, D_n. validate() checks D_f and D_r share no sample id.
struct DatasetSplit {
  Dataset forget;
  Dataset retain;
  Dataset new_task;

  void validate() const;
};

/// Fixed-capacity memory of past-task examples, filled by random selection.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  /// Up to `per_class` random examples of every class present in `past`.
  static ReplayBuffer sample_per_class(const Dataset& past, std::size_t per_class, Rng& rng);

  /// Adds examples until full; the rest are dropped.
  void add(const Dataset& examples);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const Dataset& data() const { return data_; }

 private:
  std::size_t capacity_;
  Dataset data_;
};

enum class AdaptMode { Full, Lora };
enum class UnlearnMethod { GradientAscent, LabelObfuscation };

std::string to_string(AdaptMode m);
AdaptMode parse_adapt_mode(const std::string& s);
std::string to_string(UnlearnMethod m);
UnlearnMethod parse_unlearn_method(const std::string& s);

struct AdaptationConfig {
  double lambda = 1.0;
  double gamma = 1.0;
  int epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  /// Learning rate in full mode; 0 reuses lr.
  double full_lr = 0.0;
  AdaptMode mode = AdaptMode::Lora;
  UnlearnMethod method = UnlearnMethod::GradientAscent;
  std::uint64_t seed = 0;
  std::size_t rank = 4;
  /// Layer names that get adapters; empty means every trainable layer.
  std::vector<std::string> lora_layers;
  /// Abort when the epoch retain loss exceeds factor * max(initial, floor).
  double divergence_factor = 10.0;
  double divergence_floor = 0.1;

  double step_size() const { return mode == AdaptMode::Full && full_lr > 0.0 ? full_lr : lr; }
  void validate() const;
};

void to_json(nlohmann::json& j, const AdaptationConfig& c);
void from_json(const nlohmann::json& j, AdaptationConfig& c);

/// ỹ drawn uniformly from the classes other than y. Throws for < 2 classes.
Dataset obfuscate_labels(const Dataset& forget, int num_classes, Rng& rng);

struct EpochRecord {
  std::string phase;
  int epoch = 0;
  std::uint64_t steps = 0;  // cumulative within the run
  double primary_loss = 0.0;
  double secondary_loss = 0.0;
  double objective = 0.0;
  nlohmann::json extra = nlohmann::json::object();
  nlohmann::json to_json() const;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::uint64_t steps = 0;
  std::uint64_t trainable_scalars = 0;  // per step
  bool diverged = false;
  std::string diagnostic;
};

/// Called after each epoch; may fill EpochRecord::extra.
using EpochHook = std::function<void(EpochRecord&)>;

struct ObjectiveTerms {
  double primary_loss = 0.0;
  double secondary_loss = 0.0;
};

/// Accumulates into the model's gradient buffers the gradient of
///   primary_weight * mean CE(primary) + secondary_weight * mean CE(secondary)
/// (digital forward). The secondary term is skipped when empty or weighted 0.
ObjectiveTerms accumulate_objective_gradient(Classifier& model, const Dataset& primary,
                                             double primary_weight, const Dataset& secondary,
                                             double secondary_weight);

/// Mean cross-entropy over a dataset, digital forward, no gradient.
double mean_loss(Classifier& model, const Dataset& data);

/// Supervised digital training of weights and biases.
RunLog pretrain(Classifier& model, const Dataset& data, const AdaptationConfig& cfg, Rng& rng,
                CostLedger* ledger = nullptr, const EpochHook& hook = {});

/// min  -mean CE(D_f) + lambda * mean CE(D_r)
RunLog unlearn_gradient_ascent(Classifier& model, const Dataset& forget, const Dataset& retain,
                               const AdaptationConfig& cfg, Rng& rng, CostLedger* ledger = nullptr,
                               const EpochHook& hook = {});

/// min  mean CE(obfuscated D_f) + lambda * mean CE(D_r)
RunLog unlearn_label_obfuscation(Classifier& model, const Dataset& obfuscated,
                                 const Dataset& retain, const AdaptationConfig& cfg, Rng& rng,
                                 CostLedger* ledger = nullptr, const EpochHook& hook = {});

/// min  mean CE(D_n) + gamma * mean CE(D_p). Labels of D_n must already
/// have head rows (see Classifier::add_class).
RunLog continual_learn(Classifier& model, const Dataset& new_data, const ReplayBuffer& buffer,
                       const AdaptationConfig& cfg, Rng& rng, CostLedger* ledger = nullptr,
                       const EpochHook& hook = {});

enum class DeployTarget { Analogue, Sram };

class DeployRejected : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct DeployReport {
  DeployTarget target = DeployTarget::Sram;
  std::uint64_t rm_pulses = 0;
  std::uint64_t cells_changed = 0;
  std::uint64_t non_converged = 0;
  std::uint64_t clipped = 0;
  std::size_t matrices_programmed = 0;
  std::uint64_t sram_bytes = 0;
  nlohmann::json to_json() const;
};

/// Analogue: folds added head rows into the backbone and reprograms every
/// matrix whose weights differ from its shadow. Rejected for models that
/// carry adapters. Sram: meters (adapter + added-row elements) x
/// bytes_per_element as SRAM writes.
DeployReport deploy(Classifier& model, DeployTarget target, double tolerance,
                    const DeviceConfig& device, Rng& rng, CostLedger* ledger = nullptr,
                    std::size_t bytes_per_element = 4);

/// Adapters and added rows as a named-tensor set (layer.lora_a, ...).
ParameterSet export_adapters(const Classifier& model, const std::string& tag);

struct ClassMetrics {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
};

struct MetricsReport {
  double accuracy = 0.0;
  std::map<int, ClassMetrics> per_class;
  std::vector<int> labels;
  std::vector<int> predictions;
  std::vector<std::size_t> ids;
  Matrix embeddings;  // features x samples

  /// Mean of per-class accuracies over `classes` (all present when empty).
  double mean_class_accuracy(const std::vector<int>& classes = {}) const;
  double class_accuracy(int label) const;
  nlohmann::json to_json() const;
  /// sample_id,class,e_0..e_{m-1}
  void write_embeddings_csv(std::ostream& out) const;
};

MetricsReport evaluate(Classifier& model, const Dataset& data, const ExecContext& ctx,
                       std::size_t batch_size = 64);

}  // namespace hcim
