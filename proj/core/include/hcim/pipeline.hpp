#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcim/adaptation.hpp"
#include "hcim/config.hpp"
#include "hcim/model.hpp"

namespace hcim {

/// Train/test data with labels already mapped to head rows: learned ids
/// first (in config order), then continual ids.
struct WorkloadData {
  Dataset train;
  Dataset test;
  std::vector<int> learned;    // labels
  std::vector<int> forgotten;  // labels, subset of learned
  std::vector<int> added;      // labels
  std::vector<int> retained() const;
};

WorkloadData make_workload(const RunConfig& cfg, Task task, Rng& rng);
std::unique_ptr<Classifier> build_model(const RunConfig& cfg, Task task, Rng& rng);

struct PhaseResult {
  std::string name;
  MetricsReport digital;
  MetricsReport analogue;
  bool has_analogue = false;
  CostLedger ledger;
  DeployReport deploy;
  RunLog log;
  std::uint64_t trainable_scalars = 0;  // per optimizer step
  ParamCount params;                    // adapted layers (lora) or all trainable layers (full)
  std::uint64_t backbone_checksum = 0;  // after the phase
  std::uint64_t shadow_checksum = 0;

  /// Accuracy on the classes the model should currently know.
  double known_accuracy(const WorkloadData& data, bool analogue) const;
  nlohmann::json summary(const WorkloadData& data) const;
};

/// State after pretraining and the single initial programming, shared by
/// both modes of a seed.
struct LearnedState {
  RunConfig cfg;
  Task task = Task::Face;
  std::uint64_t seed = 0;
  WorkloadData data;
  std::unique_ptr<Classifier> model;
  PhaseResult learn;
};

struct PipelineReport {
  Task task = Task::Face;
  AdaptMode mode = AdaptMode::Lora;
  std::uint64_t seed = 0;
  WorkloadData data;
  std::vector<PhaseResult> phases;  // learn, unlearn, continual (may stop early)
  bool ok = true;
  std::string failure;
  std::unique_ptr<Classifier> model;

  const PhaseResult& phase(const std::string& name) const;
  CostLedger total_ledger() const;
  /// Analogue accuracy over retained + added classes after the last phase
  /// (digital when analogue evaluation is disabled).
  double final_accuracy() const;
  nlohmann::json metrics_json() const;
  nlohmann::json ledger_json(const EnergyConfig& energy) const;
};

/// `events` receives the JSONL ledger stream (may be null).
LearnedState run_learn_phase(const RunConfig& cfg, Task task, std::ostream* events = nullptr);
PipelineReport run_adaptation(const LearnedState& learned, AdaptMode mode,
                              std::ostream* events = nullptr);
PipelineReport run_pipeline(const RunConfig& cfg, Task task, AdaptMode mode,
                            std::ostream* events = nullptr);

/// run.jsonl, metrics.json, ledger.json, embeddings_*.csv,
/// conductance_*.csv, adapters.hcnt (lora), reductions.csv.
void write_pipeline_outputs(const PipelineReport& report, const RunConfig& cfg,
                            const std::filesystem::path& dir);

/// Rows of the (task, phase, category, baseline, ours, factor) table.
struct ReductionRow {
  std::string task, phase, category;
  double baseline = 0.0, ours = 0.0;
  ReductionFactor factor;
};

/// Compares two ledger.json documents phase by phase; throws
/// std::invalid_argument when they are incompatible.
std::vector<ReductionRow> reduction_table(const nlohmann::json& baseline, const nlohmann::json& ours);
void write_reduction_csv(std::ostream& out, const std::vector<ReductionRow>& rows);

}  // namespace hcim
