#include "hcim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "hcim/checkpoint.hpp"
#include "hcim/csv.hpp"
#include "hcim/faces.hpp"
#include "hcim/mixer.hpp"
#include "hcim/rsnn.hpp"
#include "hcim/spikes.hpp"

namespace hcim {

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<int> iota_labels(int begin, std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = begin + static_cast<int>(i);
  return out;
}

std::vector<int> map_ids(const std::vector<int>& ids, const std::vector<int>& order) {
  std::vector<int> out;
  for (int id : ids)
    out.push_back(static_cast<int>(std::find(order.begin(), order.end(), id) - order.begin()));
  return out;
}

void standardize_columns(Matrix& x) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(col.size()));
    if (sd > 0.0) col /= sd;
  }
}

std::vector<int> concat_ids(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::vector<int> WorkloadData::retained() const {
  std::vector<int> out;
  for (int l : learned)
    if (std::find(forgotten.begin(), forgotten.end(), l) == forgotten.end()) out.push_back(l);
  return out;
}

WorkloadData make_workload(const RunConfig& cfg, Task task, Rng& rng) {
  WorkloadData w;
  if (task == Task::Face) {
    const auto& f = cfg.face;
    const FacesDataset faces =
        f.dataset.empty() ? synthesize_faces(f.synthetic, f.synthetic_seed) : load_faces(f.dataset);
    if (faces.height * faces.width != f.mixer.image_size * f.mixer.image_size)
      throw ConfigError("face images are " + std::to_string(faces.height) + "x" + std::to_string(faces.width) +
                        ", mixer expects " + std::to_string(f.mixer.image_size));
    const std::vector<int> order = concat_ids(f.learn_ids, f.continual_ids);
    Rng split_rng = rng.split("split");
    FaceSplit s = split_faces(faces, order, f.train_per_id, split_rng);
    w.train = std::move(s.train);
    w.test = std::move(s.test);
    if (f.standardize) {
      standardize_columns(w.train.x);
      standardize_columns(w.test.x);
    }
    w.learned = iota_labels(0, f.learn_ids.size());
    w.forgotten = map_ids(f.unlearn_ids, order);
    w.added = iota_labels(static_cast<int>(f.learn_ids.size()), f.continual_ids.size());
  } else {
    const auto& s = cfg.speaker;
    const std::vector<int> order = concat_ids(s.learn_ids, s.continual_ids);
    SpikeDataset spikes;
    if (s.dataset.empty()) {
      Rng gen(s.synthetic_seed);
      spikes = gen_spikes(s.speakers, s.train_per_speaker + s.test_per_speaker, s.generator, gen);
    } else {
      spikes = SpikeDataset::from_parameter_set(load_container(s.dataset));
    }
    if (spikes.channels != s.rsnn.channels)
      throw ConfigError("spike data has " + std::to_string(spikes.channels) + " channels, rsnn expects " +
                        std::to_string(s.rsnn.channels));
    const Dataset all = spikes.as_dataset(order);
    std::vector<std::size_t> train_idx, test_idx;
    Rng split_rng = rng.split("split");
    for (std::size_t label = 0; label < order.size(); ++label) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < all.size(); ++i)
        if (all.y[i] == static_cast<int>(label)) idx.push_back(i);
      if (idx.size() <= s.train_per_speaker)
        throw ConfigError("speaker " + std::to_string(order[label]) + " has too few samples for the split");
      Rng stream = split_rng.split(static_cast<std::uint64_t>(label));
      stream.shuffle(std::span(idx));
      const auto cut = static_cast<std::ptrdiff_t>(s.train_per_speaker);
      std::sort(idx.begin(), idx.begin() + cut);
      std::sort(idx.begin() + cut, idx.end());
      train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + cut);
      test_idx.insert(test_idx.end(), idx.begin() + cut, idx.end());
    }
    w.train = all.subset(train_idx);
    w.test = all.subset(test_idx);
    w.learned = iota_labels(0, s.learn_ids.size());
    w.forgotten = map_ids(s.unlearn_ids, order);
    w.added = iota_labels(static_cast<int>(s.learn_ids.size()), s.continual_ids.size());
  }
  return w;
}

std::unique_ptr<Classifier> build_model(const RunConfig& cfg, Task task, Rng& rng) {
  if (task == Task::Face) return std::make_unique<MixerClassifier>(cfg.face.mixer, rng);
  return std::make_unique<RsnnClassifier>(cfg.speaker.rsnn, rng);
}

double PhaseResult::known_accuracy(const WorkloadData& data, bool analogue_metrics) const {
  const MetricsReport& m = analogue_metrics && has_analogue ? analogue : digital;
  std::vector<int> known;
  for (int l : concat_ids(data.retained(), data.added))
    if (m.per_class.count(l) != 0) known.push_back(l);
  return m.mean_class_accuracy(known);
}

nlohmann::json PhaseResult::summary(const WorkloadData& data) const {
  auto block = [&](const MetricsReport& m) {
    nlohmann::json j = m.to_json();
    std::vector<int> retained;
    for (int l : data.retained())
      if (m.per_class.count(l) != 0) retained.push_back(l);
    j["retained_accuracy"] = m.mean_class_accuracy(retained);
    nlohmann::json forgotten = nlohmann::json::object(), added = nlohmann::json::object();
    for (int l : data.forgotten)
      if (m.per_class.count(l) != 0) forgotten[std::to_string(l)] = m.class_accuracy(l);
    for (int l : data.added)
      if (m.per_class.count(l) != 0) added[std::to_string(l)] = m.class_accuracy(l);
    j["forgotten_accuracy"] = forgotten;
    j["added_accuracy"] = added;
    return j;
  };
  nlohmann::json j = {{"digital", block(digital)},
                      {"deploy", deploy.to_json()},
                      {"steps", log.steps},
                      {"trainable_scalars", trainable_scalars},
                      {"diverged", log.diverged},
                      {"backbone_checksum", hex(backbone_checksum)},
                      {"shadow_checksum", hex(shadow_checksum)},
                      {"known_accuracy_digital", known_accuracy(data, false)}};
  if (has_analogue) {
    j["analogue"] = block(analogue);
    j["known_accuracy_analogue"] = known_accuracy(data, true);
  }
  if (!log.diagnostic.empty()) j["diagnostic"] = log.diagnostic;
  return j;
}

namespace {

void evaluate_phase(PhaseResult& r, Classifier& model, const Dataset& eval, const RunConfig& cfg,
                    Rng& root, std::ostream* events) {
  r.digital = evaluate(model, eval, ExecContext{});
  if (cfg.pipeline.analogue_eval) {
    Rng noise = root.split("eval/" + r.name);
    r.ledger.stream_to(events, r.name);
    r.analogue = evaluate(model, eval, ExecContext{ForwardMode::Analogue, &noise, &cfg.converters, &r.ledger});
    r.has_analogue = true;
  }
  r.backbone_checksum = model.backbone_checksum();
  r.shadow_checksum = model.shadow_checksum();
}

EpochHook accuracy_hook(Classifier& model, const Dataset& eval, const CostLedger& ledger) {
  return [&model, &eval, &ledger](EpochRecord& rec) {
    const MetricsReport m = evaluate(model, eval, ExecContext{});
    rec.extra["eval_accuracy"] = m.accuracy;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [label, c] : m.per_class) per[std::to_string(label)] = c.accuracy();
    rec.extra["eval_class_accuracy"] = per;
    rec.extra["ledger"] = ledger.to_json();
  };
}

AdaptationConfig resolve(AdaptationConfig c, AdaptMode mode, std::uint64_t seed, const char* phase) {
  c.mode = mode;
  if (c.seed == 0) c.seed = derive_seed(seed, phase);
  return c;
}

ParamCount full_count(const Classifier& m) {
  ParamCount pc;
  for (const auto* l : m.layers())
    if (!l->frozen()) pc.full += static_cast<std::uint64_t>(l->weight().size());
  return pc;
}

}  // namespace

LearnedState run_learn_phase(const RunConfig& cfg, Task task, std::ostream* events) {
  cfg.validate();
  LearnedState st;
  st.cfg = cfg;
  st.task = task;
  st.seed = cfg.seed;
  Rng root(cfg.seed);
  Rng data_rng = root.split("data");
  st.data = make_workload(cfg, task, data_rng);
  Rng model_rng = root.split("model");
  st.model = build_model(cfg, task, model_rng);

  PhaseResult& r = st.learn;
  r.name = "learn";
  r.ledger.stream_to(events, "learn");
  const AdaptationConfig pc = resolve(cfg.phases(task).learn, cfg.pipeline.mode, cfg.seed, "learn");
  const Dataset train = st.data.train.with_classes(st.data.learned);
  const Dataset eval = st.data.test.with_classes(st.data.learned);
  Rng train_rng(pc.seed);
  r.log = pretrain(*st.model, train, pc, train_rng, &r.ledger, accuracy_hook(*st.model, eval, r.ledger));
  r.trainable_scalars = r.log.trainable_scalars;
  r.params = full_count(*st.model);
  Rng prog = root.split("program/learn");
  r.deploy = deploy(*st.model, DeployTarget::Analogue, cfg.pipeline.program_tolerance, cfg.device, prog,
                    &r.ledger, cfg.pipeline.bytes_per_element);
  evaluate_phase(r, *st.model, eval, cfg, root, events);
  r.ledger.stream_to(nullptr);
  return st;
}

PipelineReport run_adaptation(const LearnedState& learned, AdaptMode mode, std::ostream* events) {
  const RunConfig& cfg = learned.cfg;
  PipelineReport rep;
  rep.task = learned.task;
  rep.mode = mode;
  rep.seed = learned.seed;
  rep.data = learned.data;
  rep.model = learned.model->clone();
  rep.phases.push_back(learned.learn);
  if (learned.learn.log.diverged) {
    rep.ok = false;
    rep.failure = "phase 0 (learn): " + learned.learn.log.diagnostic;
    return rep;
  }
  Classifier& model = *rep.model;
  const WorkloadData& d = rep.data;
  Rng root(cfg.seed);
  const PhaseSet& phases = cfg.phases(learned.task);
  const DeployTarget target = mode == AdaptMode::Full ? DeployTarget::Analogue : DeployTarget::Sram;
  const std::vector<int> retained = d.retained();

  {
    PhaseResult r;
    r.name = "unlearn";
    r.ledger.stream_to(events, r.name);
    const AdaptationConfig pc = resolve(phases.unlearn, mode, cfg.seed, "unlearn");
    const Dataset forget = d.train.with_classes(d.forgotten);
    const Dataset retain = d.train.with_classes(retained);
    const Dataset eval = d.test.with_classes(d.learned);
    Rng rng(pc.seed);
    const EpochHook hook = accuracy_hook(model, eval, r.ledger);
    if (pc.method == UnlearnMethod::GradientAscent) {
      r.log = unlearn_gradient_ascent(model, forget, retain, pc, rng, &r.ledger, hook);
    } else {
      Rng ob = rng.split("obfuscate");
      const Dataset obfuscated = obfuscate_labels(forget, static_cast<int>(model.num_classes()), ob);
      r.log = unlearn_label_obfuscation(model, obfuscated, retain, pc, rng, &r.ledger, hook);
    }
    r.trainable_scalars = r.log.trainable_scalars;
    r.params = mode == AdaptMode::Lora ? model.adapted_param_count() : full_count(model);
    Rng prog = root.split("program/unlearn");
    r.deploy = deploy(model, target, cfg.pipeline.program_tolerance, cfg.device, prog, &r.ledger,
                      cfg.pipeline.bytes_per_element);
    evaluate_phase(r, model, eval, cfg, root, events);
    r.ledger.stream_to(nullptr);
    rep.phases.push_back(std::move(r));
    if (rep.phases.back().log.diverged) {
      rep.ok = false;
      rep.failure = "phase 1 (unlearn): " + rep.phases.back().log.diagnostic;
      return rep;
    }
  }

  {
    PhaseResult r;
    r.name = "continual";
    r.ledger.stream_to(events, r.name);
    const AdaptationConfig pc = resolve(phases.continual, mode, cfg.seed, "continual");
    Rng rng(pc.seed);
    Rng replay = rng.split("replay");
    const ReplayBuffer buffer =
        ReplayBuffer::sample_per_class(d.train.with_classes(retained), cfg.pipeline.replay_per_class, replay);
    for (std::size_t i = 0; i < d.added.size(); ++i) model.add_class();
    const Dataset fresh = d.train.with_classes(d.added);
    const Dataset& eval = d.test;
    r.log = continual_learn(model, fresh, buffer, pc, rng, &r.ledger, accuracy_hook(model, eval, r.ledger));
    r.trainable_scalars = r.log.trainable_scalars;
    r.params = mode == AdaptMode::Lora ? model.adapted_param_count() : full_count(model);
    Rng prog = root.split("program/continual");
    r.deploy = deploy(model, target, cfg.pipeline.program_tolerance, cfg.device, prog, &r.ledger,
                      cfg.pipeline.bytes_per_element);
    evaluate_phase(r, model, eval, cfg, root, events);
    r.ledger.stream_to(nullptr);
    rep.phases.push_back(std::move(r));
    if (rep.phases.back().log.diverged) {
      rep.ok = false;
      rep.failure = "phase 2 (continual): " + rep.phases.back().log.diagnostic;
    }
  }
  return rep;
}

PipelineReport run_pipeline(const RunConfig& cfg, Task task, AdaptMode mode, std::ostream* events) {
  const LearnedState st = run_learn_phase(cfg, task, events);
  return run_adaptation(st, mode, events);
}

const PhaseResult& PipelineReport::phase(const std::string& name) const {
  for (const auto& p : phases)
    if (p.name == name) return p;
  throw std::out_of_range("pipeline has no phase " + name);
}

CostLedger PipelineReport::total_ledger() const {
  CostLedger total;
  for (const auto& p : phases) total.merge(p.ledger);
  return total;
}

double PipelineReport::final_accuracy() const {
  return phases.back().known_accuracy(data, true);
}

nlohmann::json PipelineReport::metrics_json() const {
  nlohmann::json ph = nlohmann::json::object();
  for (const auto& p : phases) ph[p.name] = p.summary(data);
  return {{"task", to_string(task)},
          {"mode", to_string(mode)},
          {"seed", seed},
          {"ok", ok},
          {"failure", failure},
          {"labels",
           {{"learned", data.learned}, {"forgotten", data.forgotten}, {"added", data.added}}},
          {"final_accuracy", final_accuracy()},
          {"phases", ph}};
}

nlohmann::json PipelineReport::ledger_json(const EnergyConfig& energy) const {
  nlohmann::json ph = nlohmann::json::object();
  for (const auto& p : phases) {
    ph[p.name] = {{"counters", p.ledger.to_json()},
                  {"energy", energy_report(p.ledger, energy).to_json()},
                  {"steps", p.log.steps},
                  {"trainable_scalars", p.trainable_scalars},
                  {"params", {{"full", p.params.full}, {"lora", p.params.lora}}}};
  }
  const CostLedger total = total_ledger();
  nlohmann::json e;
  to_json(e, energy);
  return {{"task", to_string(task)},
          {"mode", to_string(mode)},
          {"seed", seed},
          {"energy_config", e},
          {"phases", ph},
          {"total", {{"counters", total.to_json()}, {"energy", energy_report(total, energy).to_json()}}}};
}

namespace {

std::string file_safe(std::string s) {
  std::replace(s.begin(), s.end(), '.', '_');
  return s;
}

}  // namespace

void write_pipeline_outputs(const PipelineReport& report, const RunConfig& cfg,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ostringstream run;
    for (const auto& p : report.phases)
      for (const auto& e : p.log.epochs) run << e.to_json().dump() << '\n';
    write_text_file(dir / "run.jsonl", run.str());
  }
  write_json_file(dir / "metrics.json", report.metrics_json());
  const nlohmann::json ledger = report.ledger_json(cfg.energy);
  write_json_file(dir / "ledger.json", ledger);
  for (const auto& p : report.phases) {
    std::ostringstream dig;
    p.digital.write_embeddings_csv(dig);
    write_text_file(dir / ("embeddings_" + p.name + "_digital.csv"), dig.str());
    if (p.has_analogue) {
      std::ostringstream ana;
      p.analogue.write_embeddings_csv(ana);
      write_text_file(dir / ("embeddings_" + p.name + "_analogue.csv"), ana.str());
    }
  }
  for (const auto* l : std::as_const(*report.model).layers()) {
    if (!l->has_backbone()) continue;
    std::ostringstream csv;
    l->backbone().write_conductance_csv(csv);
    write_text_file(dir / ("conductance_" + file_safe(l->name()) + ".csv"), csv.str());
  }
  if (report.model->has_adapters()) save_container(dir / "adapters.hcnt", export_adapters(*report.model, "adapters"));

  // Inference energy of this run against the GPU proxy for the same MACs.
  std::vector<ReductionRow> rows;
  for (const auto& [phase, v] : ledger.at("phases").items()) {
    const double gpu = v.at("energy").at("gpu_baseline").get<double>();
    const double ours = v.at("energy").at("inference_total").get<double>();
    rows.push_back({to_string(report.task), phase, "inference_vs_gpu", gpu, ours, reduction_factor(gpu, ours)});
  }
  std::ostringstream red;
  write_reduction_csv(red, rows);
  write_text_file(dir / "reductions.csv", red.str());
}

std::vector<ReductionRow> reduction_table(const nlohmann::json& baseline, const nlohmann::json& ours) {
  for (const auto* j : {&baseline, &ours})
    if (!j->is_object() || !j->contains("phases") || !j->contains("task") || !j->contains("total"))
      throw std::invalid_argument("ledger.json lacks task/phases/total");
  if (baseline.at("task") != ours.at("task"))
    throw std::invalid_argument("ledgers are for different tasks: " + baseline.at("task").get<std::string>() +
                                " vs " + ours.at("task").get<std::string>());
  const std::string task = baseline.at("task").get<std::string>();
  std::vector<ReductionRow> rows;
  auto add_block = [&](const std::string& phase, const nlohmann::json& b, const nlohmann::json& o) {
    for (std::size_t k = 0; k < kEventKindCount; ++k) {
      const std::string name(to_string(static_cast<EventKind>(k)));
      const double bv = b.at("counters").value(name, 0.0);
      const double ov = o.at("counters").value(name, 0.0);
      rows.push_back({task, phase, name, bv, ov, reduction_factor(bv, ov)});
    }
    for (auto name : EnergyReport::category_names()) {
      const std::string key(name);
      const double bv = b.at("energy").at(key).get<double>();
      const double ov = o.at("energy").at(key).get<double>();
      rows.push_back({task, phase, "energy_" + key, bv, ov, reduction_factor(bv, ov)});
    }
  };
  for (const auto& [phase, b] : baseline.at("phases").items()) {
    if (!ours.at("phases").contains(phase))
      throw std::invalid_argument("ledger for 'ours' lacks phase " + phase);
    add_block(phase, b, ours.at("phases").at(phase));
  }
  add_block("total", baseline.at("total"), ours.at("total"));
  return rows;
}

void write_reduction_csv(std::ostream& out, const std::vector<ReductionRow>& rows) {
  CsvWriter csv(out, {"task", "phase", "category", "baseline", "ours", "factor"});
  for (const auto& r : rows) {
    csv.cell(r.task).cell(r.phase).cell(r.category).cell(r.baseline).cell(r.ours).cell(r.factor.to_string());
    csv.end_row();
  }
}

}  // namespace hcim
