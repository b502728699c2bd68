#include "hcim/config.hpp"

#include "hcim/csv.hpp"

namespace hcim {

std::string to_string(Task t) { return t == Task::Face ? "face" : "speaker"; }

Task parse_task(const std::string& s) {
  if (s == "face") return Task::Face;
  if (s == "speaker") return Task::Speaker;
  throw std::invalid_argument("unknown task '" + s + "' (expected face or speaker)");
}

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const json& reference, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, v] : j.items())
    if (!reference.contains(key)) throw ConfigError(section + ": unknown key '" + key + "'");
}

template <typename T>
void read_struct(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  json ref;
  to_json(ref, out);
  reject_unknown(j.at(key), ref, section + "." + key);
  from_json(j.at(key), out);
}

template <typename T>
void read_value(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

AdaptationConfig phase_defaults(int epochs, std::size_t batch, double lr, UnlearnMethod m) {
  AdaptationConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.lr = lr;
  c.method = m;
  return c;
}

json phases_json(const PhaseSet& p) {
  json a, b, c;
  to_json(a, p.learn);
  to_json(b, p.unlearn);
  to_json(c, p.continual);
  return {{"learn", a}, {"unlearn", b}, {"continual", c}};
}

void read_phases(const json& j, PhaseSet& p, const std::string& section) {
  if (!j.contains("phases")) return;
  const json& ph = j.at("phases");
  reject_unknown(ph, phases_json(p), section + ".phases");
  read_struct(ph, "learn", p.learn, section + ".phases");
  read_struct(ph, "unlearn", p.unlearn, section + ".phases");
  read_struct(ph, "continual", p.continual, section + ".phases");
}

json synthetic_json(const SyntheticFaceConfig& s) {
  return {{"identities", s.identities},
          {"images_per_identity", s.images_per_identity},
          {"size", s.size},
          {"pixel_noise", s.pixel_noise},
          {"max_shift", s.max_shift}};
}

json generator_json(const SpikeGenConfig& g) {
  return {{"channels", g.channels}, {"max_rate", g.max_rate}, {"jitter", g.jitter}, {"shared", g.shared}};
}

json face_json(const FaceTaskConfig& f) {
  json m;
  to_json(m, f.mixer);
  return {{"dataset", f.dataset},
          {"synthetic", synthetic_json(f.synthetic)},
          {"synthetic_seed", f.synthetic_seed},
          {"learn_ids", f.learn_ids},
          {"unlearn_ids", f.unlearn_ids},
          {"continual_ids", f.continual_ids},
          {"train_per_id", f.train_per_id},
          {"standardize", f.standardize},
          {"mixer", m},
          {"phases", phases_json(f.phases)}};
}

json speaker_json(const SpeakerTaskConfig& s) {
  json r;
  to_json(r, s.rsnn);
  return {{"dataset", s.dataset},
          {"speakers", s.speakers},
          {"train_per_speaker", s.train_per_speaker},
          {"test_per_speaker", s.test_per_speaker},
          {"synthetic_seed", s.synthetic_seed},
          {"generator", generator_json(s.generator)},
          {"learn_ids", s.learn_ids},
          {"unlearn_ids", s.unlearn_ids},
          {"continual_ids", s.continual_ids},
          {"rsnn", r},
          {"phases", phases_json(s.phases)}};
}

json pipeline_json(const PipelineConfig& p) {
  return {{"mode", to_string(p.mode)},
          {"program_tolerance", p.program_tolerance},
          {"replay_per_class", p.replay_per_class},
          {"bytes_per_element", p.bytes_per_element},
          {"analogue_eval", p.analogue_eval}};
}

void check_ids(const std::vector<int>& learn, const std::vector<int>& unlearn,
               const std::vector<int>& continual, const std::string& section) {
  if (learn.size() < 2) throw ConfigError(section + ": need at least two learned ids");
  for (int u : unlearn)
    if (std::find(learn.begin(), learn.end(), u) == learn.end())
      throw ConfigError(section + ": unlearn id " + std::to_string(u) + " is not a learned id");
  for (int c : continual)
    if (std::find(learn.begin(), learn.end(), c) != learn.end())
      throw ConfigError(section + ": continual id " + std::to_string(c) + " is already learned");
  if (unlearn.size() >= learn.size()) throw ConfigError(section + ": nothing left to retain");
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.face.phases.learn = phase_defaults(30, 8, 1e-3, UnlearnMethod::GradientAscent);
  c.face.phases.unlearn = phase_defaults(20, 24, 1e-3, UnlearnMethod::GradientAscent);
  c.face.phases.unlearn.full_lr = 1e-4;
  c.face.phases.continual = phase_defaults(30, 4, 2e-3, UnlearnMethod::GradientAscent);
  c.face.phases.continual.gamma = 3.0;
  c.speaker.phases.learn = phase_defaults(60, 16, 2e-3, UnlearnMethod::LabelObfuscation);
  c.speaker.phases.unlearn = phase_defaults(20, 16, 2e-3, UnlearnMethod::LabelObfuscation);
  c.speaker.phases.continual = phase_defaults(120, 8, 2e-3, UnlearnMethod::LabelObfuscation);
  c.speaker.phases.continual.gamma = 5.0;
  c.face.mixer.classes = c.face.learn_ids.size();
  c.speaker.rsnn.classes = c.speaker.learn_ids.size();
  c.speaker.rsnn.channels = c.speaker.generator.channels;
  return c;
}

void RunConfig::validate() const {
  try {
    if (schema_version != kSchemaVersion)
      throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                        std::to_string(kSchemaVersion) + ")");
    device.validate();
    converters.validate();
    energy.validate();
    if (calibration.tolerances.empty()) throw ConfigError("calibration.tolerances is empty");
    for (double t : calibration.tolerances)
      if (!(t > 0.0)) throw ConfigError("calibration.tolerances must be > 0");
    if (calibration.cells == 0) throw ConfigError("calibration.cells must be >= 1");
    if (!(glyph.tolerance > 0.0)) throw ConfigError("glyph.tolerance must be > 0");
    if (!(pipeline.program_tolerance > 0.0)) throw ConfigError("pipeline.program_tolerance must be > 0");
    if (pipeline.bytes_per_element == 0) throw ConfigError("pipeline.bytes_per_element must be >= 1");
    face.mixer.validate();
    speaker.rsnn.validate();
    check_ids(face.learn_ids, face.unlearn_ids, face.continual_ids, "face");
    check_ids(speaker.learn_ids, speaker.unlearn_ids, speaker.continual_ids, "speaker");
    if (face.mixer.classes != face.learn_ids.size())
      throw ConfigError("face.mixer.classes must equal the number of learned ids");
    if (speaker.rsnn.classes != speaker.learn_ids.size())
      throw ConfigError("speaker.rsnn.classes must equal the number of learned ids");
    if (speaker.rsnn.channels != speaker.generator.channels)
      throw ConfigError("speaker.rsnn.channels must equal speaker.generator.channels");
    if (face.mixer.image_size != face.synthetic.size && face.dataset.empty())
      throw ConfigError("face.mixer.image_size must equal face.synthetic.size");
    for (const PhaseSet* p : {&face.phases, &speaker.phases}) {
      p->learn.validate();
      p->unlearn.validate();
      p->continual.validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json to_json(const RunConfig& cfg) {
  json dev, conv, en;
  to_json(dev, cfg.device);
  to_json(conv, cfg.converters);
  to_json(en, cfg.energy);
  return {{"schema_version", cfg.schema_version},
          {"seed", cfg.seed},
          {"device", dev},
          {"converters", conv},
          {"energy", en},
          {"calibration", {{"tolerances", cfg.calibration.tolerances}, {"cells", cfg.calibration.cells}}},
          {"glyph", {{"tolerance", cfg.glyph.tolerance}}},
          {"pipeline", pipeline_json(cfg.pipeline)},
          {"face", face_json(cfg.face)},
          {"speaker", speaker_json(cfg.speaker)}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c = RunConfig::defaults();
  try {
    reject_unknown(j, to_json(c), "config");
    if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kSchemaVersion)
      throw ConfigError("schema_version " + std::to_string(c.schema_version) + " is not supported");
    read_value(j, "seed", c.seed);
    read_struct(j, "device", c.device, "config");
    read_struct(j, "converters", c.converters, "config");
    read_struct(j, "energy", c.energy, "config");
    if (j.contains("calibration")) {
      const json& s = j.at("calibration");
      reject_unknown(s, to_json(c).at("calibration"), "calibration");
      read_value(s, "tolerances", c.calibration.tolerances);
      read_value(s, "cells", c.calibration.cells);
    }
    if (j.contains("glyph")) {
      const json& s = j.at("glyph");
      reject_unknown(s, to_json(c).at("glyph"), "glyph");
      read_value(s, "tolerance", c.glyph.tolerance);
    }
    if (j.contains("pipeline")) {
      const json& s = j.at("pipeline");
      reject_unknown(s, pipeline_json(c.pipeline), "pipeline");
      if (s.contains("mode")) c.pipeline.mode = parse_adapt_mode(s.at("mode").get<std::string>());
      read_value(s, "program_tolerance", c.pipeline.program_tolerance);
      read_value(s, "replay_per_class", c.pipeline.replay_per_class);
      read_value(s, "bytes_per_element", c.pipeline.bytes_per_element);
      read_value(s, "analogue_eval", c.pipeline.analogue_eval);
    }
    if (j.contains("face")) {
      const json& s = j.at("face");
      reject_unknown(s, face_json(c.face), "face");
      read_value(s, "dataset", c.face.dataset);
      if (s.contains("synthetic")) {
        const json& y = s.at("synthetic");
        reject_unknown(y, synthetic_json(c.face.synthetic), "face.synthetic");
        read_value(y, "identities", c.face.synthetic.identities);
        read_value(y, "images_per_identity", c.face.synthetic.images_per_identity);
        read_value(y, "size", c.face.synthetic.size);
        read_value(y, "pixel_noise", c.face.synthetic.pixel_noise);
        read_value(y, "max_shift", c.face.synthetic.max_shift);
      }
      read_value(s, "synthetic_seed", c.face.synthetic_seed);
      read_value(s, "learn_ids", c.face.learn_ids);
      read_value(s, "unlearn_ids", c.face.unlearn_ids);
      read_value(s, "continual_ids", c.face.continual_ids);
      read_value(s, "train_per_id", c.face.train_per_id);
      read_value(s, "standardize", c.face.standardize);
      c.face.mixer.classes = c.face.learn_ids.size();
      read_struct(s, "mixer", c.face.mixer, "face");
      read_phases(s, c.face.phases, "face");
    }
    if (j.contains("speaker")) {
      const json& s = j.at("speaker");
      reject_unknown(s, speaker_json(c.speaker), "speaker");
      read_value(s, "dataset", c.speaker.dataset);
      read_value(s, "speakers", c.speaker.speakers);
      read_value(s, "train_per_speaker", c.speaker.train_per_speaker);
      read_value(s, "test_per_speaker", c.speaker.test_per_speaker);
      read_value(s, "synthetic_seed", c.speaker.synthetic_seed);
      if (s.contains("generator")) {
        const json& g = s.at("generator");
        reject_unknown(g, generator_json(c.speaker.generator), "speaker.generator");
        read_value(g, "channels", c.speaker.generator.channels);
        read_value(g, "max_rate", c.speaker.generator.max_rate);
        read_value(g, "jitter", c.speaker.generator.jitter);
        read_value(g, "shared", c.speaker.generator.shared);
      }
      read_value(s, "learn_ids", c.speaker.learn_ids);
      read_value(s, "unlearn_ids", c.speaker.unlearn_ids);
      read_value(s, "continual_ids", c.speaker.continual_ids);
      c.speaker.rsnn.classes = c.speaker.learn_ids.size();
      c.speaker.rsnn.channels = c.speaker.generator.channels;
      read_struct(s, "rsnn", c.speaker.rsnn, "speaker");
      read_phases(s, c.speaker.phases, "speaker");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace hcim
