#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "hcim/csv.hpp"
#include "hcim/gradcheck_suite.hpp"
#include "hcim/pipeline.hpp"

namespace hcim::cli {

namespace fs = std::filesystem;

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

fs::path output_dir(const Options& o, const std::string& command) {
  if (o.out) return fs::path(*o.out);
  return fs::path("runs") / (command + "-" + timestamp());
}

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config ? load_run_config(*o.config) : RunConfig::defaults();
  if (o.seed) cfg.seed = *o.seed;
  if (o.mode) cfg.pipeline.mode = parse_adapt_mode(*o.mode);
  cfg.validate();
  return cfg;
}

void write_config(const fs::path& dir, const RunConfig& cfg) { write_json_file(dir / "config.json", to_json(cfg)); }

}  // namespace

int cmd_calibrate(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = output_dir(o, "calibrate");
  const auto rows = calibration_sweep(cfg.device, cfg.calibration.tolerances, cfg.calibration.cells,
                                      derive_seed(cfg.seed, "calibrate"));
  std::ostringstream csv_text;
  CsvWriter csv(csv_text, {"tolerance_uS", "mean_cycles", "std_cycles", "mean_final_error_uS", "converged_fraction"});
  for (const auto& r : rows) {
    csv.cell(r.tolerance).cell(r.mean_cycles).cell(r.std_cycles).cell(r.mean_final_error).cell(r.converged_fraction);
    csv.end_row();
    out << "tolerance " << format_double(r.tolerance) << " uS: mean cycles " << format_double(r.mean_cycles)
        << ", mean error " << format_double(r.mean_final_error) << " uS\n";
  }
  std::ostringstream search_text;
  if (o.search) {
    std::vector<double> means, stds;
    for (int i = 8; i <= 16; ++i) means.push_back(i / 20.0);
    for (int i = 0; i <= 8; ++i) stds.push_back(i / 10.0);
    const auto pts = search_pulse_parameters(cfg.device, 1.0, 50.0, means, stds, cfg.calibration.cells,
                                             derive_seed(cfg.seed, "calibrate/search"));
    CsvWriter s(search_text, {"pulse_step_mean_uS", "pulse_step_std_uS", "mean_cycles"});
    for (const auto& p : pts) {
      s.cell(p.pulse_step_mean).cell(p.pulse_step_std).cell(p.mean_cycles);
      s.end_row();
    }
    out << "closest to 50 cycles: mean " << format_double(pts.front().pulse_step_mean) << ", std "
        << format_double(pts.front().pulse_step_std) << " -> " << format_double(pts.front().mean_cycles) << "\n";
  }
  write_text_file(dir / "calibration.csv", csv_text.str());
  if (o.search) write_text_file(dir / "pulse_search.csv", search_text.str());
  write_config(dir, cfg);
  out << "wrote " << (dir / "calibration.csv").string() << "\n";
  return kExitOk;
}

GlyphMap glyph(const std::string& text) {
  static const std::map<char, std::array<const char*, 7>> font = {
      {'U', {"10001", "10001", "10001", "10001", "10001", "10001", "01110"}},
      {'L', {"10000", "10000", "10000", "10000", "10000", "10000", "11111"}},
      {'C', {"01110", "10001", "10000", "10000", "10000", "10001", "01110"}},
  };
  if (text.size() != 2 || !font.count(text[0]) || !font.count(text[1]))
    throw std::invalid_argument("glyph: unsupported text '" + text + "' (bundled: UL, CL)");
  GlyphMap g{};
  constexpr int scale = 3, top = 5;
  for (int letter = 0; letter < 2; ++letter) {
    const auto& rows = font.at(text[static_cast<std::size_t>(letter)]);
    const int left = letter == 0 ? 0 : 17;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (rows[static_cast<std::size_t>(r)][c] == '1')
          for (int dr = 0; dr < scale; ++dr)
            for (int dc = 0; dc < scale; ++dc)
              g[static_cast<std::size_t>((top + r * scale + dr) * 32 + left + c * scale + dc)] = 1;
  }
  return g;
}

GlyphResult program_glyph(const std::string& text, const DeviceConfig& device, double tolerance,
                          std::uint64_t seed) {
  const GlyphMap g = glyph(text);
  GlyphResult res;
  res.name = text;
  const double on = quantize_level(60.0, device), off = quantize_level(20.0, device);
  const std::uint64_t stream = derive_seed(seed, "glyph/" + text);
  double err_sum = 0.0;
  std::uint64_t cycles = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double target = g[i] ? on : off;
    Rng rng(derive_seed(stream, std::uint64_t{i}));
    CellState cell;
    cell.reset_state(device);
    auto [final_cell, report] = write_verify(cell, target, tolerance, rng, device);
    const double e = std::abs(final_cell.conductance - target);
    res.target.push_back(target);
    res.programmed.push_back(final_cell.conductance);
    err_sum += e;
    res.max_abs_error = std::max(res.max_abs_error, e);
    cycles += static_cast<std::uint64_t>(report.cycles_used);
  }
  res.mean_abs_error = err_sum / static_cast<double>(g.size());
  res.total_pulses = cycles;
  res.mean_cycles = static_cast<double>(cycles) / static_cast<double>(g.size());
  return res;
}

int cmd_glyph_demo(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = output_dir(o, "glyph-demo");
  nlohmann::json stats = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> files;
  for (const std::string text : {"UL", "CL"}) {
    const GlyphResult r = program_glyph(text, cfg.device, cfg.glyph.tolerance, cfg.seed);
    std::ostringstream map;
    CsvWriter csv(map, {"row", "col", "target_uS", "programmed_uS"});
    for (std::size_t i = 0; i < r.target.size(); ++i) {
      csv.cell(i / 32).cell(i % 32).cell(r.target[i]).cell(r.programmed[i]);
      csv.end_row();
    }
    files.emplace_back("glyph_" + text + ".csv", map.str());
    const double bound = cfg.glyph.tolerance + 3.0 * cfg.device.read_noise_std;
    stats[text] = {{"tolerance_uS", cfg.glyph.tolerance},
                   {"mean_abs_error_uS", r.mean_abs_error},
                   {"max_abs_error_uS", r.max_abs_error},
                   {"error_bound_uS", bound},
                   {"mean_cycles", r.mean_cycles},
                   {"total_pulses", r.total_pulses},
                   {"rows", 32},
                   {"cols", 32}};
    out << text << ": mean |error| " << format_double(r.mean_abs_error) << " uS (bound "
        << format_double(bound) << "), max " << format_double(r.max_abs_error) << " uS, "
        << format_double(r.mean_cycles) << " cycles/cell\n";
  }
  for (const auto& [name, text] : files) write_text_file(dir / name, text);
  write_json_file(dir / "glyph_stats.json", stats);
  write_config(dir, cfg);
  return kExitOk;
}

namespace {

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  double final_accuracy = 0.0;
  std::string failure;
};

SeedOutcome run_one(RunConfig cfg, Task task, const fs::path& dir) {
  std::ostringstream events;
  PipelineReport rep = run_pipeline(cfg, task, cfg.pipeline.mode, &events);
  write_pipeline_outputs(rep, cfg, dir);
  write_text_file(dir / "events.jsonl", events.str());
  write_config(dir, cfg);
  return {cfg.seed, rep.ok, rep.final_accuracy(), rep.failure};
}

}  // namespace

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(o);
  const Task task = parse_task(o.task.value_or("face"));
  if (o.num_seeds < 1 || o.jobs < 1) throw ConfigError("--num-seeds and --jobs must be >= 1");
  const fs::path dir = output_dir(o, "run-" + to_string(task) + "-" + to_string(cfg.pipeline.mode));

  std::vector<SeedOutcome> outcomes(static_cast<std::size_t>(o.num_seeds));
  if (o.num_seeds == 1) {
    outcomes[0] = run_one(cfg, task, dir);
  } else {
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::string first_error;
    auto worker = [&] {
      for (int i = next++; i < o.num_seeds; i = next++) {
        RunConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(i);
        try {
          outcomes[static_cast<std::size_t>(i)] = run_one(c, task, dir / ("seed_" + std::to_string(c.seed)));
        } catch (const std::exception& e) {
          const std::lock_guard lock(error_mutex);
          if (first_error.empty()) first_error = e.what();
          outcomes[static_cast<std::size_t>(i)] = {c.seed, false, 0.0, e.what()};
        }
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(o.jobs, o.num_seeds); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    std::ostringstream summary;
    CsvWriter csv(summary, {"seed", "ok", "final_accuracy"});
    for (const auto& s : outcomes) {
      csv.cell(s.seed).cell(s.ok ? 1 : 0).cell(s.final_accuracy);
      csv.end_row();
    }
    write_text_file(dir / "seeds.csv", summary.str());
    write_config(dir, cfg);
  }
  bool ok = true;
  for (const auto& s : outcomes) {
    out << to_string(task) << " " << to_string(cfg.pipeline.mode) << " seed " << s.seed << ": "
        << (s.ok ? "ok" : "FAILED") << ", final accuracy " << format_double(s.final_accuracy) << "\n";
    if (!s.ok) {
      err << "seed " << s.seed << ": " << s.failure << "\n";
      ok = false;
    }
  }
  out << "outputs in " << dir.string() << "\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream&) {
  auto load = [](const std::string& d) {
    const fs::path p = fs::path(d) / "ledger.json";
    if (!fs::exists(p)) throw ConfigError("no ledger.json in " + d);
    try {
      return nlohmann::json::parse(read_text_file(p));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
  };
  const nlohmann::json base = load(o.baseline), ours = load(o.ours);
  std::vector<ReductionRow> rows;
  try {
    rows = reduction_table(base, ours);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("incompatible ledgers: ") + e.what());
  }
  const fs::path dir = output_dir(o, "report");
  std::ostringstream csv, summary;
  write_reduction_csv(csv, rows);
  summary << "baseline: " << o.baseline << " (" << base.value("mode", "?") << ")\n"
          << "ours:     " << o.ours << " (" << ours.value("mode", "?") << ")\n";
  for (const auto& r : rows) {
    if (r.phase != "total" && r.category != "training_updates" && r.category != "energy_write_total") continue;
    summary << std::left << std::setw(10) << r.phase << std::setw(22) << r.category << " "
            << r.factor.to_string() << "x\n";
  }
  write_text_file(dir / "reductions.csv", csv.str());
  write_text_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = output_dir(o, "gradcheck");
  const auto checks = run_gradcheck_suite(cfg.seed, o.corrupt);
  std::ostringstream csv_text;
  CsvWriter csv(csv_text, {"check", "tensor", "max_abs_error", "max_rel_error", "passed"});
  bool ok = true;
  for (const auto& c : checks) {
    for (const auto& t : c.report.tensors) {
      csv.cell(c.check).cell(t.name).cell(t.max_abs_error).cell(t.max_rel_error).cell(t.passed ? 1 : 0);
      csv.end_row();
      out << (t.passed ? "ok   " : "FAIL ") << c.check << " " << t.name << " rel " << format_double(t.max_rel_error)
          << "\n";
      if (!t.passed) {
        err << "gradient mismatch: " << c.check << " " << t.name << " (rel " << format_double(t.max_rel_error)
            << ")\n";
        ok = false;
      }
    }
  }
  write_text_file(dir / "gradcheck.csv", csv_text.str());
  write_config(dir, cfg);
  return ok ? kExitOk : kExitFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid analogue-digital compute-in-memory simulator", "hcim"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::string config, mode, task, outdir;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run config");
    sub->add_option("--seed", seed, "root seed (overrides the config)");
    sub->add_option("--out", outdir, "output directory (default runs/<command>-<UTC time>)");
  };
  auto* calibrate = app.add_subcommand("calibrate", "write-verify cycles vs tolerance sweep");
  common(calibrate);
  calibrate->add_flag("--search", o.search, "also grid-search pulse_step_mean/std");
  auto* glyph_cmd = app.add_subcommand("glyph-demo", "program the UL/CL glyph maps");
  common(glyph_cmd);
  auto* run_cmd = app.add_subcommand("run", "learn -> unlearn -> continual pipeline");
  common(run_cmd);
  run_cmd->add_option("--task", task, "face or speaker")->check(CLI::IsMember({"face", "speaker"}));
  run_cmd->add_option("--mode", mode, "full or lora")->check(CLI::IsMember({"full", "lora"}));
  run_cmd->add_option("--jobs", o.jobs, "parallel seeds");
  run_cmd->add_option("--num-seeds", o.num_seeds, "consecutive seeds starting at --seed");
  auto* report = app.add_subcommand("report", "reduction factors between two run directories");
  report->add_option("baseline", o.baseline, "baseline run directory")->required();
  report->add_option("ours", o.ours, "compared run directory")->required();
  report->add_option("--out", outdir, "output directory");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  common(grad);
  grad->add_flag("--corrupt", o.corrupt, "perturb one gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }
  auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };
  CLI::App* sub = app.get_subcommands().front();
  if (sub != report) {
    if (given(sub, "--config")) o.config = config;
    if (given(sub, "--seed")) o.seed = seed;
  }
  if (sub->count("--out") > 0) o.out = outdir;
  if (sub == run_cmd) {
    if (given(sub, "--mode")) o.mode = mode;
    if (given(sub, "--task")) o.task = task;
  }
  try {
    if (sub == calibrate) return cmd_calibrate(o, out, err);
    if (sub == glyph_cmd) return cmd_glyph_demo(o, out, err);
    if (sub == run_cmd) return cmd_run(o, out, err);
    if (sub == report) return cmd_report(o, out, err);
    return cmd_gradcheck(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace hcim::cli
