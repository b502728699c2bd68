// Acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "hcim/crossbar.hpp"
#include "hcim/device.hpp"
#include "hcim/gradcheck_suite.hpp"
#include "hcim/pipeline.hpp"
#include "hcim/csv.hpp"
#include "hcim/rng.hpp"

namespace fs = std::filesystem;
using namespace hcim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> body;
};

fs::path g_root;

std::string fmt(double v) { return format_double(std::round(v * 1e4) / 1e4); }

bool within(double a, double b, double tol) { return std::abs(a - b) <= tol + 1e-9; }

// ---- 1
Outcome calibration() {
  const RunConfig cfg = RunConfig::defaults();
  const std::vector<double> tols{0.5, 1.0, 2.0, 4.0};
  const auto rows = calibration_sweep(cfg.device, tols, 1000, derive_seed(cfg.seed, "calibrate"));
  bool decreasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i) decreasing &= rows[i].mean_cycles < rows[i - 1].mean_cycles;
  const double at1 = rows[1].mean_cycles;
  std::ostringstream d;
  d << "cycles";
  for (const auto& r : rows) d << " " << fmt(r.tolerance) << "uS=" << fmt(r.mean_cycles);
  return {at1 >= 40.0 && at1 <= 60.0 && decreasing, d.str()};
}

// ---- 2
Outcome glyphs() {
  const RunConfig cfg = RunConfig::defaults();
  const double bound = 2.0 + 3.0 * cfg.device.read_noise_std;
  bool ok = true;
  std::ostringstream d;
  for (const char* text : {"UL", "CL"}) {
    const cli::GlyphResult r = cli::program_glyph(text, cfg.device, 2.0, cfg.seed);
    ok &= r.mean_abs_error <= bound;
    d << text << " mean|err|=" << fmt(r.mean_abs_error) << "uS ";
  }
  d << "bound=" << fmt(bound) << "uS";
  return {ok, d.str()};
}

// ---- 3
Outcome mvm_oracle() {
  DeviceConfig dev;
  dev.read_noise_std = 0.0;
  ConverterConfig conv;
  conv.dac_bits = 24;
  conv.adc_bits = 24;
  Rng rng(derive_seed(1, "acceptance/mvm"));
  double worst = 0.0;
  std::size_t multi_tile = 0;
  for (int k = 0; k < 100; ++k) {
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_int(96));
    const auto n = static_cast<Eigen::Index>(1 + rng.uniform_int(96));
    Eigen::MatrixXd w(d, n);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = rng.normal();
    AnalogueMatrix m(static_cast<std::size_t>(d), static_cast<std::size_t>(n), dev);
    m.program_ideal(w);
    multi_tile += m.tile_rows() * m.tile_cols() > 1;
    // Exact dense product of the array's realized (level-quantized) weights.
    Eigen::VectorXd exact = Eigen::VectorXd::Zero(d);
    const Eigen::MatrixXd wr = m.realized_weights();
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < n; ++j) exact(i) += wr(i, j) * x(j);
    const Eigen::VectorXd y = m.mvm(x, nullptr, conv);
    const double den = exact.norm();
    const double rel = den > 0.0 ? (y - exact).norm() / den : y.norm();
    worst = std::max(worst, rel);
  }
  return {worst <= 1e-3 && multi_tile > 0,
          "max rel error " + format_double(worst) + " over 100 matrices, " + std::to_string(multi_tile) +
              " multi-tile"};
}

// ---- 4
Outcome gradients() {
  const auto checks = run_gradcheck_suite(1);
  std::size_t tensors = 0, failed = 0;
  double worst = 0.0;
  std::string first_fail;
  for (const auto& c : checks)
    for (const auto& t : c.report.tensors) {
      ++tensors;
      worst = std::max(worst, t.max_rel_error);
      if (!t.passed) {
        ++failed;
        if (first_fail.empty()) first_fail = " first failure " + c.check + "/" + t.name;
      }
    }
  const auto corrupt = run_gradcheck_suite(1, true);
  bool caught = false;
  for (const auto& c : corrupt) caught |= !c.report.passed();
  return {failed == 0 && tensors > 0 && caught,
          std::to_string(checks.size()) + " checks, " + std::to_string(tensors) + " tensors, max rel " +
              format_double(worst) + (caught ? ", corrupted control detected" : ", corrupted control MISSED") +
              first_fail};
}

// ---- 5, 6
Outcome pipeline_properties(Task task) {
  const RunConfig cfg = RunConfig::defaults();
  const PipelineReport r = run_pipeline(cfg, task, AdaptMode::Lora);
  if (!r.ok || r.phases.size() < 3) return {false, "pipeline stopped: " + r.failure};
  const MetricsReport& learn = r.phase("learn").digital;
  const MetricsReport& ul = r.phase("unlearn").digital;
  const MetricsReport& cl = r.phase("continual").digital;
  const double chance = 1.0 / static_cast<double>(r.data.learned.size());
  const double learned = learn.mean_class_accuracy(r.data.learned);
  bool others = true, retained = true, added = true;
  for (int c : r.data.retained()) {
    others &= within(ul.class_accuracy(c), learn.class_accuracy(c), 0.05);
    retained &= within(cl.class_accuracy(c), ul.class_accuracy(c), 0.05);
  }
  double forgot = 0.0;
  for (int c : r.data.forgotten) forgot = std::max(forgot, ul.class_accuracy(c));
  double fresh = 1.0;
  for (int c : r.data.added) {
    fresh = std::min(fresh, cl.class_accuracy(c));
    added &= cl.class_accuracy(c) >= 0.9;
  }
  const bool ok = learned >= 0.9 && forgot <= chance + 0.15 + 1e-9 && others && added && retained;
  std::ostringstream d;
  d << "learn " << fmt(learned) << ", forgotten " << fmt(forgot) << " (limit " << fmt(chance + 0.15) << ")"
    << ", others " << (others ? "held" : "moved") << ", new " << fmt(fresh) << ", old "
    << (retained ? "held" : "moved");
  return {ok, d.str()};
}

// ---- 7
Outcome co_design() {
  const RunConfig cfg = RunConfig::defaults();
  bool ok = true;
  std::ostringstream d;
  for (Task task : {Task::Face, Task::Speaker}) {
    const LearnedState s = run_learn_phase(cfg, task);
    const PipelineReport lora = run_adaptation(s, AdaptMode::Lora);
    const PipelineReport full = run_adaptation(s, AdaptMode::Full);
    bool same = lora.phases.size() == 3;
    for (const auto& p : lora.phases)
      same &= p.backbone_checksum == s.learn.backbone_checksum && p.shadow_checksum == s.learn.shadow_checksum;
    std::uint64_t cumulative = 0;
    bool increasing = full.phases.size() == 3;
    d << to_string(task) << ": lora checksums " << (same ? "identical" : "CHANGED") << ", full pulses";
    for (const auto& p : full.phases) {
      const std::uint64_t next = cumulative + p.ledger.rm_pulses();
      increasing &= next > cumulative;
      cumulative = next;
      d << " " << cumulative;
    }
    d << "; ";
    ok &= same && increasing;
  }
  return {ok, d.str()};
}

// ---- 8
Outcome noise_ordering() {
  bool ok = true;
  std::ostringstream d;
  for (Task task : {Task::Face, Task::Speaker}) {
    double lora = 0.0, full = 0.0;
    const int seeds = 10;
    for (int s = 1; s <= seeds; ++s) {
      RunConfig cfg = RunConfig::defaults();
      cfg.seed = static_cast<std::uint64_t>(s);
      const LearnedState learned = run_learn_phase(cfg, task);
      lora += run_adaptation(learned, AdaptMode::Lora).final_accuracy();
      full += run_adaptation(learned, AdaptMode::Full).final_accuracy();
    }
    lora /= seeds;
    full /= seeds;
    ok &= lora >= full;
    d << to_string(task) << " lora " << fmt(lora) << " vs full " << fmt(full) << "; ";
  }
  return {ok, d.str()};
}

// ---- 9
Outcome cost_methodology() {
  const RunConfig cfg = RunConfig::defaults();
  bool ok = true;
  std::ostringstream d;
  for (Task task : {Task::Face, Task::Speaker}) {
    const LearnedState s = run_learn_phase(cfg, task);
    const PipelineReport lora = run_adaptation(s, AdaptMode::Lora);
    const PipelineReport full = run_adaptation(s, AdaptMode::Full);
    if (lora.phases.size() != 3 || full.phases.size() != 3) return {false, to_string(task) + " pipeline stopped"};
    for (const char* phase : {"unlearn", "continual"}) {
      const PhaseResult& pl = lora.phase(phase);
      const PhaseResult& pf = full.phase(phase);
      const std::uint64_t head_row = std::string(phase) == "continual" ? s.model->head().in_dim() : 0;
      // Analytic ratio Σdk / Σr(d+k); an added head row is trained identically by both.
      const std::uint64_t num = pl.params.full + head_row;
      const std::uint64_t den = pl.params.lora + head_row;
      const bool steps_equal = pl.log.steps == pf.log.steps;
      const bool exact = steps_equal && pf.ledger.training_updates() * den == pl.ledger.training_updates() * num;
      const EnergyReport ef = energy_report(pf.ledger, cfg.energy);
      const EnergyReport el = energy_report(pl.ledger, cfg.energy);
      const double write_factor = ef.write_total() / el.write_total();
      ok &= exact && write_factor > 10.0;
      d << to_string(task) << "/" << phase << " updates " << pf.ledger.training_updates() << "/"
        << pl.ledger.training_updates() << (exact ? " = " : " != ") << num << "/" << den << ", write x"
        << fmt(write_factor) << "; ";
    }
  }
  return {ok, d.str()};
}

// ---- 10
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hcim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  const std::vector<std::vector<std::string>> commands{
      {"calibrate", "--search"}, {"glyph-demo"}, {"gradcheck"}, {"run", "--task", "speaker", "--mode", "lora"},
      {"run", "--task", "speaker", "--mode", "full"}, {"run", "--task", "face", "--mode", "lora"}};
  std::size_t compared = 0;
  std::string mismatch;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::vector<fs::path> dirs;
    for (const char* rep : {"a", "b"}) {
      const fs::path dir = g_root / "determinism" / (std::to_string(i) + rep);
      fs::remove_all(dir);
      auto args = commands[i];
      args.insert(args.end(), {"--seed", "7", "--out", dir.string()});
      if (invoke(args) != cli::kExitOk) return {false, "command failed: " + commands[i][0]};
      dirs.push_back(dir);
    }
    if (commands[i][0] == "run" && commands[i][4] == "full") {
      const fs::path dir = g_root / "determinism" / "report";
      fs::remove_all(dir);
      const fs::path lora = g_root / "determinism" / "3a";
      for (const char* rep : {"a", "b"})
        if (invoke({"report", dirs[0].string(), lora.string(), "--out", (dir / rep).string()}) != cli::kExitOk)
          return {false, "report failed"};
      dirs.push_back(dir / "a");
      dirs.push_back(dir / "b");
    }
    for (std::size_t k = 0; k + 1 < dirs.size(); k += 2)
      for (const auto& e : fs::recursive_directory_iterator(dirs[k])) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension();
        if (ext != ".csv" && ext != ".json" && ext != ".jsonl") continue;
        ++compared;
        const fs::path rel = fs::relative(e.path(), dirs[k]);
        if (slurp(e.path()) != slurp(dirs[k + 1] / rel) && mismatch.empty()) mismatch = rel.string();
      }
  }
  return {mismatch.empty() && compared > 0,
          std::to_string(compared) + " files compared" + (mismatch.empty() ? "" : ", first mismatch " + mismatch)};
}

}  // namespace

int main(int argc, char** argv) {
  g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hcim_acceptance";
  fs::create_directories(g_root);
  const std::vector<Criterion> criteria{
      {1, "device calibration", 10.0, calibration},
      {2, "glyph demo", 5.0, glyphs},
      {3, "MVM oracle equivalence", 5.0, mvm_oracle},
      {4, "gradient integrity", 0.0, gradients},
      {5, "face pipeline", 120.0, [] { return pipeline_properties(Task::Face); }},
      {6, "speaker pipeline", 120.0, [] { return pipeline_properties(Task::Speaker); }},
      {7, "co-design contract", 0.0, co_design},
      {8, "noise-robustness ordering", 0.0, noise_ordering},
      {9, "cost methodology", 0.0, cost_methodology},
      {10, "determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0.0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " " << c.id << " " << c.title << ": " << o.detail << " ["
              << fmt(secs) << " s" << (in_time ? "" : ", over budget " + fmt(c.budget_s) + " s") << "]"
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
