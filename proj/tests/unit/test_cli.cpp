#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"

namespace fs = std::filesystem;
using namespace hcim;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hcim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hcim_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = scratch(name);
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--task", "cats"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
  const fs::path cfg = write_config("bad.json", R"({"schema_version": 1, "devcie": {}})");
  const Result r = invoke({"calibrate", "--config", cfg.string(), "--out", scratch("bad").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("devcie"), std::string::npos) << r.err;
  const fs::path ver = write_config("ver.json", R"({"schema_version": 99})");
  EXPECT_EQ(invoke({"calibrate", "--config", ver.string()}).code, cli::kExitConfig);
  const fs::path range = write_config("range.json", R"({"schema_version": 1, "device": {"g_min": 90}})");
  EXPECT_EQ(invoke({"calibrate", "--config", range.string()}).code, cli::kExitConfig);
}

TEST(Cli, CalibrateWritesCsvAndConfig) {
  const fs::path dir = scratch("cal");
  const Result r = invoke({"calibrate", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string csv = slurp(dir / "calibration.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "tolerance_uS,mean_cycles,std_cycles,mean_final_error_uS,converged_fraction");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto cfg = nlohmann::json::parse(slurp(dir / "config.json"));
  EXPECT_EQ(cfg.at("schema_version"), 1);
  EXPECT_EQ(load_run_config(dir / "config.json").device.pulse_step_mean, RunConfig::defaults().device.pulse_step_mean);
}

TEST(Cli, GlyphErrorWithinBound) {
  const DeviceConfig dev;
  for (const char* text : {"UL", "CL"}) {
    const cli::GlyphResult r = cli::program_glyph(text, dev, 2.0, 1);
    ASSERT_EQ(r.target.size(), 1024u);
    EXPECT_LE(r.mean_abs_error, 2.0 + 3.0 * dev.read_noise_std);
    std::size_t on = 0;
    const cli::GlyphMap g = cli::glyph(text);
    for (std::size_t i = 0; i < 1024; ++i) {
      on += g[i];
      EXPECT_NEAR(r.target[i], g[i] ? 60.0 : 20.0, 70.0 / 127.0) << i;
    }
    EXPECT_GT(on, 50u);
    EXPECT_LT(on, 600u);
  }
  EXPECT_NE(cli::glyph("UL"), cli::glyph("CL"));
  EXPECT_THROW(cli::glyph("XY"), std::invalid_argument);
}

TEST(Cli, GradcheckExitCodes) {
  EXPECT_EQ(invoke({"gradcheck", "--out", scratch("gc").string()}).code, cli::kExitOk);
  const Result bad = invoke({"gradcheck", "--corrupt", "--out", scratch("gc2").string()});
  EXPECT_EQ(bad.code, cli::kExitFailure);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, RunIsByteIdentical) {
  const fs::path cfg = write_config("short.json", R"({"schema_version": 1, "speaker": {"phases": {
      "learn": {"epochs": 10}, "unlearn": {"epochs": 3}, "continual": {"epochs": 3}}}})");
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  for (const fs::path& d : {a, b}) {
    const Result r = invoke({"run", "--task", "speaker", "--config", cfg.string(), "--seed", "3", "--out", d.string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err << r.out;
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  EXPECT_GE(files, 6u);
  EXPECT_TRUE(fs::exists(a / "events.jsonl"));
  EXPECT_TRUE(fs::exists(a / "adapters.hcnt"));
}
