#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "carpetmf/config.hpp"
#include "carpetmf/pipeline.hpp"

using namespace carpetmf;
namespace fs = std::filesystem;

namespace {

const char* kReference = R"({
  // five probability cells
  "cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0],[0,1],[1,0],[1,1],[1,2]]},
  "weight": {"kind": "cellMasses", "masses": [0.2, 0.3, 0.1, 0.15, 0.25]},
  "sampling": {"nSamples": 200, "depth": 6, "masterSeed": 7},
  "render": {"depth": 3}
})";

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("carpetmf_test_config_" + name);
  fs::remove_all(p);
  return p;
}

Experiment experiment(const std::string& text, const fs::path& out, unsigned workers = 1) {
  RunOptions run;
  run.workers = workers;
  run.out = out.string();
  return make_experiment(parse_config_text(text), run);
}

}  // namespace

TEST(Config, ParsesReferenceWithComments) {
  const auto c = parse_config_text(kReference);
  EXPECT_EQ(c.r1, 2);
  EXPECT_EQ(c.r2, 4);
  ASSERT_EQ(c.allowed.size(), 5u);
  EXPECT_EQ(c.weight.masses[1], 0.3);
  EXPECT_EQ(c.sampling.samples, 200u);
  EXPECT_EQ(c.sampling.seed, 7u);
  EXPECT_EQ(c.grids.q, default_q_grid());
  EXPECT_EQ(config_hash(c), config_hash(parse_config_text(kReference)));
}

TEST(Config, UnknownKeysNameThePath) {
  EXPECT_NE(error_of(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0]], "r3": 1},
                         "weight": {"kind": "cellMasses", "masses": [1]}})")
                .find("cellSystem.r3"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0]]},
                         "weight": {"kind": "cellMasses", "masses": [1]}, "extra": 0})")
                .find("config.extra"),
            std::string::npos);
}

TEST(Config, MalformedTableNamesTheBlock) {
  const auto e = error_of(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0],[1,1]]},
                              "weight": {"kind": "constantCell", "depth": 2, "table": [0, 0, 0]}})");
  EXPECT_NE(e.find("weight.table"), std::string::npos);
  EXPECT_NE(e.find("expected 4"), std::string::npos);
  EXPECT_NE(error_of(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0],[1,1]]},
                         "weight": {"kind": "cellMasses", "masses": [0.5]}})")
                .find("weight.masses"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,7]]},
                         "weight": {"kind": "cellMasses", "masses": [1]}})")
                .find("cellSystem.allowed[0]"),
            std::string::npos);
}

TEST(Config, SyntaxErrorReportsLine) {
  const auto e = error_of("{\n  \"cellSystem\": {\n    \"r1\": 2,,\n  }\n}");
  EXPECT_NE(e.find("line 3"), std::string::npos) << e;
}

TEST(Config, QGridForms) {
  auto c = parse_config_text(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0],[1,1]]},
    "weight": {"kind": "cellMasses", "masses": [1, 1]},
    "grids": {"q": {"from": -1, "to": 1, "step": 0.5, "refine": [0.25, 0.5]}, "depthSchedule": [2, 3]}})");
  EXPECT_EQ(c.grids.q, (std::vector<double>{-1, -0.5, 0, 0.25, 0.5, 1}));
  EXPECT_EQ(c.grids.depths, (std::vector<int>{2, 3}));
}

TEST(Config, HashTracksEffectiveSettingsOnly) {
  auto a = parse_config_text(kReference);
  auto b = a;
  b.output.directory = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.sampling.seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
  RunOptions run;
  run.seed = 8;
  run.out = scratch("hash").string();
  EXPECT_EQ(make_experiment(a, run).meta.config_hash, config_hash(b));
}

TEST(Pipeline, PressureStage) {
  const auto out = scratch("pressure");
  std::ostringstream log;
  const auto s = run_pressure(experiment(kReference, out), log);
  EXPECT_LE(s.beta1_residual, 1e-9);
  EXPECT_TRUE(fs::exists(out / "pressure_T.csv"));
  EXPECT_TRUE(fs::exists(out / "pressure_beta.json"));
  EXPECT_NE(log.str().find("support dimension"), std::string::npos);
}

TEST(Pipeline, FlatPotentialSupportDimension) {
  const auto out = scratch("flat");
  std::ostringstream log;
  const auto s = run_pressure(experiment(R"({"cellSystem": {"r1": 2, "r2": 4, "allowed": [[0,0],[0,1],[1,0],[1,1],[1,2]]},
    "weight": {"kind": "constantCell", "table": [0, 0, 0, 0, 0], "normalize": false}})",
                                         out),
                              log);
  EXPECT_NEAR(s.support_dimension, std::log2(std::sqrt(2.0) + std::sqrt(3.0)), 1e-10);
}

TEST(Pipeline, SpectrumContainsDiagonalTouch) {
  const auto out = scratch("spectrum");
  std::ostringstream log;
  run_spectrum(experiment(kReference, out), log);
  const auto j = nlohmann::json::parse(read_text_file(out / "spectrum_beta.json"));
  bool found = false;
  for (const auto& p : j["points"])
    if (p["q"] == 1.0) {
      EXPECT_NEAR(p["alpha"].get<double>(), p["dimension"].get<double>(), 1e-6);
      found = true;
    }
  EXPECT_TRUE(found);
  EXPECT_TRUE(fs::exists(out / "spectrum_T.gp"));
  EXPECT_TRUE(fs::exists(out / "spectrum_carpet.csv"));
}

TEST(Pipeline, ZeroSamplesWritesHeaderOnly) {
  const auto out = scratch("zero");
  std::string text = kReference;
  text.replace(text.find("\"nSamples\": 200"), 15, "\"nSamples\": 0");
  std::ostringstream log;
  run_sample(experiment(text, out), log);
  std::istringstream csv(read_text_file(out / "samples.csv"));
  std::string line, last;
  int lines = 0;
  while (std::getline(csv, line)) {
    ++lines;
    last = line;
  }
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(last, "index,birkhoffAverage,localDimension");
}

TEST(Pipeline, CheckOnDisconnectedRow) {
  const auto out = scratch("check");
  std::ostringstream log;
  const auto j = run_check(experiment(R"({"cellSystem": {"r1": 3, "r2": 4, "allowed": [[0,0],[1,0]]},
    "weight": {"kind": "cellMasses", "masses": [0.5, 0.5]}, "check": {"depthSchedule": [2, 4, 6]}})",
                                      out),
                           log);
  EXPECT_FALSE(j["P1"].get<bool>());
  EXPECT_TRUE(j["P2"].get<bool>());
  EXPECT_EQ(j["P3"], "false");
}

TEST(Pipeline, OutputsIdenticalAcrossWorkers) {
  std::vector<fs::path> dirs{scratch("w1"), scratch("w4")};
  for (unsigned i = 0; i < 2; ++i) {
    const auto e = experiment(kReference, dirs[i], i == 0 ? 1 : 4);
    std::ostringstream log;
    run_pressure(e, log);
    run_spectrum(e, log);
    run_sample(e, log);
    run_render(e, log);
    run_boxcount(e, log);
    run_check(e, log);
  }
  std::size_t files = 0;
  for (const auto& f : fs::directory_iterator(dirs[0])) {
    ++files;
    EXPECT_EQ(read_text_file(f.path()), read_text_file(dirs[1] / f.path().filename())) << f.path();
  }
  EXPECT_GE(files, 15u);
}

TEST(Pipeline, DepthCapNamesTheOverride) {
  auto c = parse_config_text(kReference);
  c.cap = 8;
  try {
    make_experiment(c, {});
    FAIL();
  } catch (const CapExceeded& e) {
    EXPECT_NE(std::string(e.what()).find("--depth-max"), std::string::npos);
  }
}
