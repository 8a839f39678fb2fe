#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "synthetic.hpp"
#include "tpc/cli.hpp"
#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {
namespace {

namespace fs = std::filesystem;
using testing::fixture_path;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("tpc_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string resources_json() const {
    return R"("resources": {"embeddings": ")" + fixture_path("embeddings.txt") + R"(", "translation_ef": ")" +
           fixture_path("lex_e_given_f.tsv") + R"(", "translation_fe": ")" + fixture_path("lex_f_given_e.tsv") +
           R"(", "concepts": ")" + fixture_path("concepts.tsv") + R"("})";
  }

  // Fixture bundle, no experiments.
  std::string fixture_config(const std::string& bundle) {
    const fs::path p = dir / "fixture.json";
    write(p, R"({"bundle": ")" + bundle + R"(", )" + resources_json() + R"(, "out_dir": ")" + (dir / "out").string() +
                 R"(", "verbosity": 0})");
    return p.string();
  }

  // Synthetic bundle large enough for cross-validation.
  std::string run_config() {
    const fs::path bundle = dir / "syn.jsonl";
    std::ofstream f(bundle);
    write_bundle(f, testing::synthetic_corpus({40, 8, 6, 6, 6, 6, 4}, {.seed = 5}));
    f.close();
    const fs::path p = dir / "run.json";
    write(p, R"({"bundle": "syn.jsonl", )" + resources_json() + R"(, "out_dir": "out", "seed": 3, "verbosity": 0,
  "experiments": [
    {"name": "bin", "task": "binary_1to1", "classifier": "forest", "params": {"n_trees": 5}, "folds": 3, "final_model": true},
    {"name": "six", "task": "six_class_full", "classifier": "dummy", "folds": 3}
  ]})");
    return p.string();
  }

  fs::path dir;
};

TEST_F(CliTest, ConfigErrors) {
  EXPECT_THROW(parse_run_config("{}", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "colour": 1})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "experiments": [{"name": "a", "task": "binary_1to1"}, {"name": "a", "task": "binary_1to1"}]})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "experiments": [{"name": "a", "task": "nine_class"}]})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "experiments": [{"name": "a", "task": "binary_1to1", "folds": 1}]})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "experiments": [{"name": "a", "task": "binary_1to1", "classifier": "neural", "grid": "default"}]})", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"bundle": "b", "resources": {"translation_ef": "x"}})", "."), Error);
}

TEST_F(CliTest, ConfigDefaultsAndLookup) {
  const RunConfig c = parse_run_config(
      R"({"bundle": "b.jsonl", "seed": 9, "experiments": [{"name": "a", "task": "five_class", "classifier": "mlp", "params": {"hidden": [20, 10]}, "grid": "default"}]})",
      "/base");
  EXPECT_EQ(c.bundle, "/base/b.jsonl");
  ASSERT_EQ(c.experiments.size(), 1u);
  const auto& e = c.experiment("a");
  EXPECT_EQ(e.seed, 9u);
  EXPECT_EQ(e.model.mlp.hidden, (std::vector<int>{20, 10}));
  EXPECT_EQ(e.grid.size(), 2u);
  try {
    c.experiment("zzz");
    FAIL();
  } catch (const Error& err) {
    EXPECT_NE(std::string(err.what()).find("a"), std::string::npos);
  }
}

TEST_F(CliTest, GridExpansion) {
  ModelSpec base;
  const auto g = parse_grid(R"({"n_trees": [10, 20], "max_depth": [0, 5, 10]})", "forest", base);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g[0].forest.max_depth, 0);
  EXPECT_EQ(g[0].forest.n_trees, 10);
  EXPECT_EQ(g[1].forest.n_trees, 20);
  EXPECT_EQ(parse_grid(R"([{"n_trees": 7}])", "forest", base).front().forest.n_trees, 7);
  EXPECT_EQ(default_grid("dummy", base).size(), 1u);
}

TEST_F(CliTest, ValidateFixture) {
  const auto r = cli({"validate", "--config", fixture_config(fixture_path("tiny.jsonl"))});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("phrase_pairs\t7"), std::string::npos);
}

TEST_F(CliTest, ValidateBadSpanNamesRecord) {
  std::string text;
  std::istringstream lines(text::read_file(fixture_path("tiny.jsonl")));
  for (std::string l; std::getline(lines, l);)
    if (!l.empty()) text += nlohmann::json::parse(l).dump() + "\n";
  const auto pos = text.find(R"("src_span":[3,6])");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 16, R"("src_span":[3,9])");
  write(dir / "bad.jsonl", text);
  const auto r = cli({"validate", "--config", fixture_config((dir / "bad.jsonl").string())});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE((r.out + r.err).find("bad.jsonl:1:"), std::string::npos) << r.out << r.err;
  EXPECT_NE((r.out + r.err).find("src_span"), std::string::npos);
}

TEST_F(CliTest, ValidateMissingResource) {
  const fs::path p = dir / "missing.json";
  write(p, R"({"bundle": ")" + fixture_path("tiny.jsonl") + R"(", "resources": {"embeddings": "nope.txt"}})");
  const auto r = cli({"validate", "--config", p.string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("missing: "), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitValidation);
  EXPECT_EQ(cli({"run"}).code, kExitValidation);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitValidation);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST_F(CliTest, FeaturizeIsReproducible) {
  const auto config = fixture_config(fixture_path("tiny.jsonl"));
  ASSERT_EQ(cli({"featurize", "--config", config}).code, kExitOk);
  const std::string first = text::read_file((dir / "out" / "features.tsv").string());
  ASSERT_EQ(cli({"featurize", "--config", config}).code, kExitOk);
  EXPECT_EQ(text::read_file((dir / "out" / "features.tsv").string()), first);
  std::istringstream lines(first);
  std::string header;
  std::getline(lines, header);
  EXPECT_TRUE(header.starts_with("id\tpair\tlabel\t"));
  EXPECT_EQ(text::split(header, '\t').size(), 3u + 237u);

  ASSERT_EQ(cli({"featurize", "--config", config, "--groups", "surface,f9", "--out", (dir / "o2").string()}).code, kExitOk);
  std::istringstream masked(text::read_file((dir / "o2" / "features.tsv").string()));
  std::getline(masked, header);
  for (const auto& name : text::split(header, '\t'))
    if (name != "id" && name != "pair" && name != "label") {
      EXPECT_TRUE(name.starts_with("f3.") || name.starts_with("f9.")) << name;
    }
  EXPECT_EQ(cli({"featurize", "--config", config, "--groups", "nonsense"}).code, kExitValidation);
}

TEST_F(CliTest, RunPredictReport) {
  const auto config = run_config();
  const auto r = cli({"run", "--config", config, "--quiet"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path out = dir / "out";
  for (const char* f : {"bin.metrics.json", "six.metrics.json", "bin.model.json", "manifest.json", "report.tsv", "report.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string report = text::read_file((out / "report.txt").string());

  const auto again = cli({"report", "--out", out.string(), "--quiet"});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  EXPECT_EQ(text::read_file((out / "report.txt").string()), report);

  const auto p = cli({"predict", "--config", config, "--model", (out / "bin.model.json").string(), "--quiet"});
  ASSERT_EQ(p.code, kExitOk) << p.err;
  std::istringstream preds(text::read_file((out / "predictions.tsv").string()));
  std::string line;
  std::getline(preds, line);
  EXPECT_EQ(line, "id\tpair\tsource\ttarget\tpredicted\tp_Literal\tp_Non_literal");
  std::size_t rows = 0;
  while (std::getline(preds, line)) ++rows;
  EXPECT_EQ(rows, 76u);
}

TEST_F(CliTest, RunSelectsExperimentsAndSeeds) {
  const auto config = run_config();
  ASSERT_EQ(cli({"run", "--config", config, "--quiet", "--experiment", "six", "--seed", "4"}).code, kExitOk);
  EXPECT_TRUE(fs::exists(dir / "out" / "six.metrics.json"));
  EXPECT_FALSE(fs::exists(dir / "out" / "bin.metrics.json"));
  const auto bad = cli({"run", "--config", config, "--quiet", "--experiment", "ghost"});
  EXPECT_EQ(bad.code, kExitValidation);
  EXPECT_NE(bad.err.find("bin"), std::string::npos);
}

TEST_F(CliTest, PredictEmptyBundle) {
  const auto config = run_config();
  ASSERT_EQ(cli({"run", "--config", config, "--quiet", "--experiment", "bin"}).code, kExitOk);
  write(dir / "empty.jsonl", "");
  const auto r = cli({"predict", "--model", (dir / "out" / "bin.model.json").string(), "--bundle",
                      (dir / "empty.jsonl").string(), "--out", (dir / "p").string(), "--quiet"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  std::istringstream preds(text::read_file((dir / "p" / "predictions.tsv").string()));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(preds, line)) ++rows;
  EXPECT_EQ(rows, 1u);
}

TEST_F(CliTest, ExecutableExitCodes) {
  const std::string bin = TPC_CLI_BINARY;
  const std::string missing = "\"" + bin + "\" validate --config /nonexistent/config.json >/dev/null 2>&1";
  EXPECT_NE(std::system(missing.c_str()), 0);
  const std::string ok = "\"" + bin + "\" validate --config \"" + fixture_config(fixture_path("tiny.jsonl")) + "\" >/dev/null 2>&1";
  EXPECT_EQ(std::system(ok.c_str()), 0);
}

}  // namespace
}  // namespace tpc
