// Acceptance checks: one PASS/FAIL/BLOCKED line per criterion.
//   acceptance --group runnable   dummy baselines and the property suite
//   acceptance --group released   published-data targets; needs
//                                 TPC_RELEASED_CONFIG (a run config naming
//                                 the released bundle and resources) and
//                                 exits 77 when it is absent.
// TPC_RELEASED_REEXTRACTED=1 marks features recomputed with newer tools,
// which widens the accuracy tolerances.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synthetic.hpp"
#include "tpc/cli.hpp"
#include "tpc/evaluation.hpp"

namespace {

using namespace tpc;

constexpr int kSkip = 77;

// Dummy baselines.
constexpr double kBalancedTarget = 50.0, kBalancedTol = 2.0;
constexpr double kThreeToOneTarget = 62.5, kThreeToOneTol = 3.0;
constexpr double kFiveClassTol = 3.0;

// Published feature-classifier accuracies (percent) and tolerances.
struct Target {
  const char* label;
  Task task;
  double accuracy;
  double tolerance;
  bool drop_external = false;
};
const std::vector<Target> kTargets = {
    {"binary_1to1 forest", Task::Binary1to1, 87.09, 3.0},
    {"binary_3to1 forest", Task::Binary3to1, 90.16, 3.0},
    {"binary_2to1 forest", Task::Binary2to1, 88.85, 3.0},
    {"six_class_full forest", Task::SixClassFull, 83.10, 3.0},
    {"six_class_200L forest", Task::SixClass200L, 57.04, 4.0},
    {"five_class forest", Task::FiveClass, 55.10, 4.0},
    {"five_class forest without external_resource", Task::FiveClass, 55.20, 4.0, true},
    {"L_vs_NL_549 forest", Task::LvsNL549, 85.24, 4.0},
    {"LE_vs_nonLE_549 forest", Task::LEvsNonLE549, 75.32, 4.0},
    {"LET_vs_nonLET_549 forest", Task::LETvsNonLET549, 79.42, 4.0},
};
constexpr double kReextractedTol = 5.0;
constexpr double kBinaryF1Tol = 0.04;
constexpr double kBinaryF1Literal = 0.87, kBinaryF1NonLiteral = 0.88;
constexpr double kRuntimeMinutes = 30.0;

// Neural floors (percent).
constexpr double kMeanConcatBinaryFloor = 65.0;
constexpr double kMeanConcatFiveFloor = 38.0;
constexpr double kCharCnnBinaryFloor = 55.0;

constexpr std::uint64_t kSeed = 20240;

void line(int criterion, const char* status, const std::string& detail) {
  std::printf("criterion %d: %s: %s\n", criterion, status, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double dummy_accuracy(const Corpus& corpus, const ResourceSet& resources, Task task) {
  ExperimentConfig cfg;
  cfg.name = task_name(task);
  cfg.task = task;
  cfg.classifier = "dummy";
  cfg.model.kind = "dummy";
  cfg.seed = kSeed;
  cfg.folds = 5;
  cfg.selection = FeatureSelection::family(3);
  return 100.0 * run_experiment(cfg, corpus, resources).report.accuracy;
}

bool criterion_dummy() {
  // A corpus with the released class census; labels carry no signal the
  // dummy could use, so only the class proportions matter.
  const Corpus corpus = testing::synthetic_corpus(testing::kReleasedCensus, {.seed = kSeed, .pairs_per_sentence = 8});
  const ResourceSet resources = testing::synthetic_resources(kSeed);
  const double balanced = dummy_accuracy(corpus, resources, Task::Binary1to1);
  const double three = dummy_accuracy(corpus, resources, Task::Binary3to1);
  const double five = dummy_accuracy(corpus, resources, Task::FiveClass);
  const auto five_census = subsample(corpus, Task::FiveClass, kSeed);
  std::vector<std::size_t> census(five_census.classes.size(), 0);
  for (int y : five_census.labels) ++census[static_cast<std::size_t>(y)];
  const double five_target = 100.0 * stratified_chance(census);
  const bool ok = std::abs(balanced - kBalancedTarget) <= kBalancedTol &&
                  std::abs(three - kThreeToOneTarget) <= kThreeToOneTol &&
                  std::abs(five - five_target) <= kFiveClassTol;
  line(3, ok ? "PASS" : "FAIL",
       fmt("dummy balanced %.2f%% (50 +/- 2), 3:1 %.2f%% (62.5 +/- 3), ", balanced, three, 0) +
           fmt("five-class %.2f%% (%.2f +/- 3)", five, five_target, 0));
  return ok;
}

bool criterion_properties() {
  const std::string cmd = std::string("\"") + TPC_PROPERTY_BINARY + "\" --gtest_brief=1 >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  const bool ok = rc == 0;
  line(5, ok ? "PASS" : "FAIL", ok ? "property suite passed" : "property suite failed; run test_properties for details");
  return ok;
}

int run_runnable() {
  line(1, "BLOCKED", "needs the released bundle and resources (acceptance --group released)");
  line(2, "BLOCKED", "needs the released bundle and resources (acceptance --group released)");
  const bool dummy = criterion_dummy();
  line(4, "BLOCKED", "needs the released bundle and pretrained vectors (acceptance --group released)");
  const bool props = criterion_properties();
  return dummy && props ? 0 : 1;
}

ExperimentConfig forest_experiment(const Target& t) {
  ExperimentConfig cfg;
  cfg.name = t.label;
  cfg.task = t.task;
  cfg.classifier = "forest";
  cfg.grid = default_grid("forest", cfg.model);
  cfg.seed = kSeed;
  cfg.folds = 5;
  if (t.drop_external) cfg.selection = FeatureSelection::without({FeatureGroup::ExternalResource});
  return cfg;
}

int run_released() {
  const char* path = std::getenv("TPC_RELEASED_CONFIG");
  if (!path || !*path) {
    for (int c : {1, 2, 4}) line(c, "BLOCKED", "TPC_RELEASED_CONFIG is not set; the released data is not available");
    return kSkip;
  }
  const char* re = std::getenv("TPC_RELEASED_REEXTRACTED");
  const bool reextracted = re && std::string(re) == "1";
  const RunConfig config = load_run_config(path);
  const Corpus corpus = load_corpus(config, {});
  const ResourceSet resources = load_resource_set(config.resources);
  FeatureExtractor extractor(resources, config.features);
  const auto start = std::chrono::steady_clock::now();
  const FeatureCache cache = build_feature_cache(corpus, extractor);

  bool all = true;
  bool c1 = true;
  std::string detail;
  MetricsReport five_report;
  for (const auto& t : kTargets) {
    const auto r = run_experiment(forest_experiment(t), corpus, resources, &cache).report;
    const double acc = 100.0 * r.accuracy;
    const double tol = reextracted ? kReextractedTol : t.tolerance;
    const bool ok = std::abs(acc - t.accuracy) <= tol;
    c1 = c1 && ok;
    detail += std::string(t.label) + fmt(" %.2f%% (%.2f +/- %.1f); ", acc, t.accuracy, tol);
    if (t.task == Task::Binary1to1) {
      const bool f1 = std::abs(r.per_class_f1[0] - kBinaryF1Literal) <= kBinaryF1Tol &&
                      std::abs(r.per_class_f1[1] - kBinaryF1NonLiteral) <= kBinaryF1Tol;
      c1 = c1 && f1;
      detail += fmt("binary F1 (%.2f, %.2f) vs (0.87, 0.88) +/- %.2f; ", r.per_class_f1[0], r.per_class_f1[1], kBinaryF1Tol);
    }
    if (t.task == Task::FiveClass && !t.drop_external) five_report = r;
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  c1 = c1 && minutes <= kRuntimeMinutes;
  detail += fmt("runtime %.1f min (limit %.0f)", minutes, kRuntimeMinutes, 0);
  if (reextracted) detail += "; features re-extracted, tolerances widened";
  line(1, c1 ? "PASS" : "FAIL", detail);
  all = all && c1;

  const auto& f1 = five_report.per_class_f1;
  const auto idx = [&](const char* name) {
    for (std::size_t i = 0; i < five_report.classes.size(); ++i)
      if (five_report.classes[i] == name) return i;
    return std::size_t{0};
  };
  const std::size_t best = static_cast<std::size_t>(std::max_element(f1.begin(), f1.end()) - f1.begin());
  const std::size_t worst = static_cast<std::size_t>(std::min_element(f1.begin(), f1.end()) - f1.begin());
  const bool c2 = best == idx("ContainTransposition") && worst == idx("Generalization");
  std::string order;
  for (std::size_t i = 0; i < f1.size(); ++i) order += five_report.classes[i] + fmt(" %.2f ", f1[i], 0, 0);
  line(2, c2 ? "PASS" : "FAIL", "five-class F1: " + order);
  all = all && c2;

  const Corpus neural_corpus = load_corpus(config, config.resources);
  auto neural = [&](Task task, NeuralHead head, SymbolMode mode) {
    ExperimentConfig cfg;
    cfg.name = "neural";
    cfg.task = task;
    cfg.classifier = "neural";
    cfg.neural.head = head;
    cfg.neural.mode = mode;
    cfg.neural.seed = kSeed;
    cfg.seed = kSeed;
    cfg.folds = 5;
    return 100.0 * run_experiment(cfg, neural_corpus, resources).report.accuracy;
  };
  const double mc_bin = neural(Task::Binary1to1, NeuralHead::MeanConcat, SymbolMode::Word);
  const double mc_five = neural(Task::FiveClass, NeuralHead::MeanConcat, SymbolMode::Word);
  const double cnn_bin = neural(Task::Binary1to1, NeuralHead::Alignment, SymbolMode::Character);
  const bool c4 = mc_bin >= kMeanConcatBinaryFloor && mc_five >= kMeanConcatFiveFloor && cnn_bin >= kCharCnnBinaryFloor;
  line(4, c4 ? "PASS" : "FAIL",
       fmt("mean-concat binary %.2f%% (>= 65), five-class %.2f%% (>= 38), char CNN binary %.2f%% (>= 55)", mc_bin,
           mc_five, cnn_bin));
  all = all && c4;
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks", "acceptance"};
  std::string group = "runnable";
  app.add_option("--group", group, "runnable | released")->check(CLI::IsMember({"runnable", "released"}));
  CLI11_PARSE(app, argc, argv);
  try {
    return group == "runnable" ? run_runnable() : run_released();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
