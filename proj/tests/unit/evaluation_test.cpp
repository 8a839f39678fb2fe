#include <gtest/gtest.h>

#include <numeric>

#include "synthetic.hpp"
#include "tpc/error.hpp"
#include "tpc/evaluation.hpp"

namespace tpc {
namespace {

using testing::kReleasedCensus;
using testing::synthetic_corpus;
using testing::synthetic_resources;

std::vector<std::size_t> census_of(const TaskData& d) {
  std::vector<std::size_t> c(d.classes.size(), 0);
  for (int y : d.labels) ++c[static_cast<std::size_t>(y)];
  return c;
}

class ReleasedShape : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { corpus_ = new Corpus(synthetic_corpus(kReleasedCensus, {.seed = 2, .pairs_per_sentence = 6})); }
  static void TearDownTestSuite() { delete corpus_; }
  static Corpus* corpus_;
};
Corpus* ReleasedShape::corpus_ = nullptr;

TEST_F(ReleasedShape, TaskSizes) {
  EXPECT_EQ(census_of(subsample(*corpus_, Task::SixClassFull, 1)), (std::vector<std::size_t>{3771, 289, 86, 215, 195, 342}));
  EXPECT_EQ(census_of(subsample(*corpus_, Task::SixClass200L, 1)), (std::vector<std::size_t>{200, 289, 86, 215, 195, 342}));
  EXPECT_EQ(census_of(subsample(*corpus_, Task::Binary3to1, 1)), (std::vector<std::size_t>{3771, 1127}));
  EXPECT_EQ(census_of(subsample(*corpus_, Task::Binary2to1, 1)), (std::vector<std::size_t>{2254, 1127}));
  EXPECT_EQ(census_of(subsample(*corpus_, Task::Binary1to1, 1)), (std::vector<std::size_t>{1127, 1127}));
  EXPECT_EQ(census_of(subsample(*corpus_, Task::FiveClass, 1)), (std::vector<std::size_t>{289, 86, 215, 195, 342}));
  for (Task t : {Task::LvsNL549, Task::LEvsNonLE549, Task::LETvsNonLET549})
    EXPECT_EQ(census_of(subsample(*corpus_, t, 1)), (std::vector<std::size_t>{549, 549})) << task_name(t);
}

TEST_F(ReleasedShape, DrawsAreSeededAndInCorpusOrder) {
  const auto a = subsample(*corpus_, Task::Binary1to1, 4);
  EXPECT_EQ(a.refs, subsample(*corpus_, Task::Binary1to1, 4).refs);
  EXPECT_NE(a.refs, subsample(*corpus_, Task::Binary1to1, 5).refs);
  EXPECT_TRUE(std::is_sorted(a.refs.begin(), a.refs.end()));
}

TEST_F(ReleasedShape, GroupingMembership) {
  const auto d = subsample(*corpus_, Task::LETvsNonLET549, 3);
  for (std::size_t i = 0; i < d.refs.size(); ++i) {
    const auto& p = corpus_->at(d.refs[i].sentence).phrase_pairs[d.refs[i].phrase];
    const bool in = p.raw_label == RawLabel::Literal || p.raw_label == RawLabel::Equivalence ||
                    p.raw_label == RawLabel::Transposition;
    EXPECT_EQ(d.labels[i] == 0, in);
  }
}

TEST(Subsample, TooSmallClassIsAnError) {
  const Corpus c = synthetic_corpus({9, 5, 0, 0, 0, 0, 0}, {});
  EXPECT_THROW(subsample(c, Task::Binary2to1, 1), Error);
  EXPECT_THROW(subsample(c, Task::LvsNL549, 1), Error);
  EXPECT_EQ(subsample(c, Task::LvsNL549, 1, {.literal_draw = 200, .group_size = 5}).labels.size(), 10u);
  EXPECT_EQ(subsample(c, Task::SixClass200L, 1, {.literal_draw = 9, .group_size = 549}).labels.size(), 14u);
}

TEST(Tasks, NamesRoundTrip) {
  for (int t = 0; t <= static_cast<int>(Task::LETvsNonLET549); ++t)
    EXPECT_EQ(parse_task(task_name(static_cast<Task>(t))), static_cast<Task>(t));
  EXPECT_THROW(parse_task("seven_class"), Error);
}

TEST(Metrics, HandComputedExample) {
  const Metrics m = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.micro_f1, 0.75);
  EXPECT_NEAR(m.per_class[0].f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.per_class[1].f1, 0.8, 1e-12);
  EXPECT_NEAR(m.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, 1e-12);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.per_class[1].support, 2u);
}

TEST(Metrics, AbsentGoldClassExcludedFromMacro) {
  const Metrics m = compute_metrics({0, 0}, {0, 1}, 3);
  EXPECT_NEAR(m.macro_f1, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, InputChecks) {
  EXPECT_THROW(compute_metrics({0}, {0, 1}, 2), Error);
  EXPECT_THROW(compute_metrics({0}, {2}, 2), Error);
}

TEST(Chance, SumOfSquaredProportions) {
  EXPECT_DOUBLE_EQ(stratified_chance({1, 1}), 0.5);
  EXPECT_NEAR(stratified_chance({3771, 1127}), 0.6457, 5e-5);
  EXPECT_NEAR(stratified_chance({289, 86, 215, 195, 342}), 0.2300, 5e-5);
  EXPECT_EQ(stratified_chance({}), 0.0);
}

ExperimentConfig small_forest(Task task) {
  ExperimentConfig cfg;
  cfg.name = "t";
  cfg.task = task;
  cfg.classifier = "forest";
  cfg.model.forest.n_trees = 10;
  cfg.seed = 11;
  cfg.folds = 3;
  return cfg;
}

class SmallCorpus : public ::testing::Test {
 protected:
  Corpus corpus = synthetic_corpus({60, 12, 9, 9, 9, 9, 6}, {.seed = 4});
  ResourceSet resources = synthetic_resources(4);
};

TEST_F(SmallCorpus, RunIsDeterministic) {
  const auto cfg = small_forest(Task::SixClassFull);
  const auto a = run_experiment(cfg, corpus, resources);
  const auto b = run_experiment(cfg, corpus, resources);
  EXPECT_EQ(metrics_report_to_json(a.report), metrics_report_to_json(b.report));
  EXPECT_EQ(a.report.folds.size(), 3u);
  EXPECT_GT(a.report.accuracy, 0.5);
  std::size_t tested = 0;
  for (const auto& f : a.report.folds) tested += f.test_size;
  EXPECT_EQ(tested, 114u);
}

TEST_F(SmallCorpus, FinalModelAndGrid) {
  auto cfg = small_forest(Task::Binary3to1);
  cfg.final_model = true;
  ModelSpec dummy;
  dummy.kind = "dummy";
  cfg.grid = {dummy, cfg.model};
  const auto r = run_experiment(cfg, corpus, resources);
  ASSERT_NE(r.final_model, nullptr);
  for (const auto& f : r.report.folds) EXPECT_FALSE(f.chosen.empty());
}

TEST_F(SmallCorpus, DummyBaseline) {
  auto cfg = small_forest(Task::Binary3to1);
  cfg.classifier = "dummy";
  cfg.model.kind = "dummy";
  const auto r = run_experiment(cfg, corpus, resources);
  EXPECT_LT(r.report.accuracy, 0.9);
}

TEST_F(SmallCorpus, NeuralPipelineRuns) {
  auto cfg = small_forest(Task::Binary1to1);
  cfg.classifier = "neural";
  cfg.neural.mode = SymbolMode::Character;
  cfg.neural.char_dim = 3;
  cfg.neural.gru_hidden = 3;
  cfg.neural.mlp_hidden = 3;
  cfg.neural.epochs = 2;
  cfg.folds = 2;
  const auto r = run_experiment(cfg, corpus, resources);
  ASSERT_EQ(r.report.folds.size(), 2u);
  EXPECT_EQ(r.report.folds[0].loss_curve.size(), 2u);
}

TEST(ZeroGroup, ConstantColumnsDoNotChangeTheForest) {
  const Corpus corpus = synthetic_corpus({40, 10, 10, 10, 10, 10, 10}, {.seed = 6});
  const ResourceSet resources = synthetic_resources(6);
  FeatureExtractor extractor(resources);
  FeatureCache cache = build_feature_cache(corpus, extractor);
  const auto data = subsample(corpus, Task::SixClassFull, 1);
  const auto sel = FeatureSelection::group(FeatureGroup::Surface);
  const Dataset base = select_dataset(cache, data, sel);
  for (std::size_t j = 0; j < cache.values.cols; ++j)
    if (cache.schema->groups[j] == FeatureGroup::PosTagging)
      for (std::size_t i = 0; i < cache.values.rows; ++i) cache.values(i, j) = 0.0;
  const Dataset wide = select_dataset(cache, data, sel | FeatureSelection::group(FeatureGroup::PosTagging));
  ASSERT_GT(wide.x.cols, base.x.cols);
  ForestParams p;
  p.n_trees = 8;
  p.seed = 3;
  EXPECT_EQ(train_forest(base, p)->predict_proba(base.x), train_forest(wide, p)->predict_proba(wide.x));
}

TEST(Ablation, PlanHasEveryRun) {
  const auto plan = ablation_plan();
  EXPECT_EQ(plan.size(), 22u);
  EXPECT_EQ(plan.front().second, FeatureSelection::all());
}

TEST(Ablation, RankedAndSerializable) {
  const Corpus corpus = synthetic_corpus({30, 6, 6, 6, 6, 6, 0}, {.seed = 8});
  const ResourceSet resources = synthetic_resources(8);
  auto cfg = small_forest(Task::Binary3to1);
  cfg.model.forest.n_trees = 3;
  const auto a = ablation_study(cfg, corpus, resources);
  ASSERT_EQ(a.rows.size(), 22u);
  for (std::size_t i = 1; i < a.rows.size(); ++i)
    EXPECT_GE(a.rows[i - 1].report.accuracy, a.rows[i].report.accuracy);
  const std::string json = ablation_to_json(a);
  EXPECT_EQ(ablation_to_json(ablation_from_json(json)), json);
}

MetricsReport sample_report() {
  MetricsReport r;
  r.name = "demo";
  r.task = Task::LvsNL549;
  r.classifier = "forest";
  r.selection = "all";
  r.classes = {"Literal", "Non_literal"};
  r.census = {5, 5};
  r.seed = 1;
  FoldRecord f;
  f.metrics = compute_metrics({0, 1, 1}, {0, 1, 0}, 2);
  f.train_size = 7;
  f.test_size = 3;
  r.folds = {f};
  r.accuracy = f.metrics.accuracy;
  r.micro_f1 = f.metrics.micro_f1;
  r.macro_f1 = f.metrics.macro_f1;
  r.per_class_f1 = {f.metrics.per_class[0].f1, f.metrics.per_class[1].f1};
  r.confusion = f.metrics.confusion;
  r.notes = {"example"};
  return r;
}

TEST(Report, JsonRoundTrip) {
  const auto r = sample_report();
  const std::string j = metrics_report_to_json(r);
  EXPECT_EQ(metrics_report_to_json(metrics_report_from_json(j)), j);
  EXPECT_THROW(metrics_report_from_json("[]"), Error);
}

TEST(Report, DeterministicAndSectionsOmitted) {
  const auto empty = render_report({}, {}, {});
  EXPECT_EQ(empty.text.find("Classification results"), std::string::npos);
  EXPECT_EQ(empty.text.find("Resources"), std::string::npos);
  ReportContext ctx;
  ctx.config_hash = "abc";
  ctx.checksums["x.tsv"] = "0123";
  const auto a = render_report({sample_report()}, {}, ctx);
  const auto b = render_report({sample_report()}, {}, ctx);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.tsv, b.tsv);
  EXPECT_NE(a.text.find("Classification results under different configurations"), std::string::npos);
  EXPECT_NE(a.text.find("66.67"), std::string::npos);
  EXPECT_EQ(a.text.find("feature ablation"), std::string::npos);
}

}  // namespace
}  // namespace tpc
