#pragma once

// Experimental protocol: task subsampling and label grouping, stratified
// cross-validation, metrics, feature-group ablation and report rendering.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpc/corpus.hpp"
#include "tpc/features.hpp"
#include "tpc/ml.hpp"
#include "tpc/neural.hpp"
#include "tpc/resources.hpp"

namespace tpc {

enum class Task : std::uint8_t {
  SixClassFull, SixClass200L, Binary3to1, Binary2to1, Binary1to1, FiveClass,
  LvsNL549, LEvsNonLE549, LETvsNonLET549
};

std::string task_name(Task t);
Task parse_task(const std::string& name);
bool is_grouping_task(Task t);

// Draw sizes; the defaults are the protocol's, smaller values serve tests.
struct TaskSizes {
  std::size_t literal_draw = 200;  // six_class_200L
  std::size_t group_size = 549;    // *_549 tasks, per side
  bool operator==(const TaskSizes&) const = default;
};

struct TaskData {
  Task task = Task::SixClassFull;
  std::vector<PairRef> refs;  // corpus order
  std::vector<int> labels;    // indices into classes
  std::vector<std::string> classes;
};

// Applies the task's relabeling and seeded sampling without replacement.
// Throws Error when a class is too small for the requested draw.
TaskData subsample(const Corpus& corpus, Task task, std::uint64_t seed, const TaskSizes& sizes = {});

// Σ p_c² over the class distribution: the expected accuracy of a stratified
// random guesser.
double stratified_chance(const std::vector<std::size_t>& census);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;  // over classes present in gold
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // rows = gold
};

// Throws Error on length mismatch or a label outside [0, class_count).
Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& predicted,
                        std::size_t class_count);

struct ExperimentConfig {
  std::string name;
  Task task = Task::Binary1to1;
  // dummy | forest | mlp | vote_hard | vote_soft | neural
  std::string classifier = "forest";
  ModelSpec model;
  // Non-empty: nested inner-fold grid search inside every training fold.
  std::vector<ModelSpec> grid;
  int inner_folds = 3;
  FeatureSelection selection = FeatureSelection::all();
  NeuralConfig neural;
  std::uint64_t seed = 0;
  int folds = 5;
  TaskSizes sizes;
  bool ablation = false;
  bool final_model = false;  // also train one model on the whole task dataset
};

struct FoldRecord {
  Metrics metrics;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::uint64_t model_seed = 0;
  std::string chosen;                 // grid-search winner, if any
  std::vector<double> loss_curve;     // neural runs
  bool aborted = false;
};

struct MetricsReport {
  std::string name;
  Task task = Task::Binary1to1;
  std::string classifier;
  std::string selection;
  std::vector<std::string> classes;
  std::vector<std::size_t> census;  // per class, after subsampling
  std::uint64_t seed = 0;
  std::uint64_t sample_seed = 0;
  std::uint64_t fold_seed = 0;
  std::vector<FoldRecord> folds;
  double accuracy = 0.0;  // arithmetic mean over folds
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;  // mean over folds where the class is present
  std::vector<std::vector<std::size_t>> confusion;  // pooled
  std::vector<std::string> notes;
};

// Feature rows for every phrase pair of a corpus under the full schema;
// experiments select columns from it.
struct FeatureCache {
  std::shared_ptr<const FeatureSchema> schema;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> row_of;
  Matrix values;
};

FeatureCache build_feature_cache(const Corpus& corpus, const FeatureExtractor& extractor);

// Columns of `cache` whose family is selected, for the given pairs.
Dataset select_dataset(const FeatureCache& cache, const TaskData& data, const FeatureSelection& selection);

struct ExperimentResult {
  MetricsReport report;
  std::unique_ptr<Classifier> final_model;        // feature pipelines
  std::optional<NeuralModel> final_neural;        // neural pipeline
};

// subsample -> features (or text) -> stratified k-fold train/test -> report.
// Every random stream derives from cfg.seed; folds may run in parallel
// without changing results.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Corpus& corpus, const ResourceSet& resources,
                                const FeatureCache* cache = nullptr);

struct AblationRow {
  std::string label;
  FeatureSelection selection;
  MetricsReport report;
};

struct AblationResult {
  std::string base;
  std::vector<AblationRow> rows;  // ranked by accuracy, ties keep run order
};

// Full set, each group alone, each leave-one-group-out set and each family
// alone.
AblationResult ablation_study(const ExperimentConfig& base, const Corpus& corpus, const ResourceSet& resources,
                              const FeatureCache* cache = nullptr);
std::vector<std::pair<std::string, FeatureSelection>> ablation_plan();

// JSON round-trip for run artifacts, so reports can be rendered later.
std::string metrics_report_to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const std::string& text);
std::string ablation_to_json(const AblationResult& result);
AblationResult ablation_from_json(const std::string& text);

struct ReportContext {
  std::string config_hash;
  std::map<std::string, std::string> checksums;
  std::vector<std::string> notes;
};

struct ReportDocument {
  std::string tsv;
  std::string text;
};

// Deterministic: identical inputs give byte-identical documents. Sections
// with no rows are omitted.
ReportDocument render_report(const std::vector<MetricsReport>& reports, const std::vector<AblationResult>& ablations,
                             const ReportContext& context);

}  // namespace tpc
