#pragma once

// Statistical classifiers over feature vectors: stratified dummy baseline,
// random forest, feature MLP and hard/soft voting, with model files and grid
// search.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpc/features.hpp"

namespace tpc {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

struct Dataset {
  Matrix x;
  std::vector<int> y;  // indices into classes
  std::vector<std::string> header;
  std::vector<std::string> classes;

  std::size_t size() const { return y.size(); }
  std::size_t class_count() const { return classes.size(); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Rectangular dataset from feature vectors sharing one schema.
Dataset make_dataset(const std::vector<FeatureVector>& rows, const std::vector<int>& labels,
                     std::vector<std::string> classes);

struct Prediction {
  int label = 0;
  std::vector<double> proba;
};

// Index of the maximum; ties go to the lowest index.
int argmax(std::span<const double> v);

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  // One probability row per input row.
  virtual Matrix predict_proba(const Matrix& x) const = 0;

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::string>& classes() const { return classes_; }

  std::vector<Prediction> predict(const Matrix& x) const;
  // Throws Error when the vector's feature names differ from the header.
  Prediction predict(const FeatureVector& v) const;

  virtual void write_payload(nlohmann::json& params, nlohmann::json& payload) const = 0;

 protected:
  Classifier(std::vector<std::string> header, std::vector<std::string> classes)
      : header_(std::move(header)), classes_(std::move(classes)) {}
  void check_width(const Matrix& x) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::string> classes_;
};

// --- Dummy -----------------------------------------------------------------

// Draws each prediction from the training class distribution. A call to
// predict_proba restarts the stream from the model seed, so it is a pure
// function of (model, number of rows).
class DummyModel final : public Classifier {
 public:
  DummyModel(std::vector<std::string> header, std::vector<std::string> classes,
             std::vector<double> prior, std::uint64_t seed);

  std::string kind() const override { return "dummy"; }
  Matrix predict_proba(const Matrix& x) const override;
  void write_payload(nlohmann::json& params, nlohmann::json& payload) const override;

  const std::vector<double>& prior() const { return prior_; }

 private:
  std::vector<double> prior_;
  std::uint64_t seed_;
};

std::unique_ptr<DummyModel> train_dummy(const Dataset& data, std::uint64_t seed);

// --- Random forest -----------------------------------------------------------

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;          // 0 = unlimited
  int min_leaf = 1;
  int feature_subsample = 0;  // 0 = floor(sqrt(#features varying in training)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;
  bool operator==(const ForestParams&) const = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> counts;  // leaf class frequencies
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  const TreeNode& leaf_for(std::span<const double> x) const;
  int depth() const;
  bool operator==(const DecisionTree&) const = default;
};

class ForestModel final : public Classifier {
 public:
  ForestModel(std::vector<std::string> header, std::vector<std::string> classes, ForestParams params,
              std::vector<DecisionTree> trees);

  std::string kind() const override { return "forest"; }
  Matrix predict_proba(const Matrix& x) const override;
  void write_payload(nlohmann::json& params, nlohmann::json& payload) const override;

  const ForestParams& params() const { return params_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  ForestParams params_;
  std::vector<DecisionTree> trees_;
};

// Gini-impurity CART trees on bootstrap resamples with a random feature
// subset per split; split thresholds are midpoints between consecutive
// distinct values. Every node draws from its own seeded stream, so a
// depth-limited tree is a prefix of the deeper tree with the same seed.
std::unique_ptr<ForestModel> train_forest(const Dataset& data, const ForestParams& params);

// --- Feature MLP -----------------------------------------------------------

enum class Activation : std::uint8_t { Relu, Tanh, Logistic };
std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct MlpParams {
  std::vector<int> hidden{100};
  Activation activation = Activation::Relu;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  bool operator==(const MlpParams&) const = default;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
  bool operator==(const DenseLayer&) const = default;
};

class FeatureMlpModel final : public Classifier {
 public:
  FeatureMlpModel(std::vector<std::string> header, std::vector<std::string> classes, MlpParams params,
                  std::vector<double> mean, std::vector<double> scale, std::vector<DenseLayer> layers);

  std::string kind() const override { return "mlp"; }
  Matrix predict_proba(const Matrix& x) const override;
  void write_payload(nlohmann::json& params, nlohmann::json& payload) const override;

  const MlpParams& params() const { return params_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }

  // All weights and biases, layer by layer, flattened.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);
  // Mean cross-entropy (plus L2 penalty) on raw, unstandardized inputs; the
  // gradient is returned in parameters() order.
  double loss(const Matrix& x, const std::vector<int>& y, std::vector<double>* gradient = nullptr) const;

  Matrix standardize(const Matrix& x) const;

 private:
  MlpParams params_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<DenseLayer> layers_;
};

// Standardization uses the training data only (variance floor 1e-12, constant
// features get unit scale). Mini-batch Adam on softmax cross-entropy; a NaN
// loss aborts with an Error carrying epoch and batch.
std::unique_ptr<FeatureMlpModel> train_feature_mlp(const Dataset& data, const MlpParams& params);
// Initial (untrained) network for a dataset; what zero epochs yields.
std::unique_ptr<FeatureMlpModel> init_feature_mlp(const Dataset& data, const MlpParams& params);

// --- Voting ----------------------------------------------------------------

enum class VoteMode : std::uint8_t { Hard, Soft };

class VoteEnsemble final : public Classifier {
 public:
  // Throws Error unless there are >= 2 members with identical class sets
  // and headers.
  VoteEnsemble(std::vector<std::shared_ptr<const Classifier>> members, VoteMode mode);

  std::string kind() const override { return mode_ == VoteMode::Hard ? "vote_hard" : "vote_soft"; }
  Matrix predict_proba(const Matrix& x) const override;
  void write_payload(nlohmann::json& params, nlohmann::json& payload) const override;

  VoteMode mode() const { return mode_; }
  const std::vector<std::shared_ptr<const Classifier>>& members() const { return members_; }

 private:
  std::vector<std::shared_ptr<const Classifier>> members_;
  VoteMode mode_;
};

// Combines already-computed member predictions for one input.
Prediction vote(const std::vector<Prediction>& members, VoteMode mode, std::size_t class_count);

// --- Model specs, files, grid search -------------------------------------------

struct ModelSpec {
  std::string kind = "forest";  // dummy | forest | mlp | vote_hard | vote_soft
  ForestParams forest;
  MlpParams mlp;
  std::string describe() const;
  bool operator==(const ModelSpec&) const = default;
};

// Trains `spec` with every internal seed derived from `seed`.
std::unique_ptr<Classifier> train_model(const ModelSpec& spec, const Dataset& data, std::uint64_t seed);

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const Classifier& model);
std::unique_ptr<Classifier> deserialize_model(const std::string& text);
void save_model(const std::string& path, const Classifier& model);
std::unique_ptr<Classifier> load_model(const std::string& path);

struct GridRow {
  ModelSpec spec;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridResult {
  std::size_t best = 0;
  std::vector<GridRow> rows;
  const ModelSpec& best_spec() const { return rows.at(best).spec; }
};

// Exhaustive stratified k-fold evaluation; the highest mean accuracy wins,
// ties go to the earliest grid entry.
GridResult grid_search(const Dataset& data, const std::vector<ModelSpec>& grid, int folds,
                       std::uint64_t seed);

// Accuracy of a classifier on a dataset.
double accuracy(const Classifier& model, const Dataset& data);

}  // namespace tpc
