#include "tpc/ml.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tpc/error.hpp"
#include "tpc/folds.hpp"
#include "tpc/parallel.hpp"
#include "tpc/random.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.header = header;
  out.classes = classes;
  out.x = Matrix(rows.size(), x.cols);
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Dataset make_dataset(const std::vector<FeatureVector>& rows, const std::vector<int>& labels,
                     std::vector<std::string> classes) {
  if (rows.size() != labels.size()) throw Error("make_dataset: row and label counts differ");
  Dataset d;
  d.classes = std::move(classes);
  if (!rows.empty()) d.header = rows.front().schema->names;
  d.x = Matrix(rows.size(), d.header.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].schema != rows.front().schema && rows[i].schema->names != d.header)
      throw Error("make_dataset: row " + std::to_string(i) + " has a different feature schema");
    std::copy(rows[i].values.begin(), rows[i].values.end(), d.x.row(i).begin());
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= d.classes.size())
      throw Error("make_dataset: label out of range at row " + std::to_string(i));
  }
  d.y = labels;
  return d;
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

void Classifier::check_width(const Matrix& x) const {
  if (x.cols != header_.size())
    throw Error(kind() + ": input has " + std::to_string(x.cols) + " features, model expects " +
                std::to_string(header_.size()));
}

std::vector<Prediction> Classifier::predict(const Matrix& x) const {
  const Matrix p = predict_proba(x);
  std::vector<Prediction> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = p.row(i);
    out[i].proba.assign(row.begin(), row.end());
    out[i].label = argmax(row);
  }
  return out;
}

Prediction Classifier::predict(const FeatureVector& v) const {
  if (v.schema->names != header_) {
    std::size_t i = 0;
    while (i < header_.size() && i < v.schema->names.size() && header_[i] == v.schema->names[i]) ++i;
    throw Error("feature header mismatch at position " + std::to_string(i) + " (model has " +
                std::to_string(header_.size()) + " features, input has " +
                std::to_string(v.schema->names.size()) + ")");
  }
  Matrix x(1, v.size());
  std::copy(v.values.begin(), v.values.end(), x.data.begin());
  return predict(x).front();
}

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto preds = model.predict(data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == data.y[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

std::vector<double> class_frequencies(const std::vector<int>& y, std::size_t k) {
  std::vector<double> f(k, 0.0);
  for (int c : y) f[static_cast<std::size_t>(c)] += 1.0;
  return f;
}

}  // namespace

// --- Dummy -----------------------------------------------------------------

DummyModel::DummyModel(std::vector<std::string> header, std::vector<std::string> classes,
                       std::vector<double> prior, std::uint64_t seed)
    : Classifier(std::move(header), std::move(classes)), prior_(std::move(prior)), seed_(seed) {
  if (prior_.size() != this->classes().size()) throw Error("dummy: prior size differs from class count");
}

Matrix DummyModel::predict_proba(const Matrix& x) const {
  check_width(x);
  Matrix out(x.rows, prior_.size());
  Rng rng(seed_);
  const double total = std::accumulate(prior_.begin(), prior_.end(), 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double u = uniform01(rng) * total;
    std::size_t c = 0;
    while (c + 1 < prior_.size() && u >= prior_[c]) u -= prior_[c++];
    out(i, c) = 1.0;
  }
  return out;
}

void DummyModel::write_payload(json& params, json& payload) const {
  params = {{"seed", seed_}};
  payload = {{"prior", prior_}};
}

std::unique_ptr<DummyModel> train_dummy(const Dataset& data, std::uint64_t seed) {
  auto f = class_frequencies(data.y, data.class_count());
  const double n = static_cast<double>(data.size());
  if (n > 0)
    for (double& v : f) v /= n;
  return std::make_unique<DummyModel>(data.header, data.classes, std::move(f), seed);
}

// --- Random forest -----------------------------------------------------------

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i];
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature >= 0) {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }
  return best;
}

ForestModel::ForestModel(std::vector<std::string> header, std::vector<std::string> classes,
                         ForestParams params, std::vector<DecisionTree> trees)
    : Classifier(std::move(header), std::move(classes)), params_(params), trees_(std::move(trees)) {
  if (trees_.empty()) throw Error("forest: no trees");
}

Matrix ForestModel::predict_proba(const Matrix& x) const {
  check_width(x);
  const std::size_t k = classes().size();
  Matrix out(x.rows, k);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto row = out.row(i);
    for (const auto& tree : trees_) {
      const auto& leaf = tree.leaf_for(x.row(i));
      const double total = std::accumulate(leaf.counts.begin(), leaf.counts.end(), 0.0);
      if (total <= 0) continue;
      for (std::size_t c = 0; c < k; ++c) row[c] += leaf.counts[c] / total;
    }
    for (double& v : row) v /= static_cast<double>(trees_.size());
  }
  return out;
}

void ForestModel::write_payload(json& params, json& payload) const {
  params = {{"n_trees", params_.n_trees},     {"max_depth", params_.max_depth},
            {"min_leaf", params_.min_leaf},   {"feature_subsample", params_.feature_subsample},
            {"bootstrap", params_.bootstrap}, {"seed", params_.seed}};
  json trees = json::array();
  for (const auto& t : trees_) {
    json f = json::array(), th = json::array(), l = json::array(), r = json::array(), c = json::array();
    for (const auto& n : t.nodes) {
      f.push_back(n.feature);
      th.push_back(n.threshold);
      l.push_back(n.left);
      r.push_back(n.right);
      c.push_back(n.counts);
    }
    trees.push_back({{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"counts", c}});
  }
  payload = {{"trees", trees}};
}

namespace {

double gini_from(const std::vector<double>& counts, double total) {
  if (total <= 0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

struct TreeBuilder {
  const Dataset& data;
  const ForestParams& params;
  std::size_t mtry;
  std::size_t k;
  DecisionTree tree;

  int build(std::vector<std::size_t>& rows, int depth, std::uint64_t node_seed) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::vector<double> counts(k, 0.0);
    for (std::size_t r : rows) counts[static_cast<std::size_t>(data.y[r])] += 1.0;
    const double n = static_cast<double>(rows.size());

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    const bool depth_stop = params.max_depth > 0 && depth >= params.max_depth;
    const bool size_stop = rows.size() < 2 * static_cast<std::size_t>(std::max(1, params.min_leaf));
    if (pure || depth_stop || size_stop) {
      tree.nodes[static_cast<std::size_t>(index)].counts = std::move(counts);
      return index;
    }

    // Candidates are the features that vary within this node, in column
    // order, so columns constant everywhere never change the draw.
    std::vector<std::size_t> features;
    for (std::size_t f = 0; f < data.x.cols; ++f) {
      const double first = data.x(rows.front(), f);
      for (std::size_t r : rows)
        if (data.x(r, f) != first) {
          features.push_back(f);
          break;
        }
    }
    Rng rng(node_seed);
    shuffle(std::span<std::size_t>(features), rng);

    const double parent_gini = gini_from(counts, n);
    double best_gain = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::size_t tried_valid = 0;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      if (tried_valid >= mtry && best_feature >= 0) break;
      const std::size_t f = features[fi];
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {data.x(rows[i], f), data.y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      ++tried_valid;
      std::vector<double> left(k, 0.0);
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        left[static_cast<std::size_t>(vals[i].second)] += 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        if (nl < params.min_leaf || nr < params.min_leaf) continue;
        std::vector<double> right(k);
        for (std::size_t c = 0; c < k; ++c) right[c] = counts[c] - left[c];
        const double gain = parent_gini - (nl / n) * gini_from(left, nl) - (nr / n) * gini_from(right, nr);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
          if (best_threshold == vals[i + 1].first) best_threshold = vals[i].first;
        }
      }
    }
    if (best_feature < 0) {
      tree.nodes[static_cast<std::size_t>(index)].counts = std::move(counts);
      return index;
    }
    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows)
      (data.x(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(lrows, depth + 1, derive_seed(node_seed, {1}));
    const int r = build(rrows, depth + 1, derive_seed(node_seed, {2}));
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return index;
  }
};

}  // namespace

std::unique_ptr<ForestModel> train_forest(const Dataset& data, const ForestParams& params) {
  if (params.n_trees < 1) throw Error("forest: n_trees must be positive");
  if (data.size() == 0) throw Error("forest: empty training set");
  // The default subset size counts only features that vary in the training
  // data.
  std::size_t informative = 0;
  for (std::size_t f = 0; f < data.x.cols; ++f)
    for (std::size_t r = 1; r < data.size(); ++r)
      if (data.x(r, f) != data.x(0, f)) {
        ++informative;
        break;
      }
  std::size_t mtry = params.feature_subsample > 0
                         ? static_cast<std::size_t>(params.feature_subsample)
                         : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(informative))));
  mtry = std::max<std::size_t>(mtry, 1);

  std::vector<DecisionTree> trees(static_cast<std::size_t>(params.n_trees));
  parallel_for(trees.size(), [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, {t});
    std::vector<std::size_t> rows(data.size());
    if (params.bootstrap) {
      Rng rng(derive_seed(tree_seed, {0}));
      for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, data.size()));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    TreeBuilder b{data, params, mtry, data.class_count(), {}};
    b.build(rows, 0, derive_seed(tree_seed, {1}));
    trees[t] = std::move(b.tree);
  });
  return std::make_unique<ForestModel>(data.header, data.classes, params, std::move(trees));
}

// --- Feature MLP -----------------------------------------------------------

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Logistic: return "logistic";
  }
  return "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "logistic") return Activation::Logistic;
  throw Error("unknown activation '" + name + "'");
}

FeatureMlpModel::FeatureMlpModel(std::vector<std::string> header, std::vector<std::string> classes,
                                 MlpParams params, std::vector<double> mean, std::vector<double> scale,
                                 std::vector<DenseLayer> layers)
    : Classifier(std::move(header), std::move(classes)),
      params_(std::move(params)),
      mean_(std::move(mean)),
      scale_(std::move(scale)),
      layers_(std::move(layers)) {
  if (layers_.empty()) throw Error("mlp: no layers");
  if (mean_.size() != this->header().size() || scale_.size() != this->header().size())
    throw Error("mlp: standardization size differs from header");
  std::size_t in = this->header().size();
  for (const auto& l : layers_) {
    if (l.in != in || l.weight.size() != l.in * l.out || l.bias.size() != l.out)
      throw Error("mlp: inconsistent layer shapes");
    in = l.out;
  }
  if (in != this->classes().size()) throw Error("mlp: output width differs from class count");
}

Matrix FeatureMlpModel::standardize(const Matrix& x) const {
  check_width(x);
  Matrix z = x;
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < z.cols; ++j) z(i, j) = (z(i, j) - mean_[j]) / scale_[j];
  return z;
}

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::Relu: return v > 0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Logistic: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

// Derivative expressed through the activation output.
double activate_grad(Activation a, double out) {
  switch (a) {
    case Activation::Relu: return out > 0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Logistic: return out * (1.0 - out);
  }
  return 1.0;
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : v) x /= s;
}

// Forward pass on standardized inputs; acts[0] is the input, acts.back() the
// softmax output.
std::vector<Matrix> forward(const std::vector<DenseLayer>& layers, Activation act, const Matrix& z) {
  std::vector<Matrix> acts{z};
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& L = layers[li];
    const Matrix& in = acts.back();
    Matrix out(in.rows, L.out);
    for (std::size_t i = 0; i < in.rows; ++i) {
      const auto xi = in.row(i);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = L.bias[o];
        const double* w = L.weight.data() + o * L.in;
        for (std::size_t j = 0; j < L.in; ++j) s += w[j] * xi[j];
        out(i, o) = li + 1 < layers.size() ? activate(act, s) : s;
      }
      if (li + 1 == layers.size()) softmax_inplace(out.row(i));
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

// Cross-entropy plus 0.5 * l2 * ||W||^2 / n; gradients per layer.
double backward(const std::vector<DenseLayer>& layers, Activation act, double l2, const Matrix& z,
                const std::vector<int>& y, std::span<const std::size_t> rows,
                std::vector<DenseLayer>* grads) {
  Matrix batch(rows.size(), z.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = z.row(rows[i]);
    std::copy(src.begin(), src.end(), batch.row(i).begin());
  }
  const auto acts = forward(layers, act, batch);
  const double n = static_cast<double>(rows.size());
  const Matrix& p = acts.back();
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    loss -= std::log(std::max(p(i, static_cast<std::size_t>(y[rows[i]])), 1e-300));
  loss /= n;
  double wsq = 0.0;
  for (const auto& L : layers)
    for (double w : L.weight) wsq += w * w;
  loss += 0.5 * l2 * wsq / n;
  if (!grads) return loss;

  grads->assign(layers.size(), {});
  Matrix delta = p;
  for (std::size_t i = 0; i < rows.size(); ++i) delta(i, static_cast<std::size_t>(y[rows[i]])) -= 1.0;
  for (double& d : delta.data) d /= n;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& L = layers[li];
    auto& G = (*grads)[li];
    G.in = L.in;
    G.out = L.out;
    G.weight.assign(L.weight.size(), 0.0);
    G.bias.assign(L.out, 0.0);
    const Matrix& in = acts[li];
    for (std::size_t i = 0; i < in.rows; ++i)
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = delta(i, o);
        G.bias[o] += d;
        double* g = G.weight.data() + o * L.in;
        for (std::size_t j = 0; j < L.in; ++j) g[j] += d * in(i, j);
      }
    for (std::size_t w = 0; w < L.weight.size(); ++w) G.weight[w] += l2 * L.weight[w] / n;
    if (li == 0) break;
    Matrix prev(in.rows, L.in);
    for (std::size_t i = 0; i < in.rows; ++i)
      for (std::size_t j = 0; j < L.in; ++j) {
        double s = 0.0;
        for (std::size_t o = 0; o < L.out; ++o) s += delta(i, o) * L.weight[o * L.in + j];
        prev(i, j) = s * activate_grad(act, in(i, j));
      }
    delta = std::move(prev);
  }
  return loss;
}

}  // namespace

Matrix FeatureMlpModel::predict_proba(const Matrix& x) const {
  return forward(layers_, params_.activation, standardize(x)).back();
}

std::vector<double> FeatureMlpModel::parameters() const {
  std::vector<double> p;
  for (const auto& L : layers_) {
    p.insert(p.end(), L.weight.begin(), L.weight.end());
    p.insert(p.end(), L.bias.begin(), L.bias.end());
  }
  return p;
}

void FeatureMlpModel::set_parameters(std::span<const double> p) {
  std::size_t at = 0;
  for (auto& L : layers_) {
    if (at + L.weight.size() + L.bias.size() > p.size()) throw Error("mlp: parameter vector too short");
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(at), L.weight.size(), L.weight.begin());
    at += L.weight.size();
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(at), L.bias.size(), L.bias.begin());
    at += L.bias.size();
  }
  if (at != p.size()) throw Error("mlp: parameter vector too long");
}

double FeatureMlpModel::loss(const Matrix& x, const std::vector<int>& y, std::vector<double>* gradient) const {
  const Matrix z = standardize(x);
  std::vector<std::size_t> rows(z.rows);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<DenseLayer> grads;
  const double l = backward(layers_, params_.activation, params_.l2, z, y, rows, gradient ? &grads : nullptr);
  if (gradient) {
    gradient->clear();
    for (const auto& G : grads) {
      gradient->insert(gradient->end(), G.weight.begin(), G.weight.end());
      gradient->insert(gradient->end(), G.bias.begin(), G.bias.end());
    }
  }
  return l;
}

void FeatureMlpModel::write_payload(json& params, json& payload) const {
  params = {{"hidden", params_.hidden},
            {"activation", activation_name(params_.activation)},
            {"learning_rate", params_.learning_rate},
            {"epochs", params_.epochs},
            {"batch", params_.batch},
            {"l2", params_.l2},
            {"seed", params_.seed}};
  json layers = json::array();
  for (const auto& L : layers_)
    layers.push_back({{"in", L.in}, {"out", L.out}, {"weight", L.weight}, {"bias", L.bias}});
  payload = {{"mean", mean_}, {"scale", scale_}, {"layers", layers}};
}

std::unique_ptr<FeatureMlpModel> init_feature_mlp(const Dataset& data, const MlpParams& params) {
  const std::size_t d = data.x.cols;
  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  const double n = static_cast<double>(data.size());
  if (data.size() > 0) {
    for (std::size_t i = 0; i < data.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += data.x(i, j);
    for (double& m : mean) m /= n;
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) var[j] += (data.x(i, j) - mean[j]) * (data.x(i, j) - mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = var[j] / n;
      scale[j] = v < 1e-12 ? 1.0 : std::sqrt(v);
    }
  }
  Rng rng(derive_seed(params.seed, {0}));
  std::vector<DenseLayer> layers;
  std::size_t in = d;
  std::vector<std::size_t> widths;
  for (int h : params.hidden) {
    if (h < 1) throw Error("mlp: hidden layer sizes must be positive");
    widths.push_back(static_cast<std::size_t>(h));
  }
  widths.push_back(data.class_count());
  for (std::size_t out : widths) {
    DenseLayer L;
    L.in = in;
    L.out = out;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    L.weight.resize(in * out);
    for (double& w : L.weight) w = uniform(rng, -limit, limit);
    L.bias.assign(out, 0.0);
    layers.push_back(std::move(L));
    in = out;
  }
  return std::make_unique<FeatureMlpModel>(data.header, data.classes, params, std::move(mean),
                                           std::move(scale), std::move(layers));
}

std::unique_ptr<FeatureMlpModel> train_feature_mlp(const Dataset& data, const MlpParams& params) {
  if (data.size() == 0) throw Error("mlp: empty training set");
  if (params.batch < 1 || params.epochs < 0) throw Error("mlp: batch must be positive, epochs non-negative");
  auto model = init_feature_mlp(data, params);
  const Matrix z = model->standardize(data.x);
  std::vector<DenseLayer> layers = model->layers();

  std::vector<DenseLayer> m1 = layers, m2 = layers;
  for (auto* ms : {&m1, &m2})
    for (auto& L : *ms) {
      std::fill(L.weight.begin(), L.weight.end(), 0.0);
      std::fill(L.bias.begin(), L.bias.end(), 0.0);
    }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  Rng rng(derive_seed(params.seed, {1}));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(params.batch);
  std::vector<DenseLayer> grads;

  auto adam = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& m,
                  std::vector<double>& v, double c1, double c2) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= params.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  };

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const double l = backward(layers, params.activation, params.l2, z, data.y, rows, &grads);
      if (!std::isfinite(l))
        throw Error("mlp: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                    " (learning rate " + format_real(params.learning_rate) + ")");
      ++step;
      const double c1 = 1 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1 - std::pow(b2, static_cast<double>(step));
      for (std::size_t li = 0; li < layers.size(); ++li) {
        adam(layers[li].weight, grads[li].weight, m1[li].weight, m2[li].weight, c1, c2);
        adam(layers[li].bias, grads[li].bias, m1[li].bias, m2[li].bias, c1, c2);
      }
    }
  }
  return std::make_unique<FeatureMlpModel>(data.header, data.classes, params, model->mean(), model->scale(),
                                           std::move(layers));
}

// --- Voting ----------------------------------------------------------------

namespace {

std::vector<std::string> first_header(const std::vector<std::shared_ptr<const Classifier>>& m) {
  if (m.size() < 2) throw Error("vote: needs at least two members");
  return m.front()->header();
}

std::vector<std::string> first_classes(const std::vector<std::shared_ptr<const Classifier>>& m) {
  if (m.size() < 2) throw Error("vote: needs at least two members");
  return m.front()->classes();
}

}  // namespace

VoteEnsemble::VoteEnsemble(std::vector<std::shared_ptr<const Classifier>> members, VoteMode mode)
    : Classifier(first_header(members), first_classes(members)), members_(std::move(members)), mode_(mode) {
  for (std::size_t i = 1; i < members_.size(); ++i) {
    if (members_[i]->classes() != classes())
      throw Error("vote: member " + std::to_string(i) + " has a different class set");
    if (members_[i]->header() != header())
      throw Error("vote: member " + std::to_string(i) + " has a different feature header");
  }
}

Prediction vote(const std::vector<Prediction>& members, VoteMode mode, std::size_t class_count) {
  Prediction out;
  out.proba.assign(class_count, 0.0);
  if (members.empty()) return out;
  for (const auto& m : members) {
    if (mode == VoteMode::Hard) {
      out.proba[static_cast<std::size_t>(m.label)] += 1.0;
    } else {
      for (std::size_t c = 0; c < class_count; ++c) out.proba[c] += m.proba[c];
    }
  }
  for (double& v : out.proba) v /= static_cast<double>(members.size());
  out.label = argmax(out.proba);
  return out;
}

Matrix VoteEnsemble::predict_proba(const Matrix& x) const {
  check_width(x);
  std::vector<std::vector<Prediction>> per_member;
  for (const auto& m : members_) per_member.push_back(m->predict(x));
  Matrix out(x.rows, classes().size());
  std::vector<Prediction> row(members_.size());
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t m = 0; m < members_.size(); ++m) row[m] = per_member[m][i];
    const auto v = vote(row, mode_, classes().size());
    std::copy(v.proba.begin(), v.proba.end(), out.row(i).begin());
  }
  return out;
}

namespace {
json model_to_json(const Classifier& model);
std::unique_ptr<Classifier> model_from_json(const json& j);
}  // namespace

void VoteEnsemble::write_payload(json& params, json& payload) const {
  params = json::object();
  json members = json::array();
  for (const auto& m : members_) members.push_back(model_to_json(*m));
  payload = {{"members", members}};
}

// --- Specs, files, grid search ----------------------------------------------

std::string ModelSpec::describe() const {
  std::ostringstream out;
  out << kind;
  if (kind == "forest" || kind.starts_with("vote"))
    out << " n_trees=" << forest.n_trees << " max_depth=" << (forest.max_depth == 0 ? "none" : std::to_string(forest.max_depth));
  if (kind == "mlp" || kind.starts_with("vote")) {
    out << " hidden=(";
    for (std::size_t i = 0; i < mlp.hidden.size(); ++i) out << (i ? "," : "") << mlp.hidden[i];
    out << ") activation=" << activation_name(mlp.activation);
  }
  return out.str();
}

std::unique_ptr<Classifier> train_model(const ModelSpec& spec, const Dataset& data, std::uint64_t seed) {
  ForestParams fp = spec.forest;
  fp.seed = derive_seed(seed, {1});
  MlpParams mp = spec.mlp;
  mp.seed = derive_seed(seed, {2});
  if (spec.kind == "dummy") return train_dummy(data, derive_seed(seed, {3}));
  if (spec.kind == "forest") return train_forest(data, fp);
  if (spec.kind == "mlp") return train_feature_mlp(data, mp);
  if (spec.kind == "vote_hard" || spec.kind == "vote_soft") {
    std::vector<std::shared_ptr<const Classifier>> members;
    members.emplace_back(train_forest(data, fp));
    members.emplace_back(train_feature_mlp(data, mp));
    return std::make_unique<VoteEnsemble>(std::move(members),
                                          spec.kind == "vote_hard" ? VoteMode::Hard : VoteMode::Soft);
  }
  throw Error("unknown model kind '" + spec.kind + "'");
}

namespace {

json model_to_json(const Classifier& model) {
  json params, payload;
  model.write_payload(params, payload);
  return {{"format", "tpc-model"}, {"version", kModelFormatVersion}, {"kind", model.kind()},
          {"header", model.header()}, {"classes", model.classes()}, {"params", params},
          {"payload", payload}};
}

std::unique_ptr<Classifier> model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "tpc-model") throw Error("model: not a tpc model file");
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw Error("model: unsupported version " + j.at("version").dump());
  const auto kind = j.at("kind").get<std::string>();
  auto header = j.at("header").get<std::vector<std::string>>();
  auto classes = j.at("classes").get<std::vector<std::string>>();
  const json& p = j.at("params");
  const json& d = j.at("payload");
  if (kind == "dummy")
    return std::make_unique<DummyModel>(std::move(header), std::move(classes),
                                        d.at("prior").get<std::vector<double>>(), p.at("seed").get<std::uint64_t>());
  if (kind == "forest") {
    ForestParams fp;
    fp.n_trees = p.at("n_trees");
    fp.max_depth = p.at("max_depth");
    fp.min_leaf = p.at("min_leaf");
    fp.feature_subsample = p.at("feature_subsample");
    fp.bootstrap = p.at("bootstrap");
    fp.seed = p.at("seed");
    std::vector<DecisionTree> trees;
    for (const auto& t : d.at("trees")) {
      DecisionTree tree;
      const auto& f = t.at("feature");
      for (std::size_t i = 0; i < f.size(); ++i) {
        TreeNode n;
        n.feature = f[i];
        n.threshold = t.at("threshold")[i];
        n.left = t.at("left")[i];
        n.right = t.at("right")[i];
        n.counts = t.at("counts")[i].get<std::vector<double>>();
        const int limit = static_cast<int>(f.size());
        if (n.feature >= static_cast<int>(header.size()) ||
            (n.feature >= 0 && (n.left <= 0 || n.left >= limit || n.right <= 0 || n.right >= limit)))
          throw Error("model: corrupt tree node " + std::to_string(i));
        if (n.feature < 0 && n.counts.size() != classes.size()) throw Error("model: corrupt leaf counts");
        tree.nodes.push_back(std::move(n));
      }
      if (tree.nodes.empty()) throw Error("model: empty tree");
      trees.push_back(std::move(tree));
    }
    return std::make_unique<ForestModel>(std::move(header), std::move(classes), fp, std::move(trees));
  }
  if (kind == "mlp") {
    MlpParams mp;
    mp.hidden = p.at("hidden").get<std::vector<int>>();
    mp.activation = parse_activation(p.at("activation"));
    mp.learning_rate = p.at("learning_rate");
    mp.epochs = p.at("epochs");
    mp.batch = p.at("batch");
    mp.l2 = p.at("l2");
    mp.seed = p.at("seed");
    std::vector<DenseLayer> layers;
    for (const auto& l : d.at("layers")) {
      DenseLayer L;
      L.in = l.at("in");
      L.out = l.at("out");
      L.weight = l.at("weight").get<std::vector<double>>();
      L.bias = l.at("bias").get<std::vector<double>>();
      layers.push_back(std::move(L));
    }
    return std::make_unique<FeatureMlpModel>(std::move(header), std::move(classes), mp,
                                             d.at("mean").get<std::vector<double>>(),
                                             d.at("scale").get<std::vector<double>>(), std::move(layers));
  }
  if (kind == "vote_hard" || kind == "vote_soft") {
    std::vector<std::shared_ptr<const Classifier>> members;
    for (const auto& m : d.at("members")) members.emplace_back(model_from_json(m));
    auto out = std::make_unique<VoteEnsemble>(std::move(members),
                                              kind == "vote_hard" ? VoteMode::Hard : VoteMode::Soft);
    if (out->header() != header || out->classes() != classes) throw Error("model: ensemble header mismatch");
    return out;
  }
  throw Error("model: unknown kind '" + kind + "'");
}

}  // namespace

std::string serialize_model(const Classifier& model) { return model_to_json(model).dump(); }

std::unique_ptr<Classifier> deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model: malformed JSON: ") + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw Error(std::string("model: malformed field: ") + e.what());
  }
}

void save_model(const std::string& path, const Classifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path);
  out << serialize_model(model) << '\n';
  if (!out) throw Error("failed writing model file " + path);
}

std::unique_ptr<Classifier> load_model(const std::string& path) {
  try {
    return deserialize_model(text::read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

GridResult grid_search(const Dataset& data, const std::vector<ModelSpec>& grid, int folds, std::uint64_t seed) {
  if (grid.empty()) throw Error("grid_search: empty grid");
  const auto split = stratified_kfold(data.y, folds, seed);
  GridResult result;
  for (const auto& spec : grid) {
    GridRow row{spec, {}, 0.0};
    for (std::size_t f = 0; f < split.size(); ++f) {
      const auto train = data.subset(training_indices(split, f));
      const auto test = data.subset(split[f]);
      const auto model = train_model(spec, train, derive_seed(seed, {f}));
      row.fold_accuracy.push_back(accuracy(*model, test));
    }
    row.mean_accuracy = std::accumulate(row.fold_accuracy.begin(), row.fold_accuracy.end(), 0.0) /
                        static_cast<double>(row.fold_accuracy.size());
    result.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    if (result.rows[i].mean_accuracy > result.rows[result.best].mean_accuracy) result.best = i;
  return result;
}

}  // namespace tpc
