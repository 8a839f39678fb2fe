#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "tpc/cli.hpp"
#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(where + "." + key + ": wrong type (" + it->dump() + ")");
  }
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

// Applies classifier parameters (forest and MLP keys) onto a spec.
void apply_params(ModelSpec& spec, const json& p, const std::string& where) {
  check_keys(p, where,
             {"n_trees", "max_depth", "min_leaf", "feature_subsample", "bootstrap", "hidden", "activation",
              "learning_rate", "epochs", "batch", "l2"});
  auto& f = spec.forest;
  f.n_trees = get(p, "n_trees", where, f.n_trees);
  if (p.contains("max_depth")) f.max_depth = p["max_depth"].is_null() ? 0 : get(p, "max_depth", where, 0);
  f.min_leaf = get(p, "min_leaf", where, f.min_leaf);
  f.feature_subsample = get(p, "feature_subsample", where, f.feature_subsample);
  f.bootstrap = get(p, "bootstrap", where, f.bootstrap);
  auto& m = spec.mlp;
  if (p.contains("hidden")) {
    const auto& h = p["hidden"];
    m.hidden = h.is_number() ? std::vector<int>{h.get<int>()} : get(p, "hidden", where, m.hidden);
  }
  if (p.contains("activation")) m.activation = parse_activation(get<std::string>(p, "activation", where, ""));
  m.learning_rate = get(p, "learning_rate", where, m.learning_rate);
  m.epochs = get(p, "epochs", where, m.epochs);
  m.batch = get(p, "batch", where, m.batch);
  m.l2 = get(p, "l2", where, m.l2);
  if (f.n_trees < 1 || f.min_leaf < 1 || f.max_depth < 0 || m.epochs < 0 || m.batch < 1)
    throw Error(where + ": parameter out of range");
}

std::vector<ModelSpec> grid_from(const json& g, const std::string& classifier, const ModelSpec& base,
                                 const std::string& where) {
  if (g.is_string()) {
    if (g.get<std::string>() != "default") throw Error(where + ": expected \"default\", an array or an object");
    return default_grid(classifier, base);
  }
  std::vector<json> points;
  if (g.is_array()) {
    for (const auto& p : g) points.push_back(p);
  } else if (g.is_object()) {
    points.push_back(json::object());
    for (const auto& [key, values] : g.items()) {  // nlohmann objects iterate in sorted key order
      if (!values.is_array() || values.empty()) throw Error(where + "." + key + ": expected a non-empty array");
      std::vector<json> next;
      for (const auto& p : points)
        for (const auto& v : values) {
          json q = p;
          q[key] = v;
          next.push_back(std::move(q));
        }
      points = std::move(next);
    }
  } else {
    throw Error(where + ": expected \"default\", an array or an object");
  }
  std::vector<ModelSpec> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    ModelSpec s = base;
    s.kind = classifier;
    apply_params(s, points[i], where + "[" + std::to_string(i) + "]");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error(where + ": empty grid");
  return out;
}

NeuralConfig neural_from(const json& j, const std::string& where) {
  check_keys(j, where,
             {"head", "mode", "char_dim", "gru_hidden", "mlp_hidden", "conv_filters", "conv_kernel", "pool_h",
              "pool_w", "fc_hidden", "dropout", "epochs", "learning_rate", "batch", "tune_embeddings",
              "char_spaces"});
  NeuralConfig c;
  if (j.contains("head")) c.head = parse_head(get<std::string>(j, "head", where, ""));
  if (j.contains("mode")) c.mode = parse_symbol_mode(get<std::string>(j, "mode", where, ""));
  c.char_dim = get(j, "char_dim", where, c.char_dim);
  c.gru_hidden = get(j, "gru_hidden", where, c.gru_hidden);
  c.mlp_hidden = get(j, "mlp_hidden", where, c.mlp_hidden);
  c.conv_filters = get(j, "conv_filters", where, c.conv_filters);
  c.conv_kernel = get(j, "conv_kernel", where, c.conv_kernel);
  c.pool_h = get(j, "pool_h", where, c.pool_h);
  c.pool_w = get(j, "pool_w", where, c.pool_w);
  c.fc_hidden = get(j, "fc_hidden", where, c.fc_hidden);
  c.dropout = get(j, "dropout", where, c.dropout);
  c.epochs = get(j, "epochs", where, c.epochs);
  c.learning_rate = get(j, "learning_rate", where, c.learning_rate);
  c.batch = get(j, "batch", where, c.batch);
  c.tune_embeddings = get(j, "tune_embeddings", where, c.tune_embeddings);
  c.char_spaces = get(j, "char_spaces", where, c.char_spaces);
  return c;
}

const std::set<std::string> kClassifiers = {"dummy", "forest", "mlp", "vote_hard", "vote_soft", "neural"};

}  // namespace

std::vector<ModelSpec> default_grid(const std::string& classifier, const ModelSpec& base) {
  std::vector<ModelSpec> out;
  auto with = [&](auto&& edit) {
    ModelSpec s = base;
    s.kind = classifier;
    edit(s);
    out.push_back(std::move(s));
  };
  if (classifier == "mlp") {
    for (int h : {50, 100}) with([&](ModelSpec& s) { s.mlp.hidden = {h}; });
  } else if (classifier == "dummy") {
    with([](ModelSpec&) {});
  } else {
    for (int n : {100, 300})
      for (int d : {0, 10, 20})
        with([&](ModelSpec& s) {
          s.forest.n_trees = n;
          s.forest.max_depth = d;
        });
  }
  return out;
}

std::vector<ModelSpec> parse_grid(const std::string& json_text, const std::string& classifier, const ModelSpec& base) {
  try {
    return grid_from(json::parse(json_text), classifier, base, "grid");
  } catch (const json::exception& e) {
    throw Error(std::string("grid: malformed JSON: ") + e.what());
  }
}

const ExperimentConfig& RunConfig::experiment(const std::string& name) const {
  for (const auto& e : experiments)
    if (e.name == name) return e;
  std::string names;
  for (const auto& e : experiments) names += (names.empty() ? "" : ", ") + e.name;
  throw Error("unknown experiment '" + name + "'; available: " + (names.empty() ? "(none)" : names));
}

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j, "config", {"bundle", "resources", "out_dir", "seed", "verbosity", "features", "experiments"});
  RunConfig c;
  c.hash = text::fnv1a_hex(text);
  c.bundle = resolve(get<std::string>(j, "bundle", "config", ""), base_dir);
  if (c.bundle.empty()) throw Error("config: 'bundle' is required");
  c.out_dir = resolve(get<std::string>(j, "out_dir", "config", "out"), base_dir);
  c.seed = get<std::uint64_t>(j, "seed", "config", 0);
  c.verbosity = get(j, "verbosity", "config", 1);
  if (j.contains("resources")) {
    const auto& r = j["resources"];
    check_keys(r, "config.resources",
               {"embeddings", "translation_ef", "translation_fe", "concepts", "manual_lists", "normalization"});
    auto path = [&](const char* key) { return resolve(get<std::string>(r, key, "config.resources", ""), base_dir); };
    c.resources = {path("embeddings"), path("translation_ef"), path("translation_fe"),
                   path("concepts"),   path("manual_lists"),   path("normalization")};
    if (c.resources.translation_ef.empty() != c.resources.translation_fe.empty())
      throw Error("config.resources: translation_ef and translation_fe must be given together");
  }
  if (j.contains("features")) {
    const auto& f = j["features"];
    check_keys(f, "config.features", {"constituent_cover", "gap_content_only"});
    const std::string cover = get<std::string>(f, "constituent_cover", "config.features", "minimal");
    if (cover != "minimal" && cover != "maximal")
      throw Error("config.features.constituent_cover: expected minimal or maximal");
    c.features.constituent_cover = cover == "minimal" ? CoverMode::Minimal : CoverMode::Maximal;
    c.features.gap_content_only = get(f, "gap_content_only", "config.features", false);
  }

  std::set<std::string> names;
  const json experiments = j.value("experiments", json::array());
  if (!experiments.is_array()) throw Error("config.experiments: expected an array");
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    const auto& e = experiments[i];
    std::string where = "config.experiments[" + std::to_string(i) + "]";
    check_keys(e, where,
               {"name", "task", "classifier", "params", "grid", "inner_folds", "groups", "drop_groups", "neural",
                "seed", "folds", "sizes", "ablation", "final_model"});
    ExperimentConfig x;
    x.name = get<std::string>(e, "name", where, "");
    if (x.name.empty()) throw Error(where + ": 'name' is required");
    where = "experiment '" + x.name + "'";
    if (!names.insert(x.name).second) throw Error(where + ": duplicate experiment name");
    if (!e.contains("task")) throw Error(where + ": 'task' is required");
    x.task = parse_task(get<std::string>(e, "task", where, ""));
    x.classifier = get<std::string>(e, "classifier", where, "forest");
    if (!kClassifiers.count(x.classifier)) throw Error(where + ": unknown classifier '" + x.classifier + "'");
    x.model.kind = x.classifier;
    if (e.contains("params")) apply_params(x.model, e["params"], where + ".params");
    if (e.contains("grid") && !e["grid"].is_null()) {
      if (x.classifier == "neural") throw Error(where + ": grid search is not available for neural models");
      x.grid = grid_from(e["grid"], x.classifier, x.model, where + ".grid");
    }
    x.inner_folds = get(e, "inner_folds", where, 3);
    x.selection = parse_selection(get(e, "groups", where, std::vector<std::string>{"all"}));
    const auto drop = get(e, "drop_groups", where, std::vector<std::string>{});
    if (!drop.empty()) x.selection = x.selection.minus(parse_selection(drop));
    if (x.selection.empty() && x.classifier != "neural") throw Error(where + ": feature selection is empty");
    if (e.contains("neural")) x.neural = neural_from(e["neural"], where + ".neural");
    x.seed = get<std::uint64_t>(e, "seed", where, c.seed);
    x.folds = get(e, "folds", where, 5);
    if (x.folds < 2 || x.inner_folds < 2) throw Error(where + ": folds must be at least 2");
    if (e.contains("sizes")) {
      const auto& s = e["sizes"];
      check_keys(s, where + ".sizes", {"literal_draw", "group_size"});
      x.sizes.literal_draw = get(s, "literal_draw", where + ".sizes", x.sizes.literal_draw);
      x.sizes.group_size = get(s, "group_size", where + ".sizes", x.sizes.group_size);
    }
    x.ablation = get(e, "ablation", where, false);
    x.final_model = get(e, "final_model", where, false);
    if (x.ablation && x.classifier == "neural") throw Error(where + ": ablation needs a feature-based classifier");
    c.experiments.push_back(std::move(x));
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = text::read_file(path);
  } catch (const Error&) {
    throw Error("cannot read config file '" + path + "'");
  }
  const std::string base = fs::path(path).parent_path().string();
  RunConfig c = parse_run_config(text, base.empty() ? "." : base);
  c.path = path;
  return c;
}

std::vector<std::string> missing_paths(const RunConfig& config) {
  std::vector<std::string> out;
  const auto& r = config.resources;
  for (const auto* p : {&config.bundle, &r.embeddings, &r.translation_ef, &r.translation_fe, &r.concepts,
                        &r.manual_lists, &r.normalization})
    if (!p->empty() && !fs::exists(*p)) out.push_back(*p);
  return out;
}

ResourceSet load_resource_set(const ResourcePaths& paths) {
  ResourceSet rs;
  auto sum = [&](const std::string& p) {
    if (!p.empty()) rs.checksums[p] = text::file_checksum(p);
  };
  if (!paths.embeddings.empty()) rs.embeddings = load_embeddings(paths.embeddings);
  if (!paths.translation_ef.empty()) rs.translation = load_translation_table(paths.translation_ef, paths.translation_fe);
  if (!paths.concepts.empty()) rs.concepts = load_concept_graph(paths.concepts);
  rs.lists = paths.manual_lists.empty() ? default_manual_lists() : load_manual_lists(paths.manual_lists);
  for (const auto* p : {&paths.embeddings, &paths.translation_ef, &paths.translation_fe, &paths.concepts,
                        &paths.manual_lists, &paths.normalization})
    sum(*p);
  return rs;
}

Corpus load_corpus(const RunConfig& config, const ResourcePaths& paths) {
  Corpus corpus = load_bundle(config.bundle);
  if (!paths.normalization.empty()) {
    const auto rules = load_normalization(paths.normalization);
    for (auto& s : corpus) s = normalize_sentence(s, rules);
  }
  return corpus;
}

}  // namespace tpc
