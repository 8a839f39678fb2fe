#include "tpc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tpc/error.hpp"
#include "tpc/folds.hpp"
#include "tpc/parallel.hpp"
#include "tpc/random.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;

namespace {

const std::vector<std::pair<Task, std::string>>& task_names() {
  static const std::vector<std::pair<Task, std::string>> names = {
      {Task::SixClassFull, "six_class_full"},   {Task::SixClass200L, "six_class_200L"},
      {Task::Binary3to1, "binary_3to1"},        {Task::Binary2to1, "binary_2to1"},
      {Task::Binary1to1, "binary_1to1"},        {Task::FiveClass, "five_class"},
      {Task::LvsNL549, "L_vs_NL_549"},          {Task::LEvsNonLE549, "LE_vs_nonLE_549"},
      {Task::LETvsNonLET549, "LET_vs_nonLET_549"}};
  return names;
}

std::vector<std::size_t> draw(const std::vector<std::size_t>& pool, std::size_t k, std::uint64_t seed,
                              const std::string& what) {
  if (k > pool.size())
    throw Error("subsample: " + what + " has " + std::to_string(pool.size()) + " instances, " +
                std::to_string(k) + " requested");
  std::vector<std::size_t> v = pool;
  Rng rng(seed);
  shuffle(std::span<std::size_t>(v), rng);
  v.resize(k);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::string task_name(Task t) {
  for (const auto& [task, name] : task_names())
    if (task == t) return name;
  return "?";
}

Task parse_task(const std::string& name) {
  for (const auto& [task, n] : task_names())
    if (n == name) return task;
  std::string all;
  for (const auto& [task, n] : task_names()) all += (all.empty() ? "" : ", ") + n;
  throw Error("unknown task '" + name + "' (expected one of " + all + ")");
}

bool is_grouping_task(Task t) {
  return t == Task::LvsNL549 || t == Task::LEvsNonLE549 || t == Task::LETvsNonLET549;
}

TaskData subsample(const Corpus& corpus, Task task, std::uint64_t seed, const TaskSizes& sizes) {
  const auto refs = all_pairs(corpus);
  std::vector<ProcessLabel> label(refs.size());
  std::vector<RawLabel> raw(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& p = corpus[refs[i].sentence].phrase_pairs[refs[i].phrase];
    label[i] = p.label();
    raw[i] = p.raw_label;
  }
  std::vector<std::size_t> literal, non_literal;
  for (std::size_t i = 0; i < refs.size(); ++i)
    (label[i] == ProcessLabel::Literal ? literal : non_literal).push_back(i);

  TaskData out;
  out.task = task;
  std::vector<std::pair<std::size_t, int>> chosen;  // (index into refs, label)
  auto take_all = [&](const std::vector<std::size_t>& idx, int lab) {
    for (std::size_t i : idx) chosen.emplace_back(i, lab);
  };
  auto six_names = [] {
    std::vector<std::string> v;
    for (std::size_t c = 0; c < kProcessLabelCount; ++c)
      v.emplace_back(process_label_name(static_cast<ProcessLabel>(c)));
    return v;
  };

  switch (task) {
    case Task::SixClassFull:
    case Task::SixClass200L: {
      out.classes = six_names();
      for (std::size_t i : non_literal) chosen.emplace_back(i, static_cast<int>(label[i]));
      if (task == Task::SixClassFull)
        take_all(literal, 0);
      else
        take_all(draw(literal, sizes.literal_draw, derive_seed(seed, {0}), "Literal"), 0);
      break;
    }
    case Task::FiveClass: {
      for (std::size_t c = 1; c < kProcessLabelCount; ++c)
        out.classes.emplace_back(process_label_name(static_cast<ProcessLabel>(c)));
      for (std::size_t i : non_literal) chosen.emplace_back(i, static_cast<int>(label[i]) - 1);
      break;
    }
    case Task::Binary3to1:
    case Task::Binary2to1:
    case Task::Binary1to1: {
      out.classes = {"Literal", "Non_literal"};
      take_all(non_literal, 1);
      if (task == Task::Binary3to1) {
        take_all(literal, 0);
      } else {
        const std::size_t k = (task == Task::Binary2to1 ? 2 : 1) * non_literal.size();
        take_all(draw(literal, k, derive_seed(seed, {0}), "Literal"), 0);
      }
      break;
    }
    case Task::LvsNL549:
    case Task::LEvsNonLE549:
    case Task::LETvsNonLET549: {
      std::vector<std::size_t> pos, neg;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        bool in = label[i] == ProcessLabel::Literal;
        if (task != Task::LvsNL549) in = in || label[i] == ProcessLabel::Equivalence;
        if (task == Task::LETvsNonLET549) in = in || raw[i] == RawLabel::Transposition;
        (in ? pos : neg).push_back(i);
      }
      if (task == Task::LvsNL549)
        out.classes = {"Literal", "Non_literal"};
      else if (task == Task::LEvsNonLE549)
        out.classes = {"LE", "non_LE"};
      else
        out.classes = {"LET", "non_LET"};
      take_all(draw(pos, sizes.group_size, derive_seed(seed, {1}), out.classes[0]), 0);
      take_all(draw(neg, sizes.group_size, derive_seed(seed, {2}), out.classes[1]), 1);
      break;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [i, lab] : chosen) {
    out.refs.push_back(refs[i]);
    out.labels.push_back(lab);
  }
  return out;
}

double stratified_chance(const std::vector<std::size_t>& census) {
  const double n = static_cast<double>(std::accumulate(census.begin(), census.end(), std::size_t{0}));
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t c : census) s += (static_cast<double>(c) / n) * (static_cast<double>(c) / n);
  return s;
}

Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& predicted, std::size_t class_count) {
  if (gold.size() != predicted.size())
    throw Error("compute_metrics: " + std::to_string(gold.size()) + " gold labels but " +
                std::to_string(predicted.size()) + " predictions");
  Metrics m;
  m.confusion.assign(class_count, std::vector<std::size_t>(class_count, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (int v : {gold[i], predicted[i]})
      if (v < 0 || static_cast<std::size_t>(v) >= class_count)
        throw Error("compute_metrics: label " + std::to_string(v) + " outside the class set at position " +
                    std::to_string(i));
    ++m.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  }
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro = 0.0;
  std::size_t present = 0;
  m.per_class.resize(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    std::size_t tp = m.confusion[c][c], gold_c = 0, pred_c = 0;
    for (std::size_t o = 0; o < class_count; ++o) {
      gold_c += m.confusion[c][o];
      pred_c += m.confusion[o][c];
    }
    auto& cm = m.per_class[c];
    cm.support = gold_c;
    cm.precision = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    cm.recall = gold_c ? static_cast<double>(tp) / static_cast<double>(gold_c) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0 ? 2 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    tp_all += tp;
    fp_all += pred_c - tp;
    fn_all += gold_c - tp;
    if (gold_c > 0) {
      macro += cm.f1;
      ++present;
    }
  }
  if (!gold.empty()) {
    m.accuracy = static_cast<double>(tp_all) / static_cast<double>(gold.size());
    const double p = static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all);
    const double r = static_cast<double>(tp_all) / static_cast<double>(tp_all + fn_all);
    m.micro_f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.macro_f1 = present ? macro / static_cast<double>(present) : 0.0;
  return m;
}

FeatureCache build_feature_cache(const Corpus& corpus, const FeatureExtractor& extractor) {
  FeatureCache cache;
  const auto refs = all_pairs(corpus);
  const auto rows = featurize(corpus, refs, extractor, FeatureSelection::all());
  cache.schema = extractor.schema(FeatureSelection::all());
  cache.values = Matrix(rows.size(), cache.schema->size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cache.row_of[{refs[i].sentence, refs[i].phrase}] = i;
    std::copy(rows[i].values.begin(), rows[i].values.end(), cache.values.row(i).begin());
  }
  return cache;
}

Dataset select_dataset(const FeatureCache& cache, const TaskData& data, const FeatureSelection& selection) {
  std::vector<std::size_t> cols;
  Dataset d;
  for (std::size_t j = 0; j < cache.schema->size(); ++j)
    if (selection.has_family(cache.schema->families[j])) {
      cols.push_back(j);
      d.header.push_back(cache.schema->names[j]);
    }
  d.classes = data.classes;
  d.y = data.labels;
  d.x = Matrix(data.refs.size(), cols.size());
  for (std::size_t i = 0; i < data.refs.size(); ++i) {
    const auto it = cache.row_of.find({data.refs[i].sentence, data.refs[i].phrase});
    if (it == cache.row_of.end()) throw Error("select_dataset: phrase pair missing from the feature cache");
    for (std::size_t c = 0; c < cols.size(); ++c) d.x(i, c) = cache.values(it->second, cols[c]);
  }
  return d;
}

namespace {

void check_disjoint(const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, std::size_t fold) {
  std::vector<std::size_t> both;
  std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(both));
  if (!both.empty())
    throw Error("fold " + std::to_string(fold) + ": " + std::to_string(both.size()) +
                " instances appear in both training and test data");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Corpus& corpus, const ResourceSet& resources,
                                const FeatureCache* cache) {
  ExperimentResult result;
  MetricsReport& rep = result.report;
  rep.name = cfg.name;
  rep.task = cfg.task;
  rep.classifier = cfg.classifier;
  rep.seed = cfg.seed;
  rep.sample_seed = derive_seed(cfg.seed, {1});
  rep.fold_seed = derive_seed(cfg.seed, {2});
  const bool neural = cfg.classifier == "neural";
  rep.selection = neural ? "text:" + head_name(cfg.neural.head) + "/" + symbol_mode_name(cfg.neural.mode)
                         : cfg.selection.describe();

  const TaskData data = subsample(corpus, cfg.task, rep.sample_seed, cfg.sizes);
  rep.classes = data.classes;
  rep.census.assign(data.classes.size(), 0);
  for (int l : data.labels) ++rep.census[static_cast<std::size_t>(l)];
  const auto split = stratified_kfold(data.labels, cfg.folds, rep.fold_seed);

  Dataset features;
  std::vector<TextPair> texts;
  const EmbeddingTable* pretrained = nullptr;
  if (neural) {
    for (const auto& r : data.refs)
      texts.push_back(make_text_pair(corpus[r.sentence], corpus[r.sentence].phrase_pairs[r.phrase], cfg.neural));
    if (cfg.neural.mode == SymbolMode::Word) pretrained = &resources.embeddings;
  } else {
    if (cfg.selection.empty()) throw Error(cfg.name + ": empty feature selection");
    std::optional<FeatureCache> local;
    if (!cache) {
      FeatureExtractor extractor(resources);
      local = build_feature_cache(corpus, extractor);
      cache = &*local;
    }
    features = select_dataset(*cache, data, cfg.selection);
  }

  rep.folds.resize(split.size());
  parallel_for(split.size(), [&](std::size_t f) {
    FoldRecord& fr = rep.folds[f];
    const auto train_idx = training_indices(split, f);
    const auto& test_idx = split[f];
    check_disjoint(train_idx, test_idx, f);
    fr.train_size = train_idx.size();
    fr.test_size = test_idx.size();
    fr.model_seed = derive_seed(cfg.seed, {3, f});
    std::vector<int> gold, pred;
    for (std::size_t i : test_idx) gold.push_back(data.labels[i]);
    if (neural) {
      std::vector<TextPair> tx, vx;
      std::vector<int> ty;
      for (std::size_t i : train_idx) {
        tx.push_back(texts[i]);
        ty.push_back(data.labels[i]);
      }
      for (std::size_t i : test_idx) vx.push_back(texts[i]);
      NeuralConfig ncfg = cfg.neural;
      ncfg.seed = fr.model_seed;
      auto trained = train_neural(tx, ty, data.classes, ncfg, pretrained,
                                  ncfg.mode == SymbolMode::Word ? vx : std::vector<TextPair>{});
      fr.loss_curve = trained.loss_curve;
      fr.aborted = trained.aborted;
      for (const auto& p : trained.model.predict(vx)) pred.push_back(p.label);
    } else {
      const Dataset train = features.subset(train_idx);
      const Dataset test = features.subset(test_idx);
      ModelSpec spec = cfg.model;
      spec.kind = cfg.classifier;
      if (!cfg.grid.empty()) {
        const auto g = grid_search(train, cfg.grid, cfg.inner_folds, derive_seed(fr.model_seed, {9}));
        spec = g.best_spec();
        fr.chosen = spec.describe();
      }
      const auto model = train_model(spec, train, fr.model_seed);
      for (const auto& p : model->predict(test.x)) pred.push_back(p.label);
    }
    fr.metrics = compute_metrics(gold, pred, data.classes.size());
  });

  const std::size_t k = data.classes.size();
  rep.per_class_f1.assign(k, 0.0);
  rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::vector<std::size_t> present(k, 0);
  for (std::size_t f = 0; f < rep.folds.size(); ++f) {
    const auto& m = rep.folds[f].metrics;
    if (std::abs(m.micro_f1 - m.accuracy) > 1e-9)
      throw Error(cfg.name + ": micro-F1 differs from accuracy in fold " + std::to_string(f));
    rep.accuracy += m.accuracy;
    rep.micro_f1 += m.micro_f1;
    rep.macro_f1 += m.macro_f1;
    for (std::size_t c = 0; c < k; ++c) {
      if (m.per_class[c].support > 0) {
        rep.per_class_f1[c] += m.per_class[c].f1;
        ++present[c];
      } else {
        rep.notes.push_back("fold " + std::to_string(f) + ": class " + data.classes[c] +
                            " absent from gold, excluded from macro-F1");
      }
      for (std::size_t o = 0; o < k; ++o) rep.confusion[c][o] += m.confusion[c][o];
    }
    if (rep.folds[f].aborted) rep.notes.push_back("fold " + std::to_string(f) + ": training aborted on a non-finite loss");
  }
  const double nf = static_cast<double>(rep.folds.size());
  rep.accuracy /= nf;
  rep.micro_f1 /= nf;
  rep.macro_f1 /= nf;
  for (std::size_t c = 0; c < k; ++c)
    if (present[c]) rep.per_class_f1[c] /= static_cast<double>(present[c]);
  if (!cfg.grid.empty())
    rep.notes.push_back("hyperparameters tuned by nested " + std::to_string(cfg.inner_folds) +
                        "-fold grid search inside each training fold");

  if (cfg.final_model) {
    const std::uint64_t final_seed = derive_seed(cfg.seed, {4});
    if (neural) {
      NeuralConfig ncfg = cfg.neural;
      ncfg.seed = final_seed;
      result.final_neural = train_neural(texts, data.labels, data.classes, ncfg, pretrained).model;
    } else {
      ModelSpec spec = cfg.model;
      spec.kind = cfg.classifier;
      if (!cfg.grid.empty()) spec = grid_search(features, cfg.grid, cfg.inner_folds, derive_seed(final_seed, {9})).best_spec();
      result.final_model = train_model(spec, features, final_seed);
    }
  }
  return result;
}

std::vector<std::pair<std::string, FeatureSelection>> ablation_plan() {
  std::vector<std::pair<std::string, FeatureSelection>> plan;
  plan.emplace_back("all", FeatureSelection::all());
  for (std::size_t g = 0; g < kFeatureGroupCount; ++g) {
    const auto group = static_cast<FeatureGroup>(g);
    plan.emplace_back("only " + std::string(group_name(group)), FeatureSelection::group(group));
  }
  for (std::size_t g = 0; g < kFeatureGroupCount; ++g) {
    const auto group = static_cast<FeatureGroup>(g);
    plan.emplace_back("without " + std::string(group_name(group)), FeatureSelection::without({group}));
  }
  for (int f = 1; f <= static_cast<int>(kFeatureFamilyCount); ++f)
    plan.emplace_back("feature " + std::to_string(f), FeatureSelection::family(f));
  return plan;
}

AblationResult ablation_study(const ExperimentConfig& base, const Corpus& corpus, const ResourceSet& resources,
                              const FeatureCache* cache) {
  if (base.classifier == "neural") throw Error(base.name + ": ablation needs a feature-based classifier");
  std::optional<FeatureCache> local;
  if (!cache) {
    FeatureExtractor extractor(resources);
    local = build_feature_cache(corpus, extractor);
    cache = &*local;
  }
  AblationResult out;
  out.base = base.name;
  for (const auto& [label, sel] : ablation_plan()) {
    ExperimentConfig cfg = base;
    cfg.name = base.name + "/" + label;
    cfg.selection = sel;
    cfg.final_model = false;
    out.rows.push_back({label, sel, run_experiment(cfg, corpus, resources, cache).report});
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const AblationRow& a, const AblationRow& b) { return a.report.accuracy > b.report.accuracy; });
  return out;
}

// --- artifacts -----------------------------------------------------------------

namespace {

json metrics_json(const Metrics& m) {
  json pc = json::array();
  for (const auto& c : m.per_class)
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  return {{"accuracy", m.accuracy}, {"micro_f1", m.micro_f1}, {"macro_f1", m.macro_f1},
          {"per_class", pc}, {"confusion", m.confusion}};
}

Metrics metrics_from(const json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy");
  m.micro_f1 = j.at("micro_f1");
  m.macro_f1 = j.at("macro_f1");
  for (const auto& c : j.at("per_class"))
    m.per_class.push_back({c.at("precision"), c.at("recall"), c.at("f1"), c.at("support")});
  m.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  return m;
}

json report_json(const MetricsReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"metrics", metrics_json(f.metrics)}, {"train_size", f.train_size}, {"test_size", f.test_size},
                     {"model_seed", f.model_seed}, {"chosen", f.chosen}, {"loss_curve", f.loss_curve},
                     {"aborted", f.aborted}});
  return {{"format", "tpc-metrics"}, {"version", 1},
          {"name", r.name}, {"task", task_name(r.task)}, {"classifier", r.classifier},
          {"selection", r.selection}, {"classes", r.classes}, {"census", r.census},
          {"seed", r.seed}, {"sample_seed", r.sample_seed}, {"fold_seed", r.fold_seed},
          {"folds", folds}, {"accuracy", r.accuracy}, {"micro_f1", r.micro_f1}, {"macro_f1", r.macro_f1},
          {"per_class_f1", r.per_class_f1}, {"confusion", r.confusion}, {"notes", r.notes}};
}

MetricsReport report_from(const json& j) {
  if (j.value("format", "") != "tpc-metrics") throw Error("not a metrics report");
  MetricsReport r;
  r.name = j.at("name");
  r.task = parse_task(j.at("task"));
  r.classifier = j.at("classifier");
  r.selection = j.at("selection");
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.census = j.at("census").get<std::vector<std::size_t>>();
  r.seed = j.at("seed");
  r.sample_seed = j.at("sample_seed");
  r.fold_seed = j.at("fold_seed");
  for (const auto& f : j.at("folds")) {
    FoldRecord fr;
    fr.metrics = metrics_from(f.at("metrics"));
    fr.train_size = f.at("train_size");
    fr.test_size = f.at("test_size");
    fr.model_seed = f.at("model_seed");
    fr.chosen = f.at("chosen");
    fr.loss_curve = f.at("loss_curve").get<std::vector<double>>();
    fr.aborted = f.at("aborted");
    r.folds.push_back(std::move(fr));
  }
  r.accuracy = j.at("accuracy");
  r.micro_f1 = j.at("micro_f1");
  r.macro_f1 = j.at("macro_f1");
  r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

template <typename F>
auto parse_artifact(const std::string& text, const char* what, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(std::string(what) + ": malformed: " + e.what());
  }
}

}  // namespace

std::string metrics_report_to_json(const MetricsReport& report) { return report_json(report).dump(); }

MetricsReport metrics_report_from_json(const std::string& text) {
  return parse_artifact(text, "metrics report", [](const json& j) { return report_from(j); });
}

std::string ablation_to_json(const AblationResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"label", r.label}, {"selection", r.selection.describe()}, {"report", report_json(r.report)}});
  return json{{"format", "tpc-ablation"}, {"version", 1}, {"base", result.base}, {"rows", rows}}.dump();
}

AblationResult ablation_from_json(const std::string& text) {
  return parse_artifact(text, "ablation result", [](const json& j) {
    if (j.value("format", "") != "tpc-ablation") throw Error("not an ablation result");
    AblationResult a;
    a.base = j.at("base");
    for (const auto& r : j.at("rows")) {
      const std::string sel = r.at("selection");
      AblationRow row;
      row.label = r.at("label");
      row.selection = sel == "none" ? FeatureSelection::none() : parse_selection(text::split(sel, '+'));
      row.report = report_from(r.at("report"));
      a.rows.push_back(std::move(row));
    }
    return a;
  });
}

// --- reports -------------------------------------------------------------------

namespace {

std::string pct(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << v * 100.0;
  return o.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// Left-aligned plain-text table.
std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < w.size(); ++c) w[c] = std::max(w[c], r[c].size());
  std::ostringstream o;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < w.size(); ++c) {
      const std::string cell = c < r.size() ? r[c] : "";
      o << cell;
      if (c + 1 < w.size()) o << std::string(w[c] - cell.size() + 2, ' ');
    }
    o << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (std::size_t c = 0; c < w.size(); ++c) rule.push_back(std::string(w[c], '-'));
  line(rule);
  for (const auto& r : rows) line(r);
  return o.str();
}

void tsv_section(std::ostringstream& o, const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  o << "# " << name << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) o << (i ? "\t" : "") << header[i];
  o << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "\t" : "") << r[i];
    o << '\n';
  }
  o << '\n';
}

}  // namespace

ReportDocument render_report(const std::vector<MetricsReport>& reports, const std::vector<AblationResult>& ablations,
                             const ReportContext& context) {
  std::ostringstream tsv, text;
  text << "Translation-process classification report\n";
  if (!context.config_hash.empty()) {
    text << "config hash: " << context.config_hash << '\n';
    tsv << "# config_hash\t" << context.config_hash << "\n\n";
  }
  if (!context.checksums.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [path, sum] : context.checksums) rows.push_back({path, sum});
    text << "\nResources\n" << table({"file", "checksum"}, rows);
    tsv_section(tsv, "resources", {"file", "checksum"}, rows);
  }

  std::vector<std::vector<std::string>> config_rows, seed_rows;
  for (const auto& r : reports) {
    std::size_t n = std::accumulate(r.census.begin(), r.census.end(), std::size_t{0});
    config_rows.push_back({r.name, task_name(r.task), r.classifier, r.selection, std::to_string(n), pct(r.accuracy),
                           fixed(r.micro_f1, 2), fixed(r.macro_f1, 2)});
    seed_rows.push_back({r.name, std::to_string(r.seed), std::to_string(r.sample_seed), std::to_string(r.fold_seed)});
  }
  if (!config_rows.empty()) {
    const std::vector<std::string> h{"experiment", "task", "classifier", "features", "instances",
                                     "accuracy(%)", "micro-F1", "macro-F1"};
    text << "\nClassification results under different configurations\n" << table(h, config_rows);
    tsv_section(tsv, "configurations", h, config_rows);
    const std::vector<std::string> hs{"experiment", "seed", "sample_seed", "fold_seed"};
    text << "\nSeeds\n" << table(hs, seed_rows);
    tsv_section(tsv, "seeds", hs, seed_rows);
  }

  for (const auto& r : reports) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < r.classes.size(); ++c)
      rows.push_back({r.classes[c], std::to_string(r.census[c]), fixed(r.per_class_f1[c], 2)});
    if (rows.empty()) continue;
    const std::vector<std::string> h{"class", "instances", "F1"};
    text << "\nAverage F1-score per class: " << r.name << '\n' << table(h, rows);
    tsv_section(tsv, "per_class_f1\t" + r.name, h, rows);

    std::vector<std::vector<std::string>> conf;
    std::vector<std::string> ch{"gold\\predicted"};
    for (const auto& c : r.classes) ch.push_back(c);
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
      std::vector<std::string> row{r.classes[c]};
      for (std::size_t o = 0; o < r.classes.size(); ++o) row.push_back(std::to_string(r.confusion[c][o]));
      conf.push_back(row);
    }
    text << "\nConfusion matrix (pooled over folds): " << r.name << '\n' << table(ch, conf);
    tsv_section(tsv, "confusion\t" + r.name, ch, conf);

    std::vector<std::vector<std::string>> folds;
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      const auto& fr = r.folds[f];
      folds.push_back({std::to_string(f), std::to_string(fr.train_size), std::to_string(fr.test_size),
                       std::to_string(fr.model_seed), pct(fr.metrics.accuracy), fixed(fr.metrics.macro_f1, 4),
                       fr.chosen.empty() ? "-" : fr.chosen});
    }
    const std::vector<std::string> hf{"fold", "train", "test", "model_seed", "accuracy(%)", "macro-F1", "tuned"};
    text << "\nPer-fold results: " << r.name << '\n' << table(hf, folds);
    tsv_section(tsv, "folds\t" + r.name, hf, folds);
    for (const auto& n : r.notes) text << "note: " << n << '\n';
  }

  for (const auto& a : ablations) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const auto& r = a.rows[i].report;
      rows.push_back({std::to_string(i + 1), a.rows[i].label, a.rows[i].selection.describe(), pct(r.accuracy),
                      fixed(r.micro_f1, 2), fixed(r.macro_f1, 2)});
    }
    if (rows.empty()) continue;
    const std::vector<std::string> h{"rank", "set", "families", "accuracy(%)", "micro-F1", "macro-F1"};
    text << "\nClassification results after feature ablation study: " << a.base << '\n' << table(h, rows);
    tsv_section(tsv, "ablation\t" + a.base, h, rows);
  }

  std::vector<std::vector<std::string>> grouping;
  for (const auto& r : reports)
    if (is_grouping_task(r.task)) {
      std::vector<std::string> row{r.name, task_name(r.task), pct(r.accuracy)};
      for (std::size_t c = 0; c < r.classes.size(); ++c) row.push_back(r.classes[c] + "=" + fixed(r.per_class_f1[c], 2));
      grouping.push_back(row);
    }
  if (!grouping.empty()) {
    const std::vector<std::string> h{"experiment", "task", "accuracy(%)", "F1 class 1", "F1 class 2"};
    text << "\nClassification results after grouping classes\n" << table(h, grouping);
    tsv_section(tsv, "grouping", h, grouping);
  }
  for (const auto& n : context.notes) text << "note: " << n << '\n';
  return {tsv.str(), text.str()};
}

}  // namespace tpc
