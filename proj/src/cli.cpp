#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tpc/cli.hpp"
#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Errors in inputs (config, bundle, resources, models) map to kExitValidation.
struct InputError : Error {
  using Error::Error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << data;
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

std::string pair_text(const SentenceSide& side, Span span) {
  std::vector<std::string> words;
  for (int i = span.start; i < span.end; ++i) words.push_back(side.tokens[static_cast<std::size_t>(i)].surface);
  return text::join(words, " ");
}

struct Options {
  std::string config;
  std::vector<std::string> experiments;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::vector<std::string> groups;
  std::string model;
  std::string bundle;
};

class Driver {
 public:
  Driver(const Options& o, std::ostream& out, std::ostream& err) : opt_(o), out_(out), err_(err) {}

  int validate();
  int featurize();
  int run(bool ablate);
  int predict();
  int report();

 private:
  void load_config() {
    try {
      cfg_ = load_run_config(opt_.config);
    } catch (const Error& e) {
      throw InputError(e.what());
    }
    if (opt_.seed) {
      cfg_.seed = *opt_.seed;
      for (auto& e : cfg_.experiments) e.seed = *opt_.seed;
    }
    if (!opt_.out.empty()) cfg_.out_dir = opt_.out;
    if (opt_.quiet) cfg_.verbosity = 0;
  }

  void load_inputs() {
    const auto missing = missing_paths(cfg_);
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += "\n  " + m;
      throw InputError("missing input files:" + list);
    }
    try {
      resources_ = load_resource_set(cfg_.resources);
      ResourcePaths raw = cfg_.resources;
      raw.normalization.clear();
      corpus_ = load_corpus(cfg_, raw);
      if (!cfg_.resources.normalization.empty()) normalized_ = load_corpus(cfg_, cfg_.resources);
      resources_.checksums[cfg_.bundle] = text::file_checksum(cfg_.bundle);
    } catch (const Error& e) {
      throw InputError(e.what());
    }
  }

  const FeatureCache& cache() {
    if (!cache_) {
      log("extracting features for " + std::to_string(all_pairs(corpus_).size()) + " phrase pairs");
      extractor_ = std::make_unique<FeatureExtractor>(resources_, cfg_.features);
      cache_ = build_feature_cache(corpus_, *extractor_);
    }
    return *cache_;
  }

  std::vector<const ExperimentConfig*> selected(bool ablate) const {
    std::vector<const ExperimentConfig*> out;
    if (!opt_.experiments.empty()) {
      for (const auto& name : opt_.experiments) {
        try {
          out.push_back(&cfg_.experiment(name));
        } catch (const Error& e) {
          throw InputError(e.what());
        }
      }
      return out;
    }
    for (const auto& e : cfg_.experiments)
      if (!ablate || e.ablation) out.push_back(&e);
    if (out.empty()) throw InputError(ablate ? "no experiment has ablation enabled" : "config has no experiments");
    return out;
  }

  fs::path out_dir() const {
    fs::create_directories(cfg_.out_dir);
    return cfg_.out_dir;
  }

  void log(const std::string& s) const {
    if (cfg_.verbosity > 0) err_ << s << '\n';
  }

  void write_manifest(const std::vector<MetricsReport>& reports) const {
    json m;
    m["config"] = cfg_.path;
    m["config_hash"] = cfg_.hash;
    m["seed"] = cfg_.seed;
    m["checksums"] = resources_.checksums;
    json runs = json::array();
    for (const auto& r : reports) {
      json seeds = json::array();
      for (const auto& f : r.folds) seeds.push_back(f.model_seed);
      runs.push_back({{"name", r.name},
                      {"seed", r.seed},
                      {"sample_seed", r.sample_seed},
                      {"fold_seed", r.fold_seed},
                      {"model_seeds", seeds}});
    }
    m["experiments"] = runs;
    write_text(out_dir() / "manifest.json", m.dump(2) + "\n");
  }

  int render(const fs::path& dir) const;

  Options opt_;
  std::ostream& out_;
  std::ostream& err_;
  RunConfig cfg_;
  ResourceSet resources_;
  Corpus corpus_;
  std::optional<Corpus> normalized_;  // neural pipelines only
  std::unique_ptr<FeatureExtractor> extractor_;
  std::optional<FeatureCache> cache_;
};

int Driver::validate() {
  load_config();
  const auto missing = missing_paths(cfg_);
  if (!missing.empty()) {
    for (const auto& m : missing) err_ << "missing: " << m << '\n';
    return kExitValidation;
  }
  std::ifstream in(cfg_.bundle, std::ios::binary);
  if (!in) throw InputError("cannot open bundle '" + cfg_.bundle + "'");
  const BundleCheck check = check_bundle(in, cfg_.bundle);
  for (const auto& f : check.findings) err_ << f.what() << '\n';
  try {
    resources_ = load_resource_set(cfg_.resources);
    if (!cfg_.resources.normalization.empty()) (void)load_normalization(cfg_.resources.normalization);
  } catch (const Error& e) {
    err_ << e.what() << '\n';
    return kExitValidation;
  }
  if (!check.findings.empty()) {
    err_ << check.findings.size() << " invalid record(s)\n";
    return kExitValidation;
  }
  const Census census = class_census(check.corpus);
  std::size_t total = 0;
  out_ << "sentences\t" << check.corpus.size() << '\n';
  for (std::size_t c = 0; c < kProcessLabelCount; ++c) {
    out_ << process_label_name(static_cast<ProcessLabel>(c)) << '\t' << census[c] << '\n';
    total += census[c];
  }
  out_ << "phrase_pairs\t" << total << '\n';
  out_ << "experiments\t" << cfg_.experiments.size() << '\n';
  return kExitOk;
}

int Driver::featurize() {
  load_config();
  load_inputs();
  FeatureSelection selection = FeatureSelection::all();
  if (!opt_.groups.empty()) {
    try {
      selection = parse_selection(opt_.groups);
    } catch (const Error& e) {
      throw InputError(e.what());
    }
  }
  const FeatureCache& c = cache();
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < c.schema->size(); ++j)
    if (selection.has_family(c.schema->families[j])) cols.push_back(j);
  std::ostringstream o;
  o << "id\tpair\tlabel";
  for (auto j : cols) o << '\t' << c.schema->names[j];
  o << '\n';
  for (const auto& ref : all_pairs(corpus_)) {
    const auto& sent = corpus_[ref.sentence];
    const auto row = c.values.row(c.row_of.at({ref.sentence, ref.phrase}));
    o << sent.id << '\t' << ref.phrase << '\t' << process_label_name(sent.phrase_pairs[ref.phrase].label());
    for (auto j : cols) o << '\t' << num(row[j]);
    o << '\n';
  }
  const fs::path path = out_dir() / "features.tsv";
  write_text(path, o.str());
  log("wrote " + path.string() + " (" + std::to_string(cols.size()) + " features, " + selection.describe() + ")");
  return kExitOk;
}

int Driver::run(bool ablate) {
  load_config();
  const auto experiments = selected(ablate);
  load_inputs();
  const fs::path dir = out_dir();
  std::vector<MetricsReport> reports;
  for (const auto* e : experiments) {
    const FeatureCache* c = e->classifier == "neural" ? nullptr : &cache();
    if (ablate) {
      log("ablation: " + e->name);
      const AblationResult result = ablation_study(*e, corpus_, resources_, c);
      write_text(dir / (e->name + ".ablation.json"), ablation_to_json(result));
      for (const auto& row : result.rows) log("  " + row.label + "\t" + num(row.report.accuracy));
      continue;
    }
    log("experiment: " + e->name + " (" + task_name(e->task) + ", " + e->classifier + ")");
    const Corpus& input = e->classifier == "neural" && normalized_ ? *normalized_ : corpus_;
    ExperimentResult result = run_experiment(*e, input, resources_, c);
    const MetricsReport& r = result.report;
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      log("  fold " + std::to_string(f) + "\taccuracy " + num(r.folds[f].metrics.accuracy));
      if (!r.folds[f].loss_curve.empty()) {
        std::ofstream curve(dir / (e->name + ".fold" + std::to_string(f) + ".loss.tsv"));
        write_loss_curve(curve, r.folds[f].loss_curve);
      }
    }
    log("  mean accuracy " + num(r.accuracy) + "\tmacro-F1 " + num(r.macro_f1));
    write_text(dir / (e->name + ".metrics.json"), metrics_report_to_json(r));
    if (result.final_model) save_model((dir / (e->name + ".model.json")).string(), *result.final_model);
    if (result.final_neural) save_neural((dir / (e->name + ".model.json")).string(), *result.final_neural);
    reports.push_back(r);
  }
  if (!ablate) write_manifest(reports);
  return render(dir);
}

int Driver::render(const fs::path& dir) const {
  std::vector<fs::path> metrics, ablations;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    auto ends = [&](const std::string& s) {
      return name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends(".metrics.json")) metrics.push_back(entry.path());
    if (ends(".ablation.json")) ablations.push_back(entry.path());
  }
  std::sort(metrics.begin(), metrics.end());
  std::sort(ablations.begin(), ablations.end());
  std::vector<MetricsReport> reports;
  std::vector<AblationResult> results;
  try {
    for (const auto& p : metrics) reports.push_back(metrics_report_from_json(text::read_file(p.string())));
    for (const auto& p : ablations) results.push_back(ablation_from_json(text::read_file(p.string())));
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  if (reports.empty() && results.empty()) throw InputError("no run artifacts in '" + dir.string() + "'");
  ReportContext context;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    try {
      const json m = json::parse(text::read_file(manifest.string()));
      context.config_hash = m.value("config_hash", "");
      context.checksums = m.value("checksums", std::map<std::string, std::string>{});
    } catch (const json::exception& e) {
      throw InputError("malformed manifest '" + manifest.string() + "': " + e.what());
    }
  }
  const ReportDocument doc = render_report(reports, results, context);
  write_text(dir / "report.tsv", doc.tsv);
  write_text(dir / "report.txt", doc.text);
  if (cfg_.verbosity > 0) out_ << doc.text;
  return kExitOk;
}

int Driver::report() {
  if (!opt_.config.empty()) load_config();
  if (!opt_.out.empty()) cfg_.out_dir = opt_.out;
  if (opt_.quiet) cfg_.verbosity = 0;
  if (!fs::is_directory(cfg_.out_dir)) throw InputError("no such output directory '" + cfg_.out_dir + "'");
  return render(cfg_.out_dir);
}

int Driver::predict() {
  if (!opt_.config.empty()) {
    load_config();
  } else {
    if (!opt_.out.empty()) cfg_.out_dir = opt_.out;
    if (opt_.quiet) cfg_.verbosity = 0;
  }
  if (!opt_.bundle.empty()) cfg_.bundle = opt_.bundle;
  if (cfg_.bundle.empty()) throw InputError("predict needs --bundle or a config naming one");
  load_inputs();

  std::string model_text;
  json head;
  try {
    model_text = text::read_file(opt_.model);
    head = json::parse(model_text);
  } catch (const std::exception& e) {
    throw InputError("cannot read model '" + opt_.model + "': " + e.what());
  }
  const auto refs = all_pairs(corpus_);
  std::vector<std::string> classes;
  std::vector<Prediction> predictions;
  try {
    if (head.value("format", "") == "tpc-neural") {
      const NeuralModel model = deserialize_neural(model_text);
      classes = model.classes();
      const Corpus& input = normalized_ ? *normalized_ : corpus_;
      std::vector<TextPair> texts;
      for (const auto& r : refs)
        texts.push_back(make_text_pair(input[r.sentence], input[r.sentence].phrase_pairs[r.phrase], model.config()));
      predictions = model.predict(texts);
    } else {
      const auto model = deserialize_model(model_text);
      classes = model->classes();
      if (!refs.empty()) {
        const FeatureCache& c = cache();
        std::map<std::string, std::size_t> col;
        for (std::size_t j = 0; j < c.schema->size(); ++j) col[c.schema->names[j]] = j;
        Matrix x(refs.size(), model->header().size());
        for (std::size_t k = 0; k < model->header().size(); ++k) {
          const auto it = col.find(model->header()[k]);
          if (it == col.end())
            throw Error("model feature '" + model->header()[k] + "' (position " + std::to_string(k) +
                        ") is not produced by the extractor");
          for (std::size_t i = 0; i < refs.size(); ++i)
            x(i, k) = c.values(c.row_of.at({refs[i].sentence, refs[i].phrase}), it->second);
        }
        predictions = model->predict(x);
      }
    }
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  std::ostringstream o;
  o << "id\tpair\tsource\ttarget\tpredicted";
  for (const auto& c : classes) o << "\tp_" << c;
  o << '\n';
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& sent = corpus_[refs[i].sentence];
    const auto& pair = sent.phrase_pairs[refs[i].phrase];
    o << sent.id << '\t' << refs[i].phrase << '\t' << pair_text(sent.src, pair.src) << '\t'
      << pair_text(sent.tgt, pair.tgt) << '\t' << classes[static_cast<std::size_t>(predictions[i].label)];
    for (double p : predictions[i].proba) o << '\t' << num(p);
    o << '\n';
  }
  const fs::path path = out_dir() / "predictions.tsv";
  write_text(path, o.str());
  log("wrote " + path.string() + " (" + std::to_string(refs.size()) + " predictions)");
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translation-process classifier for English-French phrase pairs", "tpc"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "Run configuration (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory (overrides the config)");
    sub->add_flag("--quiet", opt.quiet, "Suppress progress output");
  };
  auto seeded = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override every experiment seed");
    sub->add_option("--experiment", opt.experiments, "Experiment name (repeatable)");
  };

  auto* validate = app.add_subcommand("validate", "Check the config, resources and bundle");
  common(validate, true);
  auto* featurize = app.add_subcommand("featurize", "Write the feature table");
  common(featurize, true);
  featurize->add_option("--groups", opt.groups, "Feature groups or families (all, surface, f3, ...)")->delimiter(',');
  auto* run = app.add_subcommand("run", "Run experiments and write metrics and the report");
  common(run, true);
  seeded(run);
  auto* ablate = app.add_subcommand("ablate", "Run the feature-group ablation");
  common(ablate, true);
  seeded(ablate);
  auto* predict = app.add_subcommand("predict", "Label a bundle with a trained model");
  common(predict, false);
  predict->add_option("--model", opt.model, "Model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--bundle", opt.bundle, "Bundle to label (overrides the config)")->check(CLI::ExistingFile);
  auto* report = app.add_subcommand("report", "Render the report from run artifacts");
  common(report, false);

  std::vector<const char*> argv{"tpc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (run->count("--seed") || ablate->count("--seed")) opt.seed = seed;

  Driver driver(opt, out, err);
  try {
    try {
      if (*validate) return driver.validate();
      if (*featurize) return driver.featurize();
      if (*run) return driver.run(false);
      if (*ablate) return driver.run(true);
      if (*predict) return driver.predict();
      return driver.report();
    } catch (const InputError&) {
      throw;
    } catch (const FormatError& e) {
      throw InputError(e.what());
    } catch (const ValidationError& e) {
      throw InputError(e.what());
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tpc
