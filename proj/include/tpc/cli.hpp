#pragma once

// Run configuration and the command-line driver.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tpc/evaluation.hpp"
#include "tpc/features.hpp"
#include "tpc/resources.hpp"

namespace tpc {

// Resource files; an empty path means the resource is absent (every lookup
// misses), except manual lists, which fall back to the shipped defaults.
struct ResourcePaths {
  std::string embeddings;
  std::string translation_ef;
  std::string translation_fe;
  std::string concepts;
  std::string manual_lists;
  std::string normalization;
};

struct RunConfig {
  std::string path;  // the config file itself
  std::string hash;  // checksum of its text
  std::string bundle;
  ResourcePaths resources;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int verbosity = 1;
  FeatureOptions features;
  std::vector<ExperimentConfig> experiments;

  const ExperimentConfig& experiment(const std::string& name) const;
};

// Relative paths resolve against the config file's directory. Throws Error
// on unknown keys, bad values or duplicate experiment names.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& base_dir);

// Paths named by the config that do not exist.
std::vector<std::string> missing_paths(const RunConfig& config);

ResourceSet load_resource_set(const ResourcePaths& paths);
// Loads the bundle and applies normalization when `paths` names a rules file.
// The driver normalizes only the text fed to the neural pipelines.
Corpus load_corpus(const RunConfig& config, const ResourcePaths& paths);

// Parameter grid expansion: an array of parameter objects, or an object of
// arrays expanded as a cartesian product in sorted-key order, or "default".
std::vector<ModelSpec> parse_grid(const std::string& json_text, const std::string& classifier, const ModelSpec& base);
std::vector<ModelSpec> default_grid(const std::string& classifier, const ModelSpec& base);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Entry point shared by the executable and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tpc
