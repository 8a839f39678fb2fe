#pragma once

// Immutable lexical resources consumed by feature extraction.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tpc/corpus.hpp"

namespace tpc {

// Key/vector table in word2vec text format. Keys are lowercased at load;
// multi-word keys join their words with '_'.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }

  // Inserts or overwrites; returns false when the key already existed.
  bool insert(std::string_view key, std::span<const double> vec);
  // Empty optional on a miss; never a default vector.
  std::optional<std::span<const double>> lookup(std::string_view key) const;
  bool contains(std::string_view key) const { return index_.count(std::string(key)) > 0; }

  const std::vector<std::string>& keys() const { return keys_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  // Number of duplicate keys overwritten while loading.
  std::size_t duplicates() const { return duplicates_; }
  void set_duplicates(std::size_t n) { duplicates_ = n; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t duplicates_ = 0;
};

EmbeddingTable load_embeddings(const std::string& path);

// Result of a translation probability lookup: a miss carries probability 0.
struct ProbLookup {
  double prob = 0.0;
  bool miss = true;
};

// One direction of a lexical translation table: w(generated | conditioning).
class LexicalTable {
 public:
  struct Entry {
    std::string word;
    double prob;
  };

  void add(const std::string& conditioning, const std::string& generated, double prob);
  ProbLookup lookup(std::string_view generated, std::string_view conditioning) const;
  // Stored distribution for a conditioning word; nullptr when absent.
  const std::vector<Entry>* distribution(std::string_view conditioning) const;
  double max_prob(std::string_view conditioning) const;
  std::size_t conditioning_count() const { return dist_.size(); }
  std::size_t size() const { return pairs_.size(); }

 private:
  std::unordered_map<std::string, std::vector<Entry>> dist_;
  std::unordered_map<std::string, double> pairs_;  // key: conditioning '\t' generated
};

// Both directions: e_given_f holds w(e|f), f_given_e holds w(f|e).
struct TranslationProbTable {
  LexicalTable e_given_f;
  LexicalTable f_given_e;
};

inline constexpr double kProbabilityMassTolerance = 1e-6;
inline constexpr std::string_view kNullWord = "NULL";

// Each file has tab-separated (conditioning, generated, probability) rows.
// path_ef holds w(e|f) (conditioning French word), path_fe holds w(f|e).
TranslationProbTable load_translation_table(const std::string& path_ef, const std::string& path_fe);
LexicalTable load_lexical_table(const std::string& path);

struct Assertion {
  std::string relation;
  std::string start;
  std::string end;
  auto operator<=>(const Assertion&) const = default;
};

// Language-prefixed assertion store ("en/back_then", "fr/à_l'époque").
class ConceptGraph {
 public:
  explicit ConceptGraph(std::set<std::string> derivation_relations = default_derivation_relations());

  static std::set<std::string> default_derivation_relations();

  // Returns false for a duplicate or for a language pair other than EN-FR or
  // FR-FR, which is dropped.
  bool add(Assertion a);

  std::size_t size() const { return assertions_.size(); }
  std::size_t dropped() const { return dropped_; }
  void set_dropped(std::size_t n) { dropped_ = n; }
  const std::vector<Assertion>& assertions() const { return assertions_; }

  bool is_derivation(std::string_view relation) const;
  // Any assertion between a and b, ignoring direction.
  bool linked(std::string_view a, std::string_view b) const;
  bool derivation_linked(std::string_view a, std::string_view b) const;
  // Undirected neighbours of a node (all relations / derivation only).
  std::vector<std::string> neighbours(std::string_view node) const;
  std::vector<std::string> derivation_neighbours(std::string_view node) const;

 private:
  std::set<std::string> derivation_relations_;
  std::vector<Assertion> assertions_;
  std::set<Assertion> seen_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_node_;
  std::size_t dropped_ = 0;
};

// Normalizes "/c/en/back_then/n" and "en/Back_Then" to "en/back_then".
std::string concept_node(std::string_view raw);
std::string node_language(std::string_view node);

ConceptGraph load_concept_graph(const std::string& path,
                                std::set<std::string> derivation_relations =
                                    ConceptGraph::default_derivation_relations());

struct PosChangePattern {
  std::vector<Upos> source;
  std::vector<Upos> target;
  std::string text() const;
  bool operator==(const PosChangePattern&) const = default;
};

PosChangePattern parse_pos_pattern(std::string_view text);

struct ManualLists {
  std::vector<PosChangePattern> pos_change_patterns;
  std::set<std::string> filter_list;
  std::set<Upos> content_tags;
  // Word tag -> phrase labels it corresponds to (VERB -> VP, ...).
  std::map<Upos, std::set<std::string>> category_map;

  bool is_content(Upos tag) const { return content_tags.count(tag) > 0; }
  bool corresponds(Upos word_tag, std::string_view phrase_label) const;
};

const std::set<Upos>& standard_content_tags();
ManualLists load_manual_lists(const std::string& path);
ManualLists default_manual_lists();

struct ResourceSet {
  EmbeddingTable embeddings;
  TranslationProbTable translation;
  ConceptGraph concepts;
  ManualLists lists;
  // path -> checksum of every file the set was loaded from.
  std::map<std::string, std::string> checksums;
};

}  // namespace tpc
