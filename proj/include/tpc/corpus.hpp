#pragma once

// Annotated bilingual sentences, labeled phrase pairs and the annotation
// bundle format (JSON Lines, one sentence pair per line).

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tpc/error.hpp"

namespace tpc {

// Universal Dependencies UPOS inventory.
enum class Upos : std::uint8_t {
  ADJ, ADP, ADV, AUX, CCONJ, DET, INTJ, NOUN, NUM, PART, PRON, PROPN, PUNCT, SCONJ, SYM, VERB, X
};
inline constexpr std::size_t kUposCount = 17;

std::string_view upos_name(Upos tag);
std::optional<Upos> parse_upos(std::string_view name);

// Universal dependency relations (UD v2 base labels).
using DepRel = std::uint8_t;
std::size_t dep_relation_count();
std::string_view dep_relation_name(DepRel rel);
// Accepts subtyped labels ("nmod:poss") and maps them to the base relation.
std::optional<DepRel> parse_dep_relation(std::string_view name);

// Constituent labels: the unified phrase inventory plus UPOS tags, which are
// used as pre-terminal labels.
bool is_constituent_label(std::string_view label);

struct Token {
  std::string surface;
  std::string lemma;
  Upos upos = Upos::X;
  bool operator==(const Token&) const = default;
};

// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;
  int size() const { return end - start; }
  bool contains(int i) const { return i >= start && i < end; }
  bool operator==(const Span&) const = default;
};

struct DependencyArc {
  int head = 0;
  int dependent = 0;
  DepRel relation = 0;
  bool operator==(const DependencyArc&) const = default;
};

struct ConstituencyNode {
  std::string label;
  Span span;
  std::vector<ConstituencyNode> children;
  bool operator==(const ConstituencyNode&) const = default;
};

struct AlignmentLink {
  int src = 0;
  int tgt = 0;
  bool operator==(const AlignmentLink&) const = default;
  auto operator<=>(const AlignmentLink&) const = default;
};

// The seven annotated categories.
enum class RawLabel : std::uint8_t {
  Literal, Equivalence, Generalization, Particularization, Modulation, Transposition, ModTrans
};
inline constexpr std::size_t kRawLabelCount = 7;

// The six classification categories: Transposition and Mod+Trans are merged.
enum class ProcessLabel : std::uint8_t {
  Literal, Equivalence, Generalization, Particularization, Modulation, ContainTransposition
};
inline constexpr std::size_t kProcessLabelCount = 6;

std::string_view raw_label_name(RawLabel label);
std::optional<RawLabel> parse_raw_label(std::string_view name);
std::string_view process_label_name(ProcessLabel label);
ProcessLabel map_label(RawLabel raw);
// Throws Error on an unknown category name.
ProcessLabel map_label(std::string_view raw);

struct PhrasePair {
  Span src;
  Span tgt;
  RawLabel raw_label = RawLabel::Literal;
  ProcessLabel label() const { return map_label(raw_label); }
  bool operator==(const PhrasePair&) const = default;
};

struct SentenceSide {
  std::vector<Token> tokens;
  std::vector<DependencyArc> deps;
  ConstituencyNode tree;
  bool operator==(const SentenceSide&) const = default;
};

struct AnnotatedSentencePair {
  std::string id;
  SentenceSide src;
  SentenceSide tgt;
  std::vector<AlignmentLink> alignment;
  std::vector<PhrasePair> phrase_pairs;
  // Free-form metadata (tool versions etc.), kept as compact JSON text.
  std::string meta;
  bool operator==(const AnnotatedSentencePair&) const = default;
};

using Corpus = std::vector<AnnotatedSentencePair>;

// Addresses one phrase pair inside a corpus.
struct PairRef {
  std::size_t sentence = 0;
  std::size_t phrase = 0;
  auto operator<=>(const PairRef&) const = default;
};

inline constexpr int kBundleFormatVersion = 1;

// Throws FormatError (record number + field) on malformed or invalid records
// and on duplicate ids. Blank lines are skipped; order is preserved.
Corpus load_bundle(const std::string& path);
Corpus parse_bundle(std::istream& in, const std::string& source = "<stream>");
// One record (a bundle line); `record` is its 1-based line number.
AnnotatedSentencePair parse_record(const std::string& line, const std::string& source, std::size_t record);

// Parses every record, collecting one finding per bad record instead of
// stopping at the first.
struct BundleCheck {
  Corpus corpus;  // the records that parsed and validated
  std::vector<FormatError> findings;
};
BundleCheck check_bundle(std::istream& in, const std::string& source = "<stream>");

void write_bundle(std::ostream& out, const Corpus& corpus);
void save_bundle(const std::string& path, const Corpus& corpus);
std::string serialize_record(const AnnotatedSentencePair& sentence);

// Checks every structural invariant of one sentence pair; throws
// ValidationError naming the field.
void validate_sentence(const AnnotatedSentencePair& sentence);

std::vector<PairRef> all_pairs(const Corpus& corpus);

using Census = std::array<std::size_t, kProcessLabelCount>;
Census class_census(const std::vector<PhrasePair>& pairs);
Census class_census(const Corpus& corpus);
std::array<std::size_t, kRawLabelCount> raw_census(const Corpus& corpus);

// Text normalization applied before lookups and for the neural pipelines.
struct NormalizationRules {
  // Whole-token clitic expansions, keyed by the lowercased surface.
  std::map<std::string, std::vector<std::string>> clitics;
  // Letter words for the digits 0-9.
  std::array<std::string, 10> digits{"zero", "one", "two", "three", "four",
                                     "five", "six", "seven", "eight", "nine"};
  bool lowercase = true;
};

struct NormalizationConfig {
  NormalizationRules src;
  NormalizationRules tgt;
};

NormalizationConfig load_normalization(const std::string& path);

struct NormalizedTokens {
  std::vector<Token> tokens;
  // first[i] = index of the first output token produced by input token i;
  // first[n] = output size.
  std::vector<int> first;
};

NormalizedTokens normalize_tokens(const std::vector<Token>& tokens, const NormalizationRules& rules);

// Normalizes both sides and remaps arcs, tree spans, alignment links and
// phrase spans. An expanded token inherits the links and span membership of
// its source token.
AnnotatedSentencePair normalize_sentence(const AnnotatedSentencePair& sentence,
                                         const NormalizationConfig& config);

}  // namespace tpc
