#pragma once

// The eleven feature families computed for a phrase pair in its sentence
// context, grouped into the five ablation groups.

#include <array>
#include <bitset>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tpc/corpus.hpp"
#include "tpc/resources.hpp"

namespace tpc {

enum class FeatureGroup : std::uint8_t {
  PosTagging, Surface, SyntacticAnalysis, ExternalResource, WordAlignment
};
inline constexpr std::size_t kFeatureGroupCount = 5;
inline constexpr std::size_t kFeatureFamilyCount = 11;

std::string_view group_name(FeatureGroup g);
std::optional<FeatureGroup> parse_group(std::string_view name);
// Family numbers are 1-based (1..11).
FeatureGroup family_group(int family);

// Which feature families are extracted. Bit k-1 selects family k.
class FeatureSelection {
 public:
  static FeatureSelection all();
  static FeatureSelection none() { return {}; }
  static FeatureSelection group(FeatureGroup g);
  static FeatureSelection family(int family);
  // Every group except the listed ones.
  static FeatureSelection without(std::initializer_list<FeatureGroup> groups);

  bool has_family(int family) const { return bits_.test(static_cast<std::size_t>(family - 1)); }
  bool has_group(FeatureGroup g) const;
  FeatureSelection operator|(const FeatureSelection& o) const;
  // Families selected here but not in `o`.
  FeatureSelection minus(const FeatureSelection& o) const;
  bool operator==(const FeatureSelection&) const = default;
  bool empty() const { return bits_.none(); }
  std::string describe() const;

 private:
  std::bitset<kFeatureFamilyCount> bits_;
};

FeatureSelection parse_selection(const std::vector<std::string>& groups);

struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<FeatureGroup> groups;
  std::vector<int> families;
  std::size_t size() const { return names.size(); }
  bool operator==(const FeatureSchema&) const = default;
};

struct FeatureVector {
  std::shared_ptr<const FeatureSchema> schema;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  const std::string& name(std::size_t i) const { return schema->names[i]; }
  FeatureGroup group(std::size_t i) const { return schema->groups[i]; }
  // Throws when absent.
  double get(std::string_view name) const;
  bool has(std::string_view name) const;
};

// Collects (name, value) pairs emitted by one or more feature families.
struct FeatureSink {
  std::vector<std::string> names;
  std::vector<double> values;
  int family = 0;
  std::vector<int> families;

  void add(std::string name, double value) {
    names.push_back(std::move(name));
    values.push_back(value);
    families.push_back(family);
  }
  double get(std::string_view name) const;
};

// One side of a phrase pair with lowercased forms and its content view. When
// the segment has no content word, the content view is the whole segment.
struct SegmentView {
  std::string lang;  // "en" or "fr"
  std::vector<std::string> surfaces;
  std::vector<std::string> lemmas;
  std::vector<Upos> tags;
  std::vector<int> positions;  // sentence index of each token
  std::vector<std::size_t> content;  // indices into the vectors above

  static SegmentView make(const SentenceSide& side, Span span, std::string lang,
                          const ManualLists& lists);

  std::size_t size() const { return surfaces.size(); }
  std::string surface_string() const;
  std::vector<std::string> content_surfaces() const;
  std::vector<std::string> content_lemmas() const;
  std::vector<Upos> content_tags() const;
};

enum class CoverMode : std::uint8_t { Minimal, Maximal };

struct FeatureOptions {
  // Which covering constituent the syntactic comparison uses.
  CoverMode constituent_cover = CoverMode::Minimal;
  // Restrict the probability-gap sum to content words.
  bool gap_content_only = false;
};

// Cosine similarity; 0 when either vector is all zero.
double cosine(std::span<const double> a, std::span<const double> b);
// Natural-log entropy of a (possibly unnormalized) distribution, renormalized.
double entropy(std::span<const double> probs);

// Lexical weighting lex(e|f, a): for each e word, the mean of
// w(e|f_j) over its linked f words; unlinked words use w(e|NULL) when
// present, else they are skipped and counted. 0 when no factor contributed.
struct LexicalWeight {
  double value = 0.0;
  std::size_t unaligned = 0;
};
LexicalWeight lexical_weighting(const std::vector<std::string>& e_words,
                                const std::vector<std::string>& f_words,
                                const std::vector<AlignmentLink>& links,
                                const LexicalTable& e_given_f);

// Smallest constituent covering the span (or the highest one with the same
// span for CoverMode::Maximal).
const ConstituencyNode& covering_constituent(const ConstituencyNode& root, Span span, CoverMode mode);

void f1_pos_profile(const SegmentView& src, const SegmentView& tgt, FeatureSink& out);
void f2_pos_pattern(const SegmentView& src, const SegmentView& tgt, const ManualLists& lists,
                    FeatureSink& out);
void f3_surface(const SegmentView& src, const SegmentView& tgt, FeatureSink& out);
void f4_constituency(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                     const ManualLists& lists, CoverMode mode, FeatureSink& out);
void f5_dependency(const PhrasePair& pair, const AnnotatedSentencePair& sent, FeatureSink& out);
void f6_embedding_similarity(const SegmentView& src, const SegmentView& tgt,
                             const EmbeddingTable& emb, FeatureSink& out);
void f7_concept_link(const SegmentView& src, const SegmentView& tgt, const ConceptGraph& graph,
                     const ManualLists& lists, FeatureSink& out);
void f8_derivation_ratio(const SegmentView& src, const SegmentView& tgt, const ConceptGraph& graph,
                         const ManualLists& lists, FeatureSink& out);
void f9_translation_entropy(const SegmentView& src, const SegmentView& tgt,
                            const TranslationProbTable& table, FeatureSink& out);
void f10_lexical_weighting(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                           const SegmentView& src, const SegmentView& tgt,
                           const TranslationProbTable& table, FeatureSink& out);
void f11_probability_gap(const SegmentView& src, const SegmentView& tgt,
                         const TranslationProbTable& table, bool content_only, FeatureSink& out);

// Extracts feature vectors with a fixed schema per selection.
class FeatureExtractor {
 public:
  FeatureExtractor(const ResourceSet& resources, FeatureOptions options = {});

  FeatureVector extract(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                        const FeatureSelection& selection = FeatureSelection::all()) const;
  std::shared_ptr<const FeatureSchema> schema(const FeatureSelection& selection) const;
  const ResourceSet& resources() const { return resources_; }

 private:
  FeatureSink compute(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                      const FeatureSelection& selection) const;

  struct SchemaCache {
    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const FeatureSchema>> schemas;
  };

  const ResourceSet& resources_;
  FeatureOptions options_;
  std::shared_ptr<SchemaCache> cache_;
  std::shared_ptr<const FeatureSchema> full_schema_;
};

FeatureVector assemble(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                       const ResourceSet& resources,
                       const FeatureSelection& selection = FeatureSelection::all(),
                       FeatureOptions options = {});

// Extracts one vector per reference, in reference order, in parallel.
std::vector<FeatureVector> featurize(const Corpus& corpus, const std::vector<PairRef>& refs,
                                     const FeatureExtractor& extractor,
                                     const FeatureSelection& selection);

// Delimited feature-matrix export: header "id<TAB>label<TAB>name[group]...",
// one row per phrase pair with shortest round-trip decimal values.
void write_feature_matrix(std::ostream& out, const Corpus& corpus, const std::vector<PairRef>& refs,
                          const std::vector<FeatureVector>& rows);
std::string pair_id(const Corpus& corpus, const PairRef& ref);
std::string format_real(double v);

}  // namespace tpc
