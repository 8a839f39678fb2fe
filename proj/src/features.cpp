#include "tpc/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>

#include "tpc/error.hpp"
#include "tpc/parallel.hpp"
#include "tpc/text.hpp"

namespace tpc {

namespace {

constexpr std::array<std::string_view, kFeatureGroupCount> kGroupNames = {
    "PoS_tagging", "surface", "syntactic_analysis", "external_resource", "word_alignment"};

}  // namespace

std::string_view group_name(FeatureGroup g) { return kGroupNames[static_cast<std::size_t>(g)]; }

std::optional<FeatureGroup> parse_group(std::string_view name) {
  for (std::size_t i = 0; i < kGroupNames.size(); ++i)
    if (kGroupNames[i] == name) return static_cast<FeatureGroup>(i);
  return std::nullopt;
}

FeatureGroup family_group(int family) {
  if (family <= 2) return FeatureGroup::PosTagging;
  if (family == 3) return FeatureGroup::Surface;
  if (family <= 5) return FeatureGroup::SyntacticAnalysis;
  if (family <= 8) return FeatureGroup::ExternalResource;
  return FeatureGroup::WordAlignment;
}

FeatureSelection FeatureSelection::all() {
  FeatureSelection s;
  s.bits_.set();
  return s;
}

FeatureSelection FeatureSelection::group(FeatureGroup g) {
  FeatureSelection s;
  for (int f = 1; f <= static_cast<int>(kFeatureFamilyCount); ++f)
    if (family_group(f) == g) s.bits_.set(static_cast<std::size_t>(f - 1));
  return s;
}

FeatureSelection FeatureSelection::family(int family) {
  if (family < 1 || family > static_cast<int>(kFeatureFamilyCount))
    throw Error("feature family out of range: " + std::to_string(family));
  FeatureSelection s;
  s.bits_.set(static_cast<std::size_t>(family - 1));
  return s;
}

FeatureSelection FeatureSelection::without(std::initializer_list<FeatureGroup> groups) {
  FeatureSelection s = all();
  for (FeatureGroup g : groups) s.bits_ &= ~group(g).bits_;
  return s;
}

bool FeatureSelection::has_group(FeatureGroup g) const { return (bits_ & group(g).bits_).any(); }

FeatureSelection FeatureSelection::operator|(const FeatureSelection& o) const {
  FeatureSelection s;
  s.bits_ = bits_ | o.bits_;
  return s;
}

FeatureSelection FeatureSelection::minus(const FeatureSelection& o) const {
  FeatureSelection s;
  s.bits_ = bits_ & ~o.bits_;
  return s;
}

std::string FeatureSelection::describe() const {
  if (bits_.all()) return "all";
  std::vector<std::string> parts;
  for (std::size_t g = 0; g < kFeatureGroupCount; ++g) {
    const auto grp = static_cast<FeatureGroup>(g);
    const auto gbits = group(grp).bits_;
    if ((bits_ & gbits) == gbits) {
      parts.emplace_back(group_name(grp));
    } else {
      for (int f = 1; f <= static_cast<int>(kFeatureFamilyCount); ++f)
        if (family_group(f) == grp && has_family(f)) parts.push_back("f" + std::to_string(f));
    }
  }
  return parts.empty() ? "none" : text::join(parts, "+");
}

FeatureSelection parse_selection(const std::vector<std::string>& items) {
  FeatureSelection s;
  for (const auto& item : items) {
    if (item == "all") {
      s = s | FeatureSelection::all();
    } else if (auto g = parse_group(item)) {
      s = s | FeatureSelection::group(*g);
    } else if (item.size() > 1 && item[0] == 'f') {
      int fam = 0;
      auto [p, ec] = std::from_chars(item.data() + 1, item.data() + item.size(), fam);
      if (ec != std::errc() || p != item.data() + item.size())
        throw Error("unknown feature selection item '" + item + "'");
      s = s | FeatureSelection::family(fam);
    } else {
      throw Error("unknown feature selection item '" + item + "'");
    }
  }
  return s;
}

double FeatureVector::get(std::string_view n) const {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (schema->names[i] == n) return values[i];
  throw Error("no feature named '" + std::string(n) + "'");
}

bool FeatureVector::has(std::string_view n) const {
  return std::find(schema->names.begin(), schema->names.end(), n) != schema->names.end();
}

double FeatureSink::get(std::string_view n) const {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (names[i] == n) return values[i];
  throw Error("no feature named '" + std::string(n) + "'");
}

// ---------------------------------------------------------------------------
// Segment views

SegmentView SegmentView::make(const SentenceSide& side, Span span, std::string lang,
                              const ManualLists& lists) {
  SegmentView v;
  v.lang = std::move(lang);
  for (int i = span.start; i < span.end; ++i) {
    const Token& t = side.tokens[static_cast<std::size_t>(i)];
    v.surfaces.push_back(text::to_lower(t.surface));
    v.lemmas.push_back(text::to_lower(t.lemma));
    v.tags.push_back(t.upos);
    v.positions.push_back(i);
    if (lists.is_content(t.upos)) v.content.push_back(v.surfaces.size() - 1);
  }
  if (v.content.empty()) {
    v.content.resize(v.surfaces.size());
    std::iota(v.content.begin(), v.content.end(), std::size_t{0});
  }
  return v;
}

std::string SegmentView::surface_string() const { return text::join(surfaces, " "); }

std::vector<std::string> SegmentView::content_surfaces() const {
  std::vector<std::string> out;
  for (std::size_t i : content) out.push_back(surfaces[i]);
  return out;
}

std::vector<std::string> SegmentView::content_lemmas() const {
  std::vector<std::string> out;
  for (std::size_t i : content) out.push_back(lemmas[i]);
  return out;
}

std::vector<Upos> SegmentView::content_tags() const {
  std::vector<Upos> out;
  for (std::size_t i : content) out.push_back(tags[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Numeric helpers

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double entropy(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p <= 0.0) continue;
    const double q = p / total;
    h -= q * std::log(q);
  }
  return std::max(h, 0.0);
}

LexicalWeight lexical_weighting(const std::vector<std::string>& e_words,
                                const std::vector<std::string>& f_words,
                                const std::vector<AlignmentLink>& links,
                                const LexicalTable& e_given_f) {
  LexicalWeight out;
  double product = 1.0;
  bool contributed = false;
  for (std::size_t i = 0; i < e_words.size(); ++i) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& l : links) {
      if (l.src != static_cast<int>(i)) continue;
      sum += e_given_f.lookup(e_words[i], f_words[static_cast<std::size_t>(l.tgt)]).prob;
      ++n;
    }
    if (n > 0) {
      product *= sum / static_cast<double>(n);
      contributed = true;
      continue;
    }
    const ProbLookup null = e_given_f.lookup(e_words[i], kNullWord);
    if (!null.miss) {
      product *= null.prob;
      contributed = true;
    } else {
      ++out.unaligned;
    }
  }
  out.value = contributed ? product : 0.0;
  return out;
}

namespace {

bool cover_path(const ConstituencyNode& node, Span span, std::vector<const ConstituencyNode*>& path) {
  if (node.span.start > span.start || node.span.end < span.end) return false;
  path.push_back(&node);
  for (const auto& c : node.children)
    if (cover_path(c, span, path)) return true;
  return true;
}

}  // namespace

const ConstituencyNode& covering_constituent(const ConstituencyNode& root, Span span, CoverMode mode) {
  std::vector<const ConstituencyNode*> path;
  if (!cover_path(root, span, path)) return root;
  std::size_t k = path.size() - 1;
  if (mode == CoverMode::Maximal)
    while (k > 0 && path[k - 1]->span == path[k]->span) --k;
  return *path[k];
}

// ---------------------------------------------------------------------------
// Families

void f1_pos_profile(const SegmentView& src, const SegmentView& tgt, FeatureSink& out) {
  auto counts = [](const std::vector<Upos>& tags) {
    std::array<double, kUposCount> c{};
    for (Upos t : tags) c[static_cast<std::size_t>(t)] += 1.0;
    return c;
  };
  const auto cs = counts(src.tags);
  const auto ct = counts(tgt.tags);
  for (std::size_t k = 0; k < kUposCount; ++k)
    out.add("f1.src.count." + std::string(upos_name(static_cast<Upos>(k))), cs[k]);
  for (std::size_t k = 0; k < kUposCount; ++k)
    out.add("f1.tgt.count." + std::string(upos_name(static_cast<Upos>(k))), ct[k]);
  out.add("f1.cos_all", cosine(cs, ct));
  out.add("f1.cos_content", cosine(counts(src.content_tags()), counts(tgt.content_tags())));
}

void f2_pos_pattern(const SegmentView& src, const SegmentView& tgt, const ManualLists& lists,
                    FeatureSink& out) {
  bool any = false;
  for (std::size_t k = 0; k < lists.pos_change_patterns.size(); ++k) {
    const auto& p = lists.pos_change_patterns[k];
    const bool fires = p.source == src.tags && p.target == tgt.tags;
    any = any || fires;
    out.add("f2.pattern." + std::to_string(k), fires ? 1.0 : 0.0);
  }
  out.add("f2.none", any ? 0.0 : 1.0);
}

void f3_surface(const SegmentView& src, const SegmentView& tgt, FeatureSink& out) {
  const double le = static_cast<double>(src.size());
  const double lf = static_cast<double>(tgt.size());
  out.add("f3.len_src", le);
  out.add("f3.len_tgt", lf);
  out.add("f3.ratio_src_tgt", le / lf);
  out.add("f3.ratio_tgt_src", lf / le);
  out.add("f3.levenshtein",
          static_cast<double>(text::levenshtein(src.surface_string(), tgt.surface_string())));
}

void f4_constituency(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                     const ManualLists& lists, CoverMode mode, FeatureSink& out) {
  const bool src_word = pair.src.size() == 1;
  const bool tgt_word = pair.tgt.size() == 1;
  const Upos src_tag = sent.src.tokens[static_cast<std::size_t>(pair.src.start)].upos;
  const Upos tgt_tag = sent.tgt.tokens[static_cast<std::size_t>(pair.tgt.start)].upos;
  double word_eq = 0.0, phrase_eq = 0.0, category = 0.0;
  if (src_word && tgt_word) {
    word_eq = src_tag == tgt_tag ? 1.0 : 0.0;
  } else if (!src_word && !tgt_word) {
    const auto& a = covering_constituent(sent.src.tree, pair.src, mode);
    const auto& b = covering_constituent(sent.tgt.tree, pair.tgt, mode);
    phrase_eq = a.label == b.label ? 1.0 : 0.0;
  } else if (src_word) {
    const auto& b = covering_constituent(sent.tgt.tree, pair.tgt, mode);
    category = lists.corresponds(src_tag, b.label) ? 1.0 : 0.0;
  } else {
    const auto& a = covering_constituent(sent.src.tree, pair.src, mode);
    category = lists.corresponds(tgt_tag, a.label) ? 1.0 : 0.0;
  }
  out.add("f4.word_tag_equal", word_eq);
  out.add("f4.phrase_label_equal", phrase_eq);
  out.add("f4.word_phrase_category", category);
}

namespace {

// Context tokens joined by an arc to a span token.
std::set<int> arc_context(const SentenceSide& side, Span span) {
  std::set<int> ctx;
  for (const auto& a : side.deps) {
    if (span.contains(a.head) && !span.contains(a.dependent)) ctx.insert(a.dependent);
    if (span.contains(a.dependent) && !span.contains(a.head)) ctx.insert(a.head);
  }
  return ctx;
}

}  // namespace

void f5_dependency(const PhrasePair& pair, const AnnotatedSentencePair& sent, FeatureSink& out) {
  const std::size_t nrel = dep_relation_count();
  std::vector<double> in_src(nrel), in_tgt(nrel), out_src(nrel), out_tgt(nrel);
  for (const auto& a : sent.src.deps)
    if (pair.src.contains(a.head) && pair.src.contains(a.dependent)) in_src[a.relation] += 1.0;
  for (const auto& a : sent.tgt.deps)
    if (pair.tgt.contains(a.head) && pair.tgt.contains(a.dependent)) in_tgt[a.relation] += 1.0;

  const std::set<int> ctx_src = arc_context(sent.src, pair.src);
  const std::set<int> ctx_tgt = arc_context(sent.tgt, pair.tgt);
  std::set<int> kept_src, kept_tgt;
  for (const auto& l : sent.alignment) {
    if (ctx_src.count(l.src) && ctx_tgt.count(l.tgt)) {
      kept_src.insert(l.src);
      kept_tgt.insert(l.tgt);
    }
  }
  auto count_outside = [](const SentenceSide& side, Span span, const std::set<int>& kept,
                          std::vector<double>& counts) {
    for (const auto& a : side.deps) {
      const bool h_in = span.contains(a.head), d_in = span.contains(a.dependent);
      if ((h_in && kept.count(a.dependent)) || (d_in && kept.count(a.head))) counts[a.relation] += 1.0;
    }
  };
  count_outside(sent.src, pair.src, kept_src, out_src);
  count_outside(sent.tgt, pair.tgt, kept_tgt, out_tgt);

  auto emit = [&](const char* prefix, const std::vector<double>& counts) {
    for (std::size_t r = 0; r < nrel; ++r)
      out.add(std::string(prefix) + std::string(dep_relation_name(static_cast<DepRel>(r))), counts[r]);
  };
  emit("f5.inside.src.", in_src);
  emit("f5.inside.tgt.", in_tgt);
  emit("f5.outside.src.", out_src);
  emit("f5.outside.tgt.", out_tgt);
}

namespace {

// Words join with '_', except after an elided article or pronoun ("l'").
std::string node_key(const std::string& lang, const std::vector<std::string>& words) {
  std::string key = lang + "/";
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && !(words[i - 1].ends_with('\'') || words[i - 1].ends_with("’"))) key += '_';
    key += words[i];
  }
  return key;
}

// Multi-word entry when present, else the mean of content-word vectors.
std::optional<std::vector<double>> segment_vector(const SegmentView& seg,
                                                  const std::vector<std::string>& words,
                                                  const std::vector<std::string>& content_words,
                                                  const EmbeddingTable& emb) {
  if (auto whole = emb.lookup(node_key(seg.lang, words)))
    return std::vector<double>(whole->begin(), whole->end());
  std::vector<double> mean(emb.dim(), 0.0);
  std::size_t hits = 0;
  for (const auto& w : content_words) {
    auto v = emb.lookup(seg.lang + "/" + w);
    if (!v) continue;
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += (*v)[k];
    ++hits;
  }
  if (hits == 0) return std::nullopt;
  for (double& x : mean) x /= static_cast<double>(hits);
  return mean;
}

}  // namespace

void f6_embedding_similarity(const SegmentView& src, const SegmentView& tgt,
                             const EmbeddingTable& emb, FeatureSink& out) {
  const auto sv = segment_vector(src, src.surfaces, src.content_surfaces(), emb);
  const auto tv = segment_vector(tgt, tgt.surfaces, tgt.content_surfaces(), emb);
  const auto sl = segment_vector(src, src.lemmas, src.content_lemmas(), emb);
  const auto tl = segment_vector(tgt, tgt.lemmas, tgt.content_lemmas(), emb);
  out.add("f6.cos_surface", sv && tv ? cosine(*sv, *tv) : 0.0);
  out.add("f6.cos_lemma", sl && tl ? cosine(*sl, *tl) : 0.0);
  out.add("f6.miss.src.surface", sv ? 0.0 : 1.0);
  out.add("f6.miss.tgt.surface", tv ? 0.0 : 1.0);
  out.add("f6.miss.src.lemma", sl ? 0.0 : 1.0);
  out.add("f6.miss.tgt.lemma", tl ? 0.0 : 1.0);
}

namespace {

std::vector<std::string> filtered(const std::vector<std::string>& words, const ManualLists& lists) {
  std::vector<std::string> out;
  for (const auto& w : words)
    if (!lists.filter_list.count(w)) out.push_back(w);
  return out;
}

enum class Linkage { Direct, Indirect, Unlinked };

Linkage concept_linkage(const std::string& en_node, const std::string& fr_node, const ConceptGraph& g) {
  if (g.linked(en_node, fr_node)) return Linkage::Direct;
  for (const auto& x : g.neighbours(en_node)) {
    if (x == fr_node || node_language(x) != "fr") continue;
    if (g.linked(x, fr_node)) return Linkage::Indirect;
  }
  return Linkage::Unlinked;
}

}  // namespace

void f7_concept_link(const SegmentView& src, const SegmentView& tgt, const ConceptGraph& graph,
                     const ManualLists& lists, FeatureSink& out) {
  struct Form {
    const char* name;
    std::vector<std::string> s, t;
  };
  const Form forms[] = {{"original", src.surfaces, tgt.surfaces},
                        {"lemma", src.lemmas, tgt.lemmas},
                        {"lemma_filtered", filtered(src.lemmas, lists), filtered(tgt.lemmas, lists)}};
  for (const auto& f : forms) {
    Linkage l = Linkage::Unlinked;
    if (!f.s.empty() && !f.t.empty()) l = concept_linkage(node_key(src.lang, f.s), node_key(tgt.lang, f.t), graph);
    const std::string prefix = std::string("f7.") + f.name + ".";
    out.add(prefix + "direct", l == Linkage::Direct ? 1.0 : 0.0);
    out.add(prefix + "indirect", l == Linkage::Indirect ? 1.0 : 0.0);
    out.add(prefix + "unlinked", l == Linkage::Unlinked ? 1.0 : 0.0);
  }
}

void f8_derivation_ratio(const SegmentView& src, const SegmentView& tgt, const ConceptGraph& graph,
                         const ManualLists& lists, FeatureSink& out) {
  const auto s = filtered(src.lemmas, lists);
  const auto t = filtered(tgt.lemmas, lists);
  if (s.empty() || t.empty()) {
    out.add("f8.derivation_ratio", 0.0);
    out.add("f8.miss", 1.0);
    return;
  }
  std::vector<std::string> t_nodes;
  std::vector<std::vector<std::string>> t_neigh;
  for (const auto& w : t) {
    t_nodes.push_back(tgt.lang + "/" + w);
    t_neigh.push_back(graph.derivation_neighbours(t_nodes.back()));
  }
  std::size_t linked = 0;
  for (const auto& w : s) {
    const std::string node = src.lang + "/" + w;
    const auto neigh = graph.derivation_neighbours(node);
    bool hit = false;
    for (std::size_t k = 0; k < t_nodes.size() && !hit; ++k) {
      if (graph.derivation_linked(node, t_nodes[k])) {
        hit = true;
        break;
      }
      // Shared derivation neighbour; both lists are sorted.
      std::vector<std::string> common;
      std::set_intersection(neigh.begin(), neigh.end(), t_neigh[k].begin(), t_neigh[k].end(),
                            std::back_inserter(common));
      hit = !common.empty();
    }
    if (hit) ++linked;
  }
  out.add("f8.derivation_ratio", static_cast<double>(linked) / static_cast<double>(s.size()));
  out.add("f8.miss", 0.0);
}

namespace {

struct EntropyStat {
  double mean = 0.0;
  std::size_t misses = 0;
  bool all_miss = true;
};

EntropyStat mean_entropy(const std::vector<std::string>& words, const LexicalTable& table) {
  EntropyStat st;
  double sum = 0.0;
  std::size_t hits = 0;
  std::vector<double> probs;
  for (const auto& w : words) {
    const auto* dist = table.distribution(w);
    if (!dist) {
      ++st.misses;
      continue;
    }
    probs.clear();
    for (const auto& e : *dist) probs.push_back(e.prob);
    sum += entropy(probs);
    ++hits;
  }
  if (hits > 0) {
    st.mean = sum / static_cast<double>(hits);
    st.all_miss = false;
  }
  return st;
}

}  // namespace

void f9_translation_entropy(const SegmentView& src, const SegmentView& tgt,
                            const TranslationProbTable& table, FeatureSink& out) {
  // English words generate French ones through w(f|e) and vice versa.
  const EntropyStat ss = mean_entropy(src.content_surfaces(), table.f_given_e);
  const EntropyStat ts = mean_entropy(tgt.content_surfaces(), table.e_given_f);
  const EntropyStat sl = mean_entropy(src.content_lemmas(), table.f_given_e);
  const EntropyStat tl = mean_entropy(tgt.content_lemmas(), table.e_given_f);
  out.add("f9.entropy.src.surface", ss.mean);
  out.add("f9.entropy.tgt.surface", ts.mean);
  out.add("f9.entropy.src.lemma", sl.mean);
  out.add("f9.entropy.tgt.lemma", tl.mean);
  out.add("f9.miss_count.src.surface", static_cast<double>(ss.misses));
  out.add("f9.miss_count.tgt.surface", static_cast<double>(ts.misses));
  out.add("f9.miss_count.src.lemma", static_cast<double>(sl.misses));
  out.add("f9.miss_count.tgt.lemma", static_cast<double>(tl.misses));
  out.add("f9.all_miss.src.surface", ss.all_miss ? 1.0 : 0.0);
  out.add("f9.all_miss.tgt.surface", ts.all_miss ? 1.0 : 0.0);
  out.add("f9.all_miss.src.lemma", sl.all_miss ? 1.0 : 0.0);
  out.add("f9.all_miss.tgt.lemma", tl.all_miss ? 1.0 : 0.0);
}

void f10_lexical_weighting(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                           const SegmentView& src, const SegmentView& tgt,
                           const TranslationProbTable& table, FeatureSink& out) {
  // Sentence links restricted to the content words of both spans, in local
  // content-view coordinates.
  std::vector<int> src_local(sent.src.tokens.size(), -1), tgt_local(sent.tgt.tokens.size(), -1);
  for (std::size_t k = 0; k < src.content.size(); ++k)
    src_local[static_cast<std::size_t>(src.positions[src.content[k]])] = static_cast<int>(k);
  for (std::size_t k = 0; k < tgt.content.size(); ++k)
    tgt_local[static_cast<std::size_t>(tgt.positions[tgt.content[k]])] = static_cast<int>(k);
  std::vector<AlignmentLink> ef, fe;
  for (const auto& l : sent.alignment) {
    if (!pair.src.contains(l.src) || !pair.tgt.contains(l.tgt)) continue;
    const int i = src_local[static_cast<std::size_t>(l.src)];
    const int j = tgt_local[static_cast<std::size_t>(l.tgt)];
    if (i < 0 || j < 0) continue;
    ef.push_back({i, j});
    fe.push_back({j, i});
  }
  const auto se = src.content_surfaces(), sf = tgt.content_surfaces();
  const auto le = src.content_lemmas(), lf = tgt.content_lemmas();
  const LexicalWeight ef_s = lexical_weighting(se, sf, ef, table.e_given_f);
  const LexicalWeight fe_s = lexical_weighting(sf, se, fe, table.f_given_e);
  const LexicalWeight ef_l = lexical_weighting(le, lf, ef, table.e_given_f);
  const LexicalWeight fe_l = lexical_weighting(lf, le, fe, table.f_given_e);
  out.add("f10.lex_ef.surface", ef_s.value);
  out.add("f10.lex_fe.surface", fe_s.value);
  out.add("f10.lex_ef.lemma", ef_l.value);
  out.add("f10.lex_fe.lemma", fe_l.value);
  out.add("f10.unaligned.ef.surface", static_cast<double>(ef_s.unaligned));
  out.add("f10.unaligned.fe.surface", static_cast<double>(fe_s.unaligned));
  out.add("f10.unaligned.ef.lemma", static_cast<double>(ef_l.unaligned));
  out.add("f10.unaligned.fe.lemma", static_cast<double>(fe_l.unaligned));
}

namespace {

struct GapStat {
  double gap = 0.0;
  double unaligned_source = 0.0;
  double unaligned_target = 0.0;
};

// Words of `source` generate words of `target` through `table` (conditioning
// on the source word).
GapStat probability_gap(const std::vector<std::string>& source, const std::vector<std::string>& target,
                        const LexicalTable& table) {
  GapStat st;
  std::vector<bool> target_reached(target.size(), false);
  std::size_t unaligned = 0;
  for (const auto& s : source) {
    double best_here = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double p = table.lookup(target[k], s).prob;
      if (p > 0.0) target_reached[k] = true;
      best_here = std::max(best_here, p);
    }
    if (best_here > 0.0)
      st.gap += table.max_prob(s) - best_here;
    else
      ++unaligned;
  }
  st.unaligned_source = source.empty() ? 0.0 : static_cast<double>(unaligned) / static_cast<double>(source.size());
  const auto reached = static_cast<std::size_t>(std::count(target_reached.begin(), target_reached.end(), true));
  st.unaligned_target = target.empty() ? 0.0
                                       : static_cast<double>(target.size() - reached) /
                                             static_cast<double>(target.size());
  return st;
}

}  // namespace

void f11_probability_gap(const SegmentView& src, const SegmentView& tgt,
                         const TranslationProbTable& table, bool content_only, FeatureSink& out) {
  const auto s = content_only ? src.content_surfaces() : src.surfaces;
  const auto t = content_only ? tgt.content_surfaces() : tgt.surfaces;
  const GapStat e2f = probability_gap(s, t, table.f_given_e);
  const GapStat f2e = probability_gap(t, s, table.e_given_f);
  out.add("f11.gap.e2f", e2f.gap);
  out.add("f11.unaligned_src.e2f", e2f.unaligned_source);
  out.add("f11.unaligned_tgt.e2f", e2f.unaligned_target);
  out.add("f11.gap.f2e", f2e.gap);
  out.add("f11.unaligned_src.f2e", f2e.unaligned_target);
  out.add("f11.unaligned_tgt.f2e", f2e.unaligned_source);
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

AnnotatedSentencePair probe_sentence() {
  AnnotatedSentencePair s;
  s.id = "probe";
  s.src.tokens = {{"x", "x", Upos::NOUN}};
  s.tgt.tokens = {{"x", "x", Upos::NOUN}};
  s.src.tree = {"NOUN", {0, 1}, {}};
  s.tgt.tree = {"NOUN", {0, 1}, {}};
  s.phrase_pairs = {{{0, 1}, {0, 1}, RawLabel::Literal}};
  return s;
}

std::shared_ptr<const FeatureSchema> schema_from_sink(const FeatureSink& sink) {
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = sink.names;
  schema->families = sink.families;
  for (int f : sink.families) schema->groups.push_back(family_group(f));
  return schema;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ResourceSet& resources, FeatureOptions options)
    : resources_(resources), options_(options), cache_(std::make_shared<SchemaCache>()) {
  const auto probe = probe_sentence();
  full_schema_ = schema_from_sink(compute(probe.phrase_pairs[0], probe, FeatureSelection::all()));
}

FeatureSink FeatureExtractor::compute(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                                      const FeatureSelection& sel) const {
  const ResourceSet& r = resources_;
  const SegmentView src = SegmentView::make(sent.src, pair.src, "en", r.lists);
  const SegmentView tgt = SegmentView::make(sent.tgt, pair.tgt, "fr", r.lists);
  FeatureSink sink;
  auto run = [&](int family, auto&& fn) {
    if (!sel.has_family(family)) return;
    sink.family = family;
    fn();
  };
  run(1, [&] { f1_pos_profile(src, tgt, sink); });
  run(2, [&] { f2_pos_pattern(src, tgt, r.lists, sink); });
  run(3, [&] { f3_surface(src, tgt, sink); });
  run(4, [&] { f4_constituency(pair, sent, r.lists, options_.constituent_cover, sink); });
  run(5, [&] { f5_dependency(pair, sent, sink); });
  run(6, [&] { f6_embedding_similarity(src, tgt, r.embeddings, sink); });
  run(7, [&] { f7_concept_link(src, tgt, r.concepts, r.lists, sink); });
  run(8, [&] { f8_derivation_ratio(src, tgt, r.concepts, r.lists, sink); });
  run(9, [&] { f9_translation_entropy(src, tgt, r.translation, sink); });
  run(10, [&] { f10_lexical_weighting(pair, sent, src, tgt, r.translation, sink); });
  run(11, [&] { f11_probability_gap(src, tgt, r.translation, options_.gap_content_only, sink); });
  return sink;
}

std::shared_ptr<const FeatureSchema> FeatureExtractor::schema(const FeatureSelection& sel) const {
  if (sel == FeatureSelection::all()) return full_schema_;
  const std::string key = sel.describe();
  std::lock_guard lock(cache_->mutex);
  auto& slot = cache_->schemas[key];
  if (slot) return slot;
  auto schema = std::make_shared<FeatureSchema>();
  for (std::size_t i = 0; i < full_schema_->size(); ++i) {
    if (!sel.has_family(full_schema_->families[i])) continue;
    schema->names.push_back(full_schema_->names[i]);
    schema->groups.push_back(full_schema_->groups[i]);
    schema->families.push_back(full_schema_->families[i]);
  }
  slot = schema;
  return slot;
}

FeatureVector FeatureExtractor::extract(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                                        const FeatureSelection& sel) const {
  FeatureSink sink = compute(pair, sent, sel);
  FeatureVector v;
  v.schema = schema(sel);
  if (v.schema->names != sink.names) throw Error("feature schema drift for sentence '" + sent.id + "'");
  v.values = std::move(sink.values);
  return v;
}

FeatureVector assemble(const PhrasePair& pair, const AnnotatedSentencePair& sent,
                       const ResourceSet& resources, const FeatureSelection& selection,
                       FeatureOptions options) {
  return FeatureExtractor(resources, options).extract(pair, sent, selection);
}

std::vector<FeatureVector> featurize(const Corpus& corpus, const std::vector<PairRef>& refs,
                                     const FeatureExtractor& extractor,
                                     const FeatureSelection& selection) {
  std::vector<FeatureVector> rows(refs.size());
  parallel_for(refs.size(), [&](std::size_t i) {
    const auto& sent = corpus[refs[i].sentence];
    rows[i] = extractor.extract(sent.phrase_pairs[refs[i].phrase], sent, selection);
  });
  return rows;
}

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string pair_id(const Corpus& corpus, const PairRef& ref) {
  return corpus[ref.sentence].id + "#" + std::to_string(ref.phrase);
}

void write_feature_matrix(std::ostream& out, const Corpus& corpus, const std::vector<PairRef>& refs,
                          const std::vector<FeatureVector>& rows) {
  out << "id\tlabel";
  if (!rows.empty())
    for (std::size_t i = 0; i < rows[0].size(); ++i)
      out << '\t' << rows[0].name(i) << '[' << group_name(rows[0].group(i)) << ']';
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& pair = corpus[refs[r].sentence].phrase_pairs[refs[r].phrase];
    out << pair_id(corpus, refs[r]) << '\t' << process_label_name(pair.label());
    for (double v : rows[r].values) out << '\t' << format_real(v);
    out << '\n';
  }
}

}  // namespace tpc
