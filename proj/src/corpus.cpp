#include "tpc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kUposCount> kUposNames = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

constexpr std::array<std::string_view, 37> kDepRelations = {
    "acl",      "advcl",    "advmod", "amod",      "appos",    "aux",      "case",
    "cc",       "ccomp",    "clf",    "compound",  "conj",     "cop",      "csubj",
    "dep",      "det",      "discourse", "dislocated", "expl", "fixed",    "flat",
    "goeswith", "iobj",     "list",   "mark",      "nmod",     "nsubj",    "nummod",
    "obj",      "obl",      "orphan", "parataxis", "punct",    "reparandum", "root",
    "vocative", "xcomp"};

constexpr std::array<std::string_view, 21> kPhraseLabels = {
    "S",    "SBAR", "SQ",   "SINV",   "NP",     "VP",     "PP",
    "ADJP", "ADVP", "CONJP", "PRT",   "INTJP",  "QP",     "WHNP",
    "WHADVP", "WHPP", "WHADJP", "UCP", "PRN",   "FRAG",   "XP"};

constexpr std::array<std::string_view, kRawLabelCount> kRawLabelNames = {
    "Literal", "Equivalence", "Generalization", "Particularization",
    "Modulation", "Transposition", "Mod+Trans"};

constexpr std::array<std::string_view, kProcessLabelCount> kProcessLabelNames = {
    "Literal", "Equivalence", "Generalization", "Particularization",
    "Modulation", "ContainTransposition"};

}  // namespace

std::string_view upos_name(Upos tag) { return kUposNames[static_cast<std::size_t>(tag)]; }

std::optional<Upos> parse_upos(std::string_view name) {
  for (std::size_t i = 0; i < kUposNames.size(); ++i)
    if (kUposNames[i] == name) return static_cast<Upos>(i);
  return std::nullopt;
}

std::size_t dep_relation_count() { return kDepRelations.size(); }

std::string_view dep_relation_name(DepRel rel) { return kDepRelations.at(rel); }

std::optional<DepRel> parse_dep_relation(std::string_view name) {
  const auto colon = name.find(':');
  if (colon != std::string_view::npos) name = name.substr(0, colon);
  for (std::size_t i = 0; i < kDepRelations.size(); ++i)
    if (kDepRelations[i] == name) return static_cast<DepRel>(i);
  return std::nullopt;
}

bool is_constituent_label(std::string_view label) {
  return std::find(kPhraseLabels.begin(), kPhraseLabels.end(), label) != kPhraseLabels.end() ||
         parse_upos(label).has_value();
}

std::string_view raw_label_name(RawLabel label) {
  return kRawLabelNames[static_cast<std::size_t>(label)];
}

std::optional<RawLabel> parse_raw_label(std::string_view name) {
  for (std::size_t i = 0; i < kRawLabelNames.size(); ++i)
    if (kRawLabelNames[i] == name) return static_cast<RawLabel>(i);
  return std::nullopt;
}

std::string_view process_label_name(ProcessLabel label) {
  return kProcessLabelNames[static_cast<std::size_t>(label)];
}

ProcessLabel map_label(RawLabel raw) {
  switch (raw) {
    case RawLabel::Literal: return ProcessLabel::Literal;
    case RawLabel::Equivalence: return ProcessLabel::Equivalence;
    case RawLabel::Generalization: return ProcessLabel::Generalization;
    case RawLabel::Particularization: return ProcessLabel::Particularization;
    case RawLabel::Modulation: return ProcessLabel::Modulation;
    case RawLabel::Transposition:
    case RawLabel::ModTrans: return ProcessLabel::ContainTransposition;
  }
  return ProcessLabel::Literal;
}

ProcessLabel map_label(std::string_view raw) {
  auto parsed = parse_raw_label(raw);
  if (!parsed) throw Error("unknown translation process label '" + std::string(raw) + "'");
  return map_label(*parsed);
}

// ---------------------------------------------------------------------------
// Bundle parsing

namespace {

class RecordReader {
 public:
  RecordReader(const std::string& source, std::size_t record) : source_(source), record_(record) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw FormatError(source_, record_, field, what);
  }

  const json& member(const json& obj, const char* key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing");
    return *it;
  }

  int integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<int>();
  }

  std::string string(const json& v, const std::string& path) const {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  const json& array(const json& v, const std::string& path) const {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
  }

  Span span(const json& v, const std::string& path) const {
    if (!v.is_array() || v.size() != 2) fail(path, "expected [start, end]");
    return Span{integer(v[0], path + "[0]"), integer(v[1], path + "[1]")};
  }

  ConstituencyNode tree(const json& v, const std::string& path) const {
    ConstituencyNode node;
    node.label = string(member(v, "label", path), path + ".label");
    node.span = span(member(v, "span", path), path + ".span");
    auto it = v.find("children");
    if (it != v.end()) {
      array(*it, path + ".children");
      for (std::size_t i = 0; i < it->size(); ++i)
        node.children.push_back(tree((*it)[i], path + ".children[" + std::to_string(i) + "]"));
    }
    return node;
  }

  SentenceSide side(const json& v, const std::string& path) const {
    SentenceSide s;
    const json& tokens = array(member(v, "tokens", path), path + ".tokens");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::string tp = path + ".tokens[" + std::to_string(i) + "]";
      Token t;
      t.surface = string(member(tokens[i], "surface", tp), tp + ".surface");
      t.lemma = string(member(tokens[i], "lemma", tp), tp + ".lemma");
      const std::string tag = string(member(tokens[i], "upos", tp), tp + ".upos");
      auto upos = parse_upos(tag);
      if (!upos) fail(tp + ".upos", "unknown POS tag '" + tag + "'");
      t.upos = *upos;
      s.tokens.push_back(std::move(t));
    }
    const json& deps = array(member(v, "deps", path), path + ".deps");
    for (std::size_t i = 0; i < deps.size(); ++i) {
      const std::string dp = path + ".deps[" + std::to_string(i) + "]";
      DependencyArc arc;
      arc.head = integer(member(deps[i], "head", dp), dp + ".head");
      arc.dependent = integer(member(deps[i], "dependent", dp), dp + ".dependent");
      const std::string rel = string(member(deps[i], "relation", dp), dp + ".relation");
      auto parsed = parse_dep_relation(rel);
      if (!parsed) fail(dp + ".relation", "unknown dependency relation '" + rel + "'");
      arc.relation = *parsed;
      s.deps.push_back(arc);
    }
    s.tree = tree(member(v, "tree", path), path + ".tree");
    return s;
  }

 private:
  const std::string& source_;
  std::size_t record_;
};

void check_tree(const ConstituencyNode& node, int n, const std::string& path) {
  if (!is_constituent_label(node.label))
    throw ValidationError(path + ".label: unknown constituent label '" + node.label + "'");
  if (node.span.start < 0 || node.span.end > n || node.span.size() < 1)
    throw ValidationError(path + ".span: out of range");
  if (node.children.empty()) {
    if (node.span.size() != 1)
      throw ValidationError(path + ": leaf must cover exactly one token");
    return;
  }
  int cursor = node.span.start;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const auto& child = node.children[i];
    const std::string cp = path + ".children[" + std::to_string(i) + "]";
    if (child.span.start != cursor)
      throw ValidationError(cp + ".span: children do not tile the parent span");
    check_tree(child, n, cp);
    cursor = child.span.end;
  }
  if (cursor != node.span.end)
    throw ValidationError(path + ".children: children do not tile the parent span");
}

void check_side(const SentenceSide& side, const std::string& name) {
  const int n = static_cast<int>(side.tokens.size());
  if (n == 0) throw ValidationError(name + ".tokens: empty sentence side");
  for (std::size_t i = 0; i < side.deps.size(); ++i) {
    const auto& arc = side.deps[i];
    const std::string dp = name + ".deps[" + std::to_string(i) + "]";
    if (arc.head < 0 || arc.head >= n || arc.dependent < 0 || arc.dependent >= n)
      throw ValidationError(dp + ": token index out of range");
    if (arc.head == arc.dependent) throw ValidationError(dp + ": head equals dependent");
    if (arc.relation >= dep_relation_count())
      throw ValidationError(dp + ".relation: unknown relation");
  }
  if (side.tree.span != Span{0, n})
    throw ValidationError(name + ".tree.span: root must cover the whole sentence");
  check_tree(side.tree, n, name + ".tree");
}

}  // namespace

void validate_sentence(const AnnotatedSentencePair& s) {
  if (s.id.empty()) throw ValidationError("id: empty sentence id");
  check_side(s.src, "src");
  check_side(s.tgt, "tgt");
  const int ns = static_cast<int>(s.src.tokens.size());
  const int nt = static_cast<int>(s.tgt.tokens.size());
  std::set<AlignmentLink> seen;
  for (std::size_t i = 0; i < s.alignment.size(); ++i) {
    const auto& link = s.alignment[i];
    const std::string ap = "alignment[" + std::to_string(i) + "]";
    if (link.src < 0 || link.src >= ns || link.tgt < 0 || link.tgt >= nt)
      throw ValidationError(ap + ": token index out of range");
    if (!seen.insert(link).second) throw ValidationError(ap + ": duplicate link");
  }
  for (std::size_t i = 0; i < s.phrase_pairs.size(); ++i) {
    const auto& p = s.phrase_pairs[i];
    const std::string pp = "phrase_pairs[" + std::to_string(i) + "]";
    if (p.src.size() < 1 || p.src.start < 0 || p.src.end > ns)
      throw ValidationError(pp + ".src_span: out of range for " + std::to_string(ns) + " tokens");
    if (p.tgt.size() < 1 || p.tgt.start < 0 || p.tgt.end > nt)
      throw ValidationError(pp + ".tgt_span: out of range for " + std::to_string(nt) + " tokens");
  }
}

AnnotatedSentencePair parse_record(const std::string& line, const std::string& source, std::size_t record) {
  RecordReader rd(source, record);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    rd.fail("<record>", std::string("invalid JSON: ") + e.what());
  }
  const json& version = rd.member(j, "format_version", "");
  if (rd.integer(version, "format_version") != kBundleFormatVersion)
    rd.fail("format_version", "unsupported version " + version.dump());

  AnnotatedSentencePair s;
  s.id = rd.string(rd.member(j, "id", ""), "id");
  s.src = rd.side(rd.member(j, "src", ""), "src");
  s.tgt = rd.side(rd.member(j, "tgt", ""), "tgt");
  const json& links = rd.array(rd.member(j, "alignment", ""), "alignment");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string ap = "alignment[" + std::to_string(i) + "]";
    if (!links[i].is_array() || links[i].size() != 2) rd.fail(ap, "expected [src, tgt]");
    s.alignment.push_back({rd.integer(links[i][0], ap), rd.integer(links[i][1], ap)});
  }
  const json& pairs = rd.array(rd.member(j, "phrase_pairs", ""), "phrase_pairs");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string pp = "phrase_pairs[" + std::to_string(i) + "]";
    PhrasePair p;
    p.src = rd.span(rd.member(pairs[i], "src_span", pp), pp + ".src_span");
    p.tgt = rd.span(rd.member(pairs[i], "tgt_span", pp), pp + ".tgt_span");
    const std::string label = rd.string(rd.member(pairs[i], "label", pp), pp + ".label");
    auto raw = parse_raw_label(label);
    if (!raw) rd.fail(pp + ".label", "unknown translation process label '" + label + "'");
    p.raw_label = *raw;
    s.phrase_pairs.push_back(p);
  }
  if (auto it = j.find("meta"); it != j.end()) s.meta = it->dump();

  try {
    validate_sentence(s);
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    const auto colon = msg.find(':');
    rd.fail(msg.substr(0, colon), "sentence '" + s.id + "': " +
                                      (colon == std::string::npos ? msg : msg.substr(colon + 2)));
  }
  return s;
}

Corpus parse_bundle(std::istream& in, const std::string& source) {
  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (text::trim(line).empty()) continue;
    auto s = parse_record(line, source, record);
    if (!ids.insert(s.id).second)
      throw FormatError(source, record, "id", "duplicate sentence id '" + s.id + "'");
    corpus.push_back(std::move(s));
  }
  return corpus;
}

BundleCheck check_bundle(std::istream& in, const std::string& source) {
  BundleCheck out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (text::trim(line).empty()) continue;
    try {
      auto s = parse_record(line, source, record);
      if (!ids.insert(s.id).second)
        throw FormatError(source, record, "id", "duplicate sentence id '" + s.id + "'");
      out.corpus.push_back(std::move(s));
    } catch (const FormatError& e) {
      out.findings.push_back(e);
    }
  }
  return out;
}

Corpus load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open bundle '" + path + "'");
  return parse_bundle(in, path);
}

namespace {

json span_json(const Span& s) { return json::array({s.start, s.end}); }

json tree_json(const ConstituencyNode& node) {
  json j = {{"label", node.label}, {"span", span_json(node.span)}};
  if (!node.children.empty()) {
    json children = json::array();
    for (const auto& c : node.children) children.push_back(tree_json(c));
    j["children"] = std::move(children);
  }
  return j;
}

json side_json(const SentenceSide& side) {
  json tokens = json::array();
  for (const auto& t : side.tokens)
    tokens.push_back({{"surface", t.surface}, {"lemma", t.lemma}, {"upos", upos_name(t.upos)}});
  json deps = json::array();
  for (const auto& a : side.deps)
    deps.push_back({{"head", a.head},
                    {"dependent", a.dependent},
                    {"relation", dep_relation_name(a.relation)}});
  return {{"tokens", std::move(tokens)}, {"deps", std::move(deps)}, {"tree", tree_json(side.tree)}};
}

}  // namespace

std::string serialize_record(const AnnotatedSentencePair& s) {
  json j;
  j["format_version"] = kBundleFormatVersion;
  j["id"] = s.id;
  j["src"] = side_json(s.src);
  j["tgt"] = side_json(s.tgt);
  json links = json::array();
  for (const auto& l : s.alignment) links.push_back(json::array({l.src, l.tgt}));
  j["alignment"] = std::move(links);
  json pairs = json::array();
  for (const auto& p : s.phrase_pairs)
    pairs.push_back({{"src_span", span_json(p.src)},
                     {"tgt_span", span_json(p.tgt)},
                     {"label", raw_label_name(p.raw_label)}});
  j["phrase_pairs"] = std::move(pairs);
  if (!s.meta.empty()) j["meta"] = json::parse(s.meta);
  return j.dump();
}

void write_bundle(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus) out << serialize_record(s) << '\n';
}

void save_bundle(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write bundle '" + path + "'");
  write_bundle(out, corpus);
}

std::vector<PairRef> all_pairs(const Corpus& corpus) {
  std::vector<PairRef> refs;
  for (std::size_t s = 0; s < corpus.size(); ++s)
    for (std::size_t p = 0; p < corpus[s].phrase_pairs.size(); ++p) refs.push_back({s, p});
  return refs;
}

Census class_census(const std::vector<PhrasePair>& pairs) {
  Census c{};
  for (const auto& p : pairs) ++c[static_cast<std::size_t>(p.label())];
  return c;
}

Census class_census(const Corpus& corpus) {
  Census c{};
  for (const auto& s : corpus)
    for (const auto& p : s.phrase_pairs) ++c[static_cast<std::size_t>(p.label())];
  return c;
}

std::array<std::size_t, kRawLabelCount> raw_census(const Corpus& corpus) {
  std::array<std::size_t, kRawLabelCount> c{};
  for (const auto& s : corpus)
    for (const auto& p : s.phrase_pairs) ++c[static_cast<std::size_t>(p.raw_label)];
  return c;
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

NormalizationRules rules_from_json(const json& j, const std::string& path) {
  NormalizationRules r;
  if (auto it = j.find("lowercase"); it != j.end()) r.lowercase = it->get<bool>();
  if (auto it = j.find("clitics"); it != j.end()) {
    for (const auto& [key, value] : it->items()) {
      std::vector<std::string> words;
      if (value.is_string())
        words = text::split_ws(value.get<std::string>());
      else
        words = value.get<std::vector<std::string>>();
      if (words.empty())
        throw FormatError(path, 1, "clitics." + key, "empty expansion");
      r.clitics[text::to_lower(key)] = std::move(words);
    }
  }
  if (auto it = j.find("digits"); it != j.end()) {
    auto words = it->get<std::vector<std::string>>();
    if (words.size() != 10) throw FormatError(path, 1, "digits", "expected 10 words");
    std::copy(words.begin(), words.end(), r.digits.begin());
  }
  return r;
}

std::string replace_digits(std::string_view s, const NormalizationRules& rules) {
  if (!text::has_digit(s)) return std::string(s);
  std::string out;
  for (char ch : s) {
    if (ch >= '0' && ch <= '9') {
      if (!out.empty() && out.back() != ' ') out += ' ';
      out += rules.digits[static_cast<std::size_t>(ch - '0')];
      out += ' ';
    } else {
      out += ch;
    }
  }
  return std::string(text::trim(out));
}

std::string normalize_word(std::string_view s, const NormalizationRules& rules) {
  std::string w = rules.lowercase ? text::to_lower(s) : std::string(s);
  return replace_digits(w, rules);
}

ConstituencyNode remap_tree(const ConstituencyNode& node, const std::vector<int>& first) {
  ConstituencyNode out;
  out.label = node.label;
  out.span = {first[node.span.start], first[node.span.end]};
  for (const auto& c : node.children) out.children.push_back(remap_tree(c, first));
  if (out.children.empty() && out.span.size() > 1) {
    for (int i = out.span.start; i < out.span.end; ++i)
      out.children.push_back({node.label, {i, i + 1}, {}});
  }
  return out;
}

SentenceSide remap_side(const SentenceSide& side, NormalizedTokens norm) {
  SentenceSide out;
  out.tokens = std::move(norm.tokens);
  for (const auto& a : side.deps)
    out.deps.push_back({norm.first[a.head], norm.first[a.dependent], a.relation});
  out.tree = remap_tree(side.tree, norm.first);
  return out;
}

}  // namespace

NormalizationConfig load_normalization(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path, 1, "<file>", e.what());
  }
  NormalizationConfig cfg;
  if (auto it = j.find("src"); it != j.end()) cfg.src = rules_from_json(*it, path);
  if (auto it = j.find("tgt"); it != j.end()) cfg.tgt = rules_from_json(*it, path);
  return cfg;
}

NormalizedTokens normalize_tokens(const std::vector<Token>& tokens, const NormalizationRules& rules) {
  NormalizedTokens out;
  out.first.reserve(tokens.size() + 1);
  for (const auto& t : tokens) {
    out.first.push_back(static_cast<int>(out.tokens.size()));
    const std::string key = text::to_lower(t.surface);
    auto it = rules.clitics.find(key);
    if (it != rules.clitics.end()) {
      const auto& words = it->second;
      for (std::size_t k = 0; k < words.size(); ++k) {
        Token piece;
        piece.surface = normalize_word(words[k], rules);
        piece.lemma = words.size() == 1 ? normalize_word(t.lemma, rules) : piece.surface;
        piece.upos = t.upos;
        out.tokens.push_back(std::move(piece));
      }
    } else {
      out.tokens.push_back({normalize_word(t.surface, rules), normalize_word(t.lemma, rules), t.upos});
    }
  }
  out.first.push_back(static_cast<int>(out.tokens.size()));
  return out;
}

AnnotatedSentencePair normalize_sentence(const AnnotatedSentencePair& s,
                                         const NormalizationConfig& config) {
  NormalizedTokens src = normalize_tokens(s.src.tokens, config.src);
  NormalizedTokens tgt = normalize_tokens(s.tgt.tokens, config.tgt);
  const std::vector<int> sf = src.first;
  const std::vector<int> tf = tgt.first;

  AnnotatedSentencePair out;
  out.id = s.id;
  out.meta = s.meta;
  out.src = remap_side(s.src, std::move(src));
  out.tgt = remap_side(s.tgt, std::move(tgt));
  for (const auto& l : s.alignment)
    for (int i = sf[l.src]; i < sf[l.src + 1]; ++i)
      for (int j = tf[l.tgt]; j < tf[l.tgt + 1]; ++j) out.alignment.push_back({i, j});
  for (const auto& p : s.phrase_pairs)
    out.phrase_pairs.push_back({{sf[p.src.start], sf[p.src.end]}, {tf[p.tgt.start], tf[p.tgt.end]},
                                p.raw_label});
  return out;
}

}  // namespace tpc
