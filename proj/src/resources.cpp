#include "tpc/resources.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;

namespace {

std::optional<double> parse_real(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::ifstream open_or_throw(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

std::string normalize_embedding_key(std::string_view raw) {
  if (raw.rfind("/c/", 0) == 0) return concept_node(raw);
  return text::to_lower(raw);
}

}  // namespace

// ---------------------------------------------------------------------------
// EmbeddingTable

bool EmbeddingTable::insert(std::string_view key, std::span<const double> vec) {
  if (vec.size() != dim_) throw Error("embedding dimension mismatch");
  std::string k(key);
  auto it = index_.find(k);
  if (it != index_.end()) {
    std::copy(vec.begin(), vec.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
    return false;
  }
  index_.emplace(k, keys_.size());
  keys_.push_back(std::move(k));
  data_.insert(data_.end(), vec.begin(), vec.end());
  return true;
}

std::optional<std::span<const double>> EmbeddingTable::lookup(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

EmbeddingTable load_embeddings(const std::string& path) {
  auto in = open_or_throw(path, "embedding file");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path, 1, "header", "missing header");
  const auto header = text::split_ws(line);
  std::size_t count = 0, dim = 0;
  if (header.size() != 2 || std::from_chars(header[0].data(), header[0].data() + header[0].size(), count).ec != std::errc() ||
      std::from_chars(header[1].data(), header[1].data() + header[1].size(), dim).ec != std::errc() || dim == 0)
    throw FormatError(path, 1, "header", "expected '<count> <dimension>'");

  EmbeddingTable table(dim);
  std::size_t lineno = 1, duplicates = 0;
  std::vector<double> vec(dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split_ws(line);
    if (fields.size() != dim + 1)
      throw FormatError(path, lineno, "vector",
                        "expected " + std::to_string(dim) + " values, found " +
                            std::to_string(fields.size() - 1));
    for (std::size_t k = 0; k < dim; ++k) {
      auto v = parse_real(fields[k + 1]);
      if (!v) throw FormatError(path, lineno, "vector[" + std::to_string(k) + "]",
                                "unparseable real '" + fields[k + 1] + "'");
      vec[k] = *v;
    }
    const std::string key = normalize_embedding_key(fields[0]);
    if (!table.insert(key, vec)) {
      ++duplicates;
      std::cerr << "warning: " << path << ":" << lineno << ": duplicate key '" << key
                << "', last occurrence wins\n";
    }
  }
  table.set_duplicates(duplicates);
  return table;
}

// ---------------------------------------------------------------------------
// Translation tables

void LexicalTable::add(const std::string& conditioning, const std::string& generated, double prob) {
  pairs_[conditioning + '\t' + generated] = prob;
  dist_[conditioning].push_back({generated, prob});
}

ProbLookup LexicalTable::lookup(std::string_view generated, std::string_view conditioning) const {
  std::string key;
  key.reserve(conditioning.size() + generated.size() + 1);
  key.append(conditioning).push_back('\t');
  key.append(generated);
  auto it = pairs_.find(key);
  if (it == pairs_.end()) return {};
  return {it->second, false};
}

const std::vector<LexicalTable::Entry>* LexicalTable::distribution(std::string_view conditioning) const {
  auto it = dist_.find(std::string(conditioning));
  return it == dist_.end() ? nullptr : &it->second;
}

double LexicalTable::max_prob(std::string_view conditioning) const {
  const auto* d = distribution(conditioning);
  if (!d) return 0.0;
  double best = 0.0;
  for (const auto& e : *d) best = std::max(best, e.prob);
  return best;
}

LexicalTable load_lexical_table(const std::string& path) {
  auto in = open_or_throw(path, "translation table");
  LexicalTable table;
  std::unordered_map<std::string, double> mass;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3)
      throw FormatError(path, lineno, "row", "expected conditioning<TAB>generated<TAB>probability");
    auto p = parse_real(text::trim(fields[2]));
    if (!p) throw FormatError(path, lineno, "probability", "unparseable real '" + fields[2] + "'");
    if (!(*p >= 0.0 && *p <= 1.0))
      throw FormatError(path, lineno, "probability", "value " + fields[2] + " outside [0, 1]");
    const std::string cond = fields[0] == kNullWord ? fields[0] : text::to_lower(fields[0]);
    const std::string gen = fields[1] == kNullWord ? fields[1] : text::to_lower(fields[1]);
    if (!table.lookup(gen, cond).miss)
      throw FormatError(path, lineno, "row", "duplicate pair (" + cond + ", " + gen + ")");
    table.add(cond, gen, *p);
    mass[cond] += *p;
    first_line.emplace(cond, lineno);
  }
  for (const auto& [cond, m] : mass)
    if (m > 1.0 + kProbabilityMassTolerance)
      throw FormatError(path, first_line[cond], "probability",
                        "mass " + std::to_string(m) + " for conditioning word '" + cond + "' exceeds 1");
  return table;
}

TranslationProbTable load_translation_table(const std::string& path_ef, const std::string& path_fe) {
  return {load_lexical_table(path_ef), load_lexical_table(path_fe)};
}

// ---------------------------------------------------------------------------
// Concept graph

std::string concept_node(std::string_view raw) {
  std::string_view s = raw;
  if (s.rfind("/c/", 0) == 0) {
    s.remove_prefix(3);
    // Drop a trailing part-of-speech / sense suffix: /c/en/word/n/...
    const auto lang_end = s.find('/');
    if (lang_end != std::string_view::npos) {
      const auto term_end = s.find('/', lang_end + 1);
      if (term_end != std::string_view::npos) s = s.substr(0, term_end);
    }
  }
  return text::to_lower(s);
}

std::string node_language(std::string_view node) {
  const auto slash = node.find('/');
  return slash == std::string_view::npos ? std::string() : std::string(node.substr(0, slash));
}

ConceptGraph::ConceptGraph(std::set<std::string> derivation_relations)
    : derivation_relations_(std::move(derivation_relations)) {}

std::set<std::string> ConceptGraph::default_derivation_relations() {
  return {"DerivedFrom", "EtymologicallyDerivedFrom"};
}

bool ConceptGraph::add(Assertion a) {
  const std::string la = node_language(a.start);
  const std::string lb = node_language(a.end);
  const bool keep = (la == "fr" && lb == "fr") || (la == "en" && lb == "fr") || (la == "fr" && lb == "en");
  if (!keep) {
    ++dropped_;
    return false;
  }
  if (!seen_.insert(a).second) return false;
  const std::size_t idx = assertions_.size();
  by_node_[a.start].push_back(idx);
  if (a.end != a.start) by_node_[a.end].push_back(idx);
  assertions_.push_back(std::move(a));
  return true;
}

bool ConceptGraph::is_derivation(std::string_view relation) const {
  return derivation_relations_.count(std::string(relation)) > 0;
}

bool ConceptGraph::linked(std::string_view a, std::string_view b) const {
  auto it = by_node_.find(std::string(a));
  if (it == by_node_.end()) return false;
  for (std::size_t idx : it->second) {
    const auto& as = assertions_[idx];
    if ((as.start == a && as.end == b) || (as.start == b && as.end == a)) return true;
  }
  return false;
}

bool ConceptGraph::derivation_linked(std::string_view a, std::string_view b) const {
  auto it = by_node_.find(std::string(a));
  if (it == by_node_.end()) return false;
  for (std::size_t idx : it->second) {
    const auto& as = assertions_[idx];
    if (!is_derivation(as.relation)) continue;
    if ((as.start == a && as.end == b) || (as.start == b && as.end == a)) return true;
  }
  return false;
}

std::vector<std::string> ConceptGraph::neighbours(std::string_view node) const {
  std::vector<std::string> out;
  auto it = by_node_.find(std::string(node));
  if (it == by_node_.end()) return out;
  for (std::size_t idx : it->second) {
    const auto& as = assertions_[idx];
    out.push_back(as.start == node ? as.end : as.start);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> ConceptGraph::derivation_neighbours(std::string_view node) const {
  std::vector<std::string> out;
  auto it = by_node_.find(std::string(node));
  if (it == by_node_.end()) return out;
  for (std::size_t idx : it->second) {
    const auto& as = assertions_[idx];
    if (is_derivation(as.relation)) out.push_back(as.start == node ? as.end : as.start);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ConceptGraph load_concept_graph(const std::string& path, std::set<std::string> derivation_relations) {
  auto in = open_or_throw(path, "concept graph");
  ConceptGraph graph(std::move(derivation_relations));
  std::string line;
  std::size_t lineno = 0, dropped = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw FormatError(path, lineno, "row", "expected relation<TAB>start<TAB>end");
    std::string relation = fields[0];
    if (relation.rfind("/r/", 0) == 0) relation = relation.substr(3);
    Assertion a{relation, concept_node(fields[1]), concept_node(fields[2])};
    if (node_language(a.start).empty() || node_language(a.end).empty())
      throw FormatError(path, lineno, "node", "nodes must be language-prefixed (en/..., fr/...)");
    const std::size_t before = graph.dropped();
    graph.add(std::move(a));
    dropped += graph.dropped() - before;
  }
  if (dropped > 0)
    std::cerr << "info: " << path << ": dropped " << dropped
              << " assertions outside EN-FR / FR-FR\n";
  return graph;
}

// ---------------------------------------------------------------------------
// Manual lists

std::string PosChangePattern::text() const {
  std::string out;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (i) out += ' ';
    out += upos_name(source[i]);
  }
  out += " ->";
  for (Upos t : target) {
    out += ' ';
    out += upos_name(t);
  }
  return out;
}

PosChangePattern parse_pos_pattern(std::string_view pattern) {
  std::string s(pattern);
  std::size_t arrow = s.find("->");
  std::size_t arrow_len = 2;
  if (arrow == std::string::npos) {
    arrow = s.find("→");
    arrow_len = std::string_view("→").size();
  }
  if (arrow == std::string::npos) throw Error("POS pattern '" + s + "' has no arrow");
  auto parse_side = [&](std::string_view side) {
    std::vector<Upos> tags;
    for (const auto& name : text::split_ws(side)) {
      auto tag = parse_upos(name);
      if (!tag) throw Error("POS pattern '" + s + "': unknown tag '" + name + "'");
      tags.push_back(*tag);
    }
    if (tags.empty()) throw Error("POS pattern '" + s + "': empty side");
    return tags;
  };
  PosChangePattern p;
  p.source = parse_side(std::string_view(s).substr(0, arrow));
  p.target = parse_side(std::string_view(s).substr(arrow + arrow_len));
  return p;
}

bool ManualLists::corresponds(Upos word_tag, std::string_view phrase_label) const {
  auto it = category_map.find(word_tag);
  return it != category_map.end() && it->second.count(std::string(phrase_label)) > 0;
}

const std::set<Upos>& standard_content_tags() {
  static const std::set<Upos> tags{Upos::ADJ, Upos::ADV, Upos::NOUN, Upos::PROPN, Upos::VERB};
  return tags;
}

ManualLists default_manual_lists() {
  ManualLists lists;
  lists.content_tags = standard_content_tags();
  lists.pos_change_patterns.push_back(parse_pos_pattern("ADV -> ADP NOUN ADJ"));
  lists.category_map = {{Upos::VERB, {"VP"}},   {Upos::AUX, {"VP"}},    {Upos::NOUN, {"NP"}},
                        {Upos::PROPN, {"NP"}},  {Upos::PRON, {"NP"}},   {Upos::ADJ, {"ADJP"}},
                        {Upos::ADV, {"ADVP"}},  {Upos::ADP, {"PP"}}};
  return lists;
}

ManualLists load_manual_lists(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path, 1, "<file>", e.what());
  }
  ManualLists lists;
  try {
    for (const auto& p : j.at("pos_change_patterns")) {
      try {
        lists.pos_change_patterns.push_back(parse_pos_pattern(p.get<std::string>()));
      } catch (const Error& e) {
        throw FormatError(path, 1, "pos_change_patterns", e.what());
      }
    }
    for (const auto& w : j.at("filter_list")) lists.filter_list.insert(text::to_lower(w.get<std::string>()));
    for (const auto& t : j.at("content_tags")) {
      auto tag = parse_upos(t.get<std::string>());
      if (!tag) throw FormatError(path, 1, "content_tags", "unknown tag " + t.dump());
      lists.content_tags.insert(*tag);
    }
    for (const auto& [word_tag, labels] : j.at("category_map").items()) {
      auto tag = parse_upos(word_tag);
      if (!tag) throw FormatError(path, 1, "category_map", "unknown word tag '" + word_tag + "'");
      for (const auto& l : labels) {
        const std::string label = l.get<std::string>();
        if (!is_constituent_label(label))
          throw FormatError(path, 1, "category_map." + word_tag, "unknown phrase label '" + label + "'");
        lists.category_map[*tag].insert(label);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(path, 1, "<structure>", e.what());
  }
  if (lists.content_tags != standard_content_tags())
    throw FormatError(path, 1, "content_tags", "must be exactly {ADJ, ADV, NOUN, PROPN, VERB}");
  return lists;
}

}  // namespace tpc
