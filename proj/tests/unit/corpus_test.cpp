#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "synthetic.hpp"
#include "tpc/corpus.hpp"
#include "tpc/error.hpp"
#include "tpc/text.hpp"

namespace tpc {
namespace {

using testing::fixture_path;

std::string first_line() {
  std::istringstream in(text::read_file(fixture_path("tiny.jsonl")));
  std::string line;
  std::getline(in, line);
  return nlohmann::json::parse(line).dump();
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  if (pos != std::string::npos) s.replace(pos, from.size(), to);
  return s;
}

TEST(Labels, MergeRule) {
  EXPECT_EQ(map_label("Transposition"), ProcessLabel::ContainTransposition);
  EXPECT_EQ(map_label("Mod+Trans"), ProcessLabel::ContainTransposition);
  EXPECT_EQ(map_label("Literal"), ProcessLabel::Literal);
  EXPECT_EQ(map_label(RawLabel::Modulation), ProcessLabel::Modulation);
  EXPECT_FALSE(parse_raw_label("Literally").has_value());
  EXPECT_THROW(map_label("Nonsense"), Error);
}

TEST(Tags, ClosedInventories) {
  EXPECT_EQ(upos_name(*parse_upos("PROPN")), "PROPN");
  EXPECT_FALSE(parse_upos("NN").has_value());
  EXPECT_EQ(dep_relation_count(), 37u);
  EXPECT_EQ(dep_relation_name(*parse_dep_relation("nmod:poss")), "nmod");
  EXPECT_FALSE(parse_dep_relation("bogus").has_value());
  EXPECT_TRUE(is_constituent_label("NP"));
  EXPECT_TRUE(is_constituent_label("NOUN"));
  EXPECT_FALSE(is_constituent_label("NN"));
}

TEST(Bundle, FixtureCounts) {
  const Corpus c = load_bundle(fixture_path("tiny.jsonl"));
  ASSERT_EQ(c.size(), 3u);
  std::size_t pairs = 0;
  for (const auto& s : c) pairs += s.phrase_pairs.size();
  EXPECT_EQ(pairs, 7u);
  EXPECT_EQ(all_pairs(c).size(), 7u);
  EXPECT_EQ(c[0].id, "s1");
  EXPECT_EQ(c[0].src.tokens[0].surface, "Back");
  EXPECT_EQ(c[2].phrase_pairs[0].raw_label, RawLabel::Transposition);
  EXPECT_EQ(c[0].meta, R"({"tagger":"fixture"})");
}

TEST(Bundle, EmptyInput) {
  std::istringstream in("");
  EXPECT_TRUE(parse_bundle(in).empty());
  std::istringstream blank("\n\n");
  EXPECT_TRUE(parse_bundle(blank).empty());
}

TEST(Bundle, SpanPastEndNamesRecordAndField) {
  const std::string bad = replace(first_line(), R"("src_span":[3,6])", R"("src_span":[3,9])");
  std::istringstream in(first_line() + "\n\n" + bad + "\n");
  try {
    parse_bundle(in, "mem");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.record(), 3u);
    EXPECT_EQ(e.field(), "phrase_pairs[1].src_span");
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
  }
}

TEST(Bundle, MalformedRecords) {
  const std::string line = first_line();
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"{not json", "<record>"},
      {replace(line, R"("format_version":1)", R"("format_version":2)"), "format_version"},
      {replace(line, R"("label":"Equivalence")", R"("label":"Metaphor")"), "phrase_pairs[0].label"},
      {replace(line, R"("upos":"ADV")", R"("upos":"RB")"), "src.tokens[0].upos"},
      {replace(line, R"([0,0],[1,2])", R"([0,0],[0,0])"), "alignment[1]"},
      {replace(line, R"("relation":"advmod")", R"("relation":"nope")"), "src.deps[0].relation"},
  };
  for (const auto& [record, field] : cases) {
    std::istringstream in(record);
    try {
      parse_bundle(in, "mem");
      ADD_FAILURE() << "accepted: " << field;
    } catch (const FormatError& e) {
      EXPECT_EQ(e.field(), field) << e.what();
      EXPECT_EQ(e.record(), 1u);
    }
  }
}

TEST(Bundle, DuplicateIds) {
  std::istringstream in(first_line() + "\n" + first_line() + "\n");
  try {
    parse_bundle(in, "mem");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "id");
    EXPECT_EQ(e.record(), 2u);
  }
}

TEST(Bundle, CheckCollectsEveryFinding) {
  const std::string line = first_line();
  const std::string bad_span = replace(replace(line, R"("id":"s1")", R"("id":"s9")"), R"("tgt_span":[6,7])", R"("tgt_span":[6,6])");
  std::istringstream in(line + "\n{}\n" + bad_span + "\n" + line + "\n");
  const BundleCheck check = check_bundle(in, "mem");
  ASSERT_EQ(check.findings.size(), 3u);
  EXPECT_EQ(check.findings[0].record(), 2u);
  EXPECT_EQ(check.findings[1].record(), 3u);
  EXPECT_EQ(check.findings[2].field(), "id");
  EXPECT_EQ(check.corpus.size(), 1u);
}

TEST(Bundle, TreeInvariants) {
  Corpus c = load_bundle(fixture_path("tiny.jsonl"));
  auto s = c[2];
  s.src.tree.children.pop_back();
  EXPECT_THROW(validate_sentence(s), ValidationError);
  s = c[2];
  s.src.deps[0].head = s.src.deps[0].dependent;
  EXPECT_THROW(validate_sentence(s), ValidationError);
  s = c[2];
  s.phrase_pairs[0].tgt = {5, 6};
  EXPECT_THROW(validate_sentence(s), ValidationError);
}

TEST(Bundle, SerializationRoundTripsExactly) {
  const Corpus c = load_bundle(fixture_path("tiny.jsonl"));
  std::ostringstream out;
  write_bundle(out, c);
  std::istringstream in(out.str());
  const Corpus back = parse_bundle(in);
  EXPECT_EQ(back, c);
  std::ostringstream again;
  write_bundle(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Census, CountsAndMerging) {
  EXPECT_EQ(class_census(std::vector<PhrasePair>{}), Census{});
  std::vector<PhrasePair> pairs(3);
  pairs[2].raw_label = RawLabel::Modulation;
  const Census c = class_census(pairs);
  EXPECT_EQ(c[0], 2u);
  EXPECT_EQ(c[static_cast<std::size_t>(ProcessLabel::Modulation)], 1u);

  const Corpus fixture = load_bundle(fixture_path("tiny.jsonl"));
  const Census fc = class_census(fixture);
  EXPECT_EQ(fc, (Census{3, 1, 1, 0, 0, 2}));
  const auto raw = raw_census(fixture);
  EXPECT_EQ(fc[5], raw[5] + raw[6]);
}

TEST(Census, FullCorpusShape) {
  const Corpus c = testing::synthetic_corpus(testing::kReleasedCensus, {.seed = 3, .pairs_per_sentence = 5});
  const Census census = class_census(c);
  EXPECT_EQ(census, (Census{3771, 289, 86, 215, 195, 342}));
  std::size_t total = 0;
  for (auto n : census) total += n;
  EXPECT_EQ(total, 4898u);
  EXPECT_EQ(total - census[0], 1127u);
}

TEST(Normalization, ExpandsCliticsAndDigits) {
  NormalizationRules rules;
  rules.clitics["'re"] = {"are"};
  const auto out = normalize_tokens({{"They", "they", Upos::PRON}, {"'re", "be", Upos::AUX}, {"42", "42", Upos::NUM}}, rules);
  ASSERT_EQ(out.tokens.size(), 3u);
  EXPECT_EQ(out.tokens[0].surface, "they");
  EXPECT_EQ(out.tokens[1].surface, "are");
  EXPECT_EQ(out.tokens[2].surface, "four two");
  EXPECT_EQ(out.first, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Normalization, ExpansionRemapsSpansAndLinks) {
  const Corpus c = load_bundle(fixture_path("tiny.jsonl"));
  NormalizationConfig cfg;
  cfg.tgt.clitics["j'"] = {"je"};
  cfg.tgt.clitics["l'"] = {"le"};
  cfg.src.clitics["was"] = {"had", "been"};  // artificial two-word expansion
  const auto n = normalize_sentence(c[0], cfg);
  validate_sentence(n);
  EXPECT_EQ(n.src.tokens.size(), c[0].src.tokens.size() + 1);
  EXPECT_EQ(n.src.tokens[4].surface, "had");
  EXPECT_EQ(n.src.tokens[5].surface, "been");
  // "I was young" -> "i had been young"
  EXPECT_EQ(n.phrase_pairs[1].src, (Span{3, 7}));
  // "young" moves by one token.
  EXPECT_EQ(n.phrase_pairs[2].src, (Span{6, 7}));
  // The link of "was" is inherited by both pieces.
  int links_to_etais = 0;
  for (const auto& l : n.alignment)
    if (l.tgt == 5) ++links_to_etais;
  EXPECT_EQ(links_to_etais, 2);
  EXPECT_EQ(n.tgt.tokens[1].surface, "le");
}

TEST(Normalization, LoadsShippedRules) {
  const auto cfg = load_normalization(testing::data_path("normalization.json"));
  EXPECT_EQ(cfg.src.clitics.at("'re"), std::vector<std::string>{"are"});
  EXPECT_EQ(cfg.tgt.clitics.at("l'"), std::vector<std::string>{"le"});
  EXPECT_EQ(cfg.src.digits[4], "four");
  EXPECT_EQ(cfg.tgt.digits[4], "quatre");
}

}  // namespace
}  // namespace tpc
