#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "synthetic.hpp"
#include "tpc/error.hpp"
#include "tpc/resources.hpp"

namespace tpc {
namespace {

using testing::fixture_path;

class TempFile {
 public:
  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("tpc_res_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                .string();
    std::ofstream(path_) << content;
  }
  ~TempFile() { std::filesystem::remove(path_); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

template <typename F>
FormatError format_error(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e;
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError("", 0, "", "");
}

TEST(Embeddings, LoadsWord2VecText) {
  TempFile f("2 4\nen/big_enough 1 0 0 0\nfr/grand 0 1 0 0.5\n");
  const EmbeddingTable t = load_embeddings(f.path());
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 4u);
  ASSERT_TRUE(t.lookup("en/big_enough").has_value());
  EXPECT_DOUBLE_EQ((*t.lookup("fr/grand"))[3], 0.5);
  EXPECT_FALSE(t.lookup("en/absent").has_value());
}

TEST(Embeddings, WrongWidthNamesLine) {
  TempFile f("2 4\nen/a 1 0 0 0\nen/b 1 0 0\n");
  const auto e = format_error([&] { load_embeddings(f.path()); });
  EXPECT_EQ(e.record(), 3u);
  EXPECT_EQ(e.field(), "vector");
}

TEST(Embeddings, KeysNormalized) {
  TempFile f("2 2\nEN/Back 1 0\n/c/fr/époque/n 0 1\n");
  const EmbeddingTable t = load_embeddings(f.path());
  EXPECT_TRUE(t.contains("en/back"));
  EXPECT_TRUE(t.contains("fr/époque"));
}

TEST(Embeddings, DuplicatesLastWins) {
  TempFile f("2 1\nen/a 1\nen/a 2\n");
  const EmbeddingTable t = load_embeddings(f.path());
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.duplicates(), 1u);
  EXPECT_DOUBLE_EQ((*t.lookup("en/a"))[0], 2.0);
}

TEST(Translation, DirectLookupAndMiss) {
  TempFile ef("chat\tcat\t0.9\nchat\tpet\t0.1\n");
  TempFile fe("cat\tchat\t1.0\n");
  const TranslationProbTable t = load_translation_table(ef.path(), fe.path());
  const ProbLookup hit = t.e_given_f.lookup("cat", "chat");
  EXPECT_FALSE(hit.miss);
  EXPECT_DOUBLE_EQ(hit.prob, 0.9);
  const ProbLookup miss = t.e_given_f.lookup("dog", "chat");
  EXPECT_TRUE(miss.miss);
  EXPECT_EQ(miss.prob, 0.0);
  EXPECT_DOUBLE_EQ(t.f_given_e.lookup("chat", "cat").prob, 1.0);
  EXPECT_DOUBLE_EQ(t.e_given_f.max_prob("chat"), 0.9);
  EXPECT_EQ(t.e_given_f.distribution("chat")->size(), 2u);
  EXPECT_EQ(t.e_given_f.distribution("chien"), nullptr);
}

TEST(Translation, RejectsBadProbabilities) {
  TempFile high("chat\tcat\t1.3\n");
  EXPECT_EQ(format_error([&] { load_lexical_table(high.path()); }).field(), "probability");
  TempFile mass("chat\tcat\t0.7\nchat\tpet\t0.6\n");
  EXPECT_EQ(format_error([&] { load_lexical_table(mass.path()); }).field(), "probability");
  TempFile cols("chat\tcat\n");
  EXPECT_EQ(format_error([&] { load_lexical_table(cols.path()); }).record(), 1u);
  TempFile dup("a\tb\t0.1\nA\tb\t0.2\n");
  EXPECT_EQ(format_error([&] { load_lexical_table(dup.path()); }).record(), 2u);
}

TEST(Translation, FixtureTablesLoad) {
  const auto t = load_translation_table(fixture_path("lex_e_given_f.tsv"), fixture_path("lex_f_given_e.tsv"));
  EXPECT_DOUBLE_EQ(t.f_given_e.lookup("jeune", "young").prob, 0.9);
  EXPECT_DOUBLE_EQ(t.f_given_e.lookup("l'", std::string(kNullWord)).prob, 0.3);
}

TEST(Concepts, NodeNormalization) {
  EXPECT_EQ(concept_node("/c/en/back_then/n"), "en/back_then");
  EXPECT_EQ(concept_node("/c/fr/Époque"), "fr/époque");
  EXPECT_EQ(concept_node("en/Back_Then"), "en/back_then");
  EXPECT_EQ(node_language("fr/x"), "fr");
}

TEST(Concepts, LoadFilterAndDerivation) {
  TempFile f(
      "/r/Synonym\t/c/en/back_then\t/c/fr/à_l'époque\n"
      "/r/RelatedTo\t/c/en/a\t/c/fr/x\n"
      "/r/RelatedTo\t/c/fr/x\t/c/fr/b\n"
      "/r/DerivedFrom\t/c/en/deceptive\t/c/fr/illusoire\n"
      "/r/DerivedFrom\t/c/fr/illusion\t/c/fr/illusoire\n"
      "/r/Synonym\t/c/en/big\t/c/en/large\n");
  const ConceptGraph g = load_concept_graph(f.path());
  EXPECT_EQ(g.size(), 5u);
  EXPECT_EQ(g.dropped(), 1u);
  EXPECT_TRUE(g.linked("en/back_then", "fr/à_l'époque"));
  EXPECT_TRUE(g.linked("fr/à_l'époque", "en/back_then"));
  EXPECT_TRUE(g.derivation_linked("en/deceptive", "fr/illusoire"));
  EXPECT_FALSE(g.derivation_linked("en/a", "fr/x"));
  EXPECT_EQ(g.derivation_neighbours("fr/illusion"), std::vector<std::string>{"fr/illusoire"});
  EXPECT_EQ(g.neighbours("fr/x"), (std::vector<std::string>{"en/a", "fr/b"}));
}

TEST(Concepts, MalformedRows) {
  TempFile cols("/r/Synonym\t/c/en/a\n");
  EXPECT_EQ(format_error([&] { load_concept_graph(cols.path()); }).field(), "row");
  TempFile lang("/r/Synonym\tword\t/c/fr/x\n");
  EXPECT_EQ(format_error([&] { load_concept_graph(lang.path()); }).field(), "node");
}

TEST(ManualLists, PatternParsing) {
  const PosChangePattern p = parse_pos_pattern("ADV → ADP NOUN ADJ");
  EXPECT_EQ(p.source, std::vector<Upos>{Upos::ADV});
  EXPECT_EQ(p.target, (std::vector<Upos>{Upos::ADP, Upos::NOUN, Upos::ADJ}));
  EXPECT_EQ(parse_pos_pattern(p.text()), p);
  EXPECT_THROW(parse_pos_pattern("ADV →"), Error);
  EXPECT_THROW(parse_pos_pattern("ADV NOUN"), Error);
  EXPECT_THROW(parse_pos_pattern("ADV -> XYZ"), Error);
}

TEST(ManualLists, ShippedFileLoads) {
  const ManualLists m = load_manual_lists(testing::data_path("manual_lists.json"));
  EXPECT_EQ(m.pos_change_patterns.size(), 1u);
  EXPECT_TRUE(m.filter_list.count("be"));
  EXPECT_TRUE(m.corresponds(Upos::VERB, "VP"));
  EXPECT_FALSE(m.corresponds(Upos::ADJ, "VP"));
  EXPECT_EQ(m.content_tags, standard_content_tags());
}

TEST(ManualLists, EmptyFilterListIsValid) {
  TempFile f(R"({"pos_change_patterns": [], "filter_list": [], "content_tags": ["ADJ","ADV","NOUN","PROPN","VERB"], "category_map": {}})");
  const ManualLists m = load_manual_lists(f.path());
  EXPECT_TRUE(m.filter_list.empty());
}

TEST(ManualLists, RejectsBadEntries) {
  TempFile pattern(R"({"pos_change_patterns": ["ADV ->"], "filter_list": [], "content_tags": ["ADJ","ADV","NOUN","PROPN","VERB"], "category_map": {}})");
  EXPECT_EQ(format_error([&] { load_manual_lists(pattern.path()); }).field(), "pos_change_patterns");
  TempFile tags(R"({"pos_change_patterns": [], "filter_list": [], "content_tags": ["NOUN"], "category_map": {}})");
  EXPECT_EQ(format_error([&] { load_manual_lists(tags.path()); }).field(), "content_tags");
  TempFile label(R"({"pos_change_patterns": [], "filter_list": [], "content_tags": ["ADJ","ADV","NOUN","PROPN","VERB"], "category_map": {"VERB": ["VPX"]}})");
  EXPECT_EQ(format_error([&] { load_manual_lists(label.path()); }).field(), "category_map.VERB");
}

}  // namespace
}  // namespace tpc
