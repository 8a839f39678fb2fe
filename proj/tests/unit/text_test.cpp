#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tpc/error.hpp"
#include "tpc/parallel.hpp"
#include "tpc/random.hpp"
#include "tpc/text.hpp"

namespace tpc {
namespace {

TEST(Utf8, RoundTripsAccentedText) {
  const std::string s = "époque à l'idée";
  EXPECT_EQ(text::encode_utf8(text::decode_utf8(s)), s);
  EXPECT_EQ(text::decode_utf8("é").size(), 1u);
}

TEST(Lowercase, HandlesAsciiAndLatin1) {
  EXPECT_EQ(text::to_lower("Hello"), "hello");
  EXPECT_EQ(text::to_lower("À L'ÉPOQUE"), "à l'époque");
  EXPECT_TRUE(text::has_upper("abC"));
  EXPECT_FALSE(text::has_upper("abc"));
  EXPECT_TRUE(text::has_digit("a4"));
}

TEST(Levenshtein, KnownDistances) {
  EXPECT_EQ(text::levenshtein("", ""), 0u);
  EXPECT_EQ(text::levenshtein("abc", ""), 3u);
  EXPECT_EQ(text::levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(text::levenshtein("same", "same"), 0u);
  // Counted per code point, not per byte.
  EXPECT_EQ(text::levenshtein("é", "e"), 1u);
}

TEST(Levenshtein, CertainKindsExample) {
  // One insertion ("s") and four substitutions (k,i,n,d -> t,y,p,e).
  EXPECT_EQ(text::levenshtein("certain kinds", "certains types"), 5u);
}

TEST(Split, FieldsAndWhitespace) {
  EXPECT_EQ(text::split("a\tb\t", '\t'), (std::vector<std::string>{"a", "b", ""}));
  EXPECT_EQ(text::split_ws("  a  b\tc "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(text::trim("  x y \n"), "x y");
  EXPECT_EQ(text::join({"a", "b"}, "_"), "a_b");
}

TEST(Checksum, StableAndSensitive) {
  EXPECT_EQ(text::fnv1a_hex("abc"), text::fnv1a_hex("abc"));
  EXPECT_NE(text::fnv1a_hex("abc"), text::fnv1a_hex("abd"));
  const auto path = std::filesystem::temp_directory_path() / "tpc_checksum.txt";
  {
    std::ofstream f(path);
    f << "abc";
  }
  EXPECT_EQ(text::file_checksum(path.string()), text::fnv1a_hex("abc"));
  EXPECT_EQ(text::read_file(path.string()), "abc");
  std::filesystem::remove(path);
  EXPECT_THROW(text::read_file(path.string()), Error);
}

TEST(Random, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(1, {3}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(uniform01(a), uniform01(b));
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(uniform_index(r, 7), 7u);
    const double u = uniform(r, -2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
  }
}

TEST(Random, ShuffleIsAPermutation) {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
  Rng r(3);
  shuffle(std::span<int>(v), r);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 7) throw Error("boom"); }, 3), Error);
}

}  // namespace
}  // namespace tpc
