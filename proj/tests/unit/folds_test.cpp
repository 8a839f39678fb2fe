#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "tpc/error.hpp"
#include "tpc/folds.hpp"

namespace tpc {
namespace {

std::vector<int> labels_of(const std::vector<std::size_t>& counts) {
  std::vector<int> y;
  for (std::size_t c = 0; c < counts.size(); ++c) y.insert(y.end(), counts[c], static_cast<int>(c));
  return y;
}

std::size_t count_class(const std::vector<std::size_t>& fold, const std::vector<int>& y, int c) {
  return static_cast<std::size_t>(std::count_if(fold.begin(), fold.end(), [&](std::size_t i) { return y[i] == c; }));
}

TEST(Folds, BalancedTwoClasses) {
  const auto y = labels_of({10, 10});
  const auto folds = stratified_kfold(y, 5, 7);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    EXPECT_EQ(count_class(f, y, 0), 2u);
    EXPECT_EQ(count_class(f, y, 1), 2u);
  }
}

TEST(Folds, UnevenClassSizes) {
  const auto y = labels_of({11});
  const auto folds = stratified_kfold(y, 5, 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : folds) sizes.push_back(f.size());
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2, 2}));
}

TEST(Folds, PartitionAndComplement) {
  const auto y = labels_of({7, 13, 5});
  const auto folds = stratified_kfold(y, 5, 3);
  std::set<std::size_t> seen;
  for (const auto& f : folds)
    for (auto i : f) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), y.size());
  const auto train = training_indices(folds, 2);
  EXPECT_EQ(train.size() + folds[2].size(), y.size());
  for (auto i : train) EXPECT_EQ(std::count(folds[2].begin(), folds[2].end(), i), 0);
}

TEST(Folds, DeterministicPerSeed) {
  const auto y = labels_of({20, 9});
  EXPECT_EQ(stratified_kfold(y, 3, 5), stratified_kfold(y, 3, 5));
  EXPECT_NE(stratified_kfold(y, 3, 5), stratified_kfold(y, 3, 6));
}

TEST(Folds, TooFewMembersIsAnError) {
  const auto y = labels_of({10, 4});
  try {
    stratified_kfold(y, 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
  EXPECT_THROW(stratified_kfold(labels_of({4}), 5, 1), Error);
}

}  // namespace
}  // namespace tpc
