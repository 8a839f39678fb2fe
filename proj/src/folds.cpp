#include "tpc/folds.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "tpc/error.hpp"
#include "tpc/random.hpp"

namespace tpc {

std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed) {
  if (k < 2) throw Error("stratified_kfold: k must be at least 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, members] : by_class)
    if (members.size() < static_cast<std::size_t>(k))
      throw Error("stratified_kfold: class " + std::to_string(cls) + " has " +
                  std::to_string(members.size()) + " instances, fewer than k = " + std::to_string(k));

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t cursor = 0;
  for (auto& [cls, members] : by_class) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(cls)}));
    shuffle(std::span<std::size_t>(members), rng);
    for (std::size_t idx : members) {
      folds[cursor % folds.size()].push_back(idx);
      ++cursor;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t test) {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != test) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tpc
