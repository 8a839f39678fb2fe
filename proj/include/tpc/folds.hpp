#pragma once

#include <cstdint>
#include <vector>

namespace tpc {

// Stratified k-fold split: returns k disjoint test-index folds covering
// [0, labels.size()). Each class is shuffled with a seeded stream and dealt
// round-robin, continuing where the previous class stopped, so per-class
// counts across folds differ by at most one. Throws Error naming the class
// when a class has fewer than k members.
std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed);

// Complement of fold `test` within [0, n).
std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t test);

}  // namespace tpc
