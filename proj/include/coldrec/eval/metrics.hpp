#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>

namespace coldrec::eval {

// 1-based position of ground truth in a ranked list, or nullopt when absent.
using Rank = std::optional<std::size_t>;

inline double hr_at_k(Rank rank, std::size_t k) { return rank && *rank <= k ? 1.0 : 0.0; }

// Single relevant item, so the ideal DCG is 1.
inline double ndcg_at_k(Rank rank, std::size_t k) {
  if (!rank || *rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

template <typename Item>
Rank rank_of(std::span<const Item> ranked, Item target) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i] == target) return i + 1;
  }
  return std::nullopt;
}

}  // namespace coldrec::eval
