#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "coldrec/data/interactions.hpp"
#include "coldrec/error.hpp"

namespace coldrec::data {

struct PreprocessOptions {
  // Keep interactions with weight >= min_weight (e.g. 60 s plays, rating 4).
  std::optional<double> min_weight;
  std::optional<std::size_t> user_sample_size;
  std::uint64_t sample_seed = 0;
  bool dedup_consecutive = true;
  // 0 or 1 disables n-core filtering.
  std::size_t n_core = 0;
};

namespace detail {

inline std::vector<Interaction> drop_consecutive_duplicates(const std::vector<Interaction>& rows) {
  std::unordered_map<std::string, std::string> last_item;
  std::vector<Interaction> kept;
  kept.reserve(rows.size());
  for (const auto& x : rows) {
    auto [it, fresh] = last_item.try_emplace(x.user_id, x.item_id);
    if (!fresh) {
      if (it->second == x.item_id) continue;
      it->second = x.item_id;
    }
    kept.push_back(x);
  }
  return kept;
}

// Peels users and items with fewer than n interactions until every survivor
// has at least n. The core is unique, so the peeling order does not matter.
inline std::vector<Interaction> n_core_filter(std::vector<Interaction> rows, std::size_t n) {
  if (n <= 1) return rows;
  while (true) {
    std::unordered_map<std::string, std::size_t> users;
    std::unordered_map<std::string, std::size_t> items;
    for (const auto& x : rows) {
      ++users[x.user_id];
      ++items[x.item_id];
    }
    std::vector<Interaction> kept;
    kept.reserve(rows.size());
    for (auto& x : rows) {
      if (users[x.user_id] >= n && items[x.item_id] >= n) kept.push_back(std::move(x));
    }
    if (kept.size() == rows.size()) return kept;
    rows = std::move(kept);
  }
}

}  // namespace detail

// Weight threshold, user sampling, consecutive-duplicate removal, n-core.
// The last two repeat until neither changes anything, so applying the whole
// pipeline twice gives the same log as applying it once.
inline InteractionLog preprocess(const InteractionLog& log, const PreprocessOptions& opts) {
  std::vector<Interaction> rows = log.interactions();

  if (opts.min_weight) {
    std::vector<Interaction> kept;
    for (auto& x : rows) {
      if (!x.weight) {
        throw DataError("preprocess: weight threshold requested but interaction of user '" +
                        x.user_id + "' has no weight");
      }
      if (*x.weight >= *opts.min_weight) kept.push_back(std::move(x));
    }
    rows = std::move(kept);
    if (rows.empty()) throw DataError("preprocess: weight threshold removed every interaction");
  }

  if (opts.user_sample_size) {
    std::vector<std::string> users;
    std::unordered_set<std::string> seen;
    for (const auto& x : rows) {
      if (seen.insert(x.user_id).second) users.push_back(x.user_id);
    }
    if (users.size() > *opts.user_sample_size) {
      std::mt19937_64 rng(opts.sample_seed);
      std::shuffle(users.begin(), users.end(), rng);
      users.resize(*opts.user_sample_size);
      const std::unordered_set<std::string> chosen(users.begin(), users.end());
      std::erase_if(rows, [&](const Interaction& x) { return !chosen.contains(x.user_id); });
    }
    if (rows.empty()) throw DataError("preprocess: user sampling removed every interaction");
  }

  while (true) {
    const std::size_t before = rows.size();
    if (opts.dedup_consecutive) rows = detail::drop_consecutive_duplicates(rows);
    rows = detail::n_core_filter(std::move(rows), opts.n_core);
    if (rows.empty()) {
      throw DataError("preprocess: n-core filtering (n=" + std::to_string(opts.n_core) +
                      ") removed every interaction");
    }
    if (rows.size() == before) break;
  }
  return InteractionLog(std::move(rows));
}

}  // namespace coldrec::data
