#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "coldrec/data/interactions.hpp"
#include "coldrec/error.hpp"

namespace coldrec::data {

struct SplitCase {
  UserIndex user = 0;
  std::vector<ItemIndex> input;
  ItemIndex ground_truth = 0;

  bool operator==(const SplitCase&) const = default;
};

struct SplitOptions {
  double train_fraction = 0.9;
  double validation_user_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SplitDataset {
  std::vector<std::string> item_ids;
  std::vector<std::string> user_ids;
  // Indexed by dense user index; empty for users with no training history.
  std::vector<std::vector<ItemIndex>> train_sequences;
  std::vector<SplitCase> validation_cases;
  std::vector<SplitCase> test_cases;
  std::vector<ItemIndex> warm_items;  // sorted
  std::vector<ItemIndex> cold_items;  // sorted
  // Occurrences of each item in train_sequences.
  std::vector<std::size_t> train_frequency;
  std::int64_t boundary_timestamp = 0;
  // Cut rank: the first `train_interactions` log entries are pre-boundary.
  std::size_t train_interactions = 0;

  std::size_t num_items() const { return item_ids.size(); }
  bool is_warm(ItemIndex i) const { return train_frequency.at(static_cast<std::size_t>(i)) > 0; }
  bool is_cold(ItemIndex i) const {
    return std::binary_search(cold_items.begin(), cold_items.end(), i);
  }

  bool operator==(const SplitDataset&) const = default;
};

// Global temporal split. The first ceil(train_fraction * N) interactions in
// (timestamp, file order) are the training period; boundary_timestamp is the
// timestamp of the first test-period interaction. Test cases: every user with
// a test-period interaction, last interaction as ground truth and everything
// before it as input. Validation: a seeded sample of users with at least two
// training interactions, whose last training interaction is held out.
inline SplitDataset temporal_split(const InteractionLog& log, const SplitOptions& opts) {
  if (!(opts.train_fraction > 0.0 && opts.train_fraction < 1.0)) {
    throw ValidationError("temporal_split: train_fraction must lie in (0, 1)");
  }
  if (!(opts.validation_user_fraction > 0.0 && opts.validation_user_fraction < 1.0)) {
    throw ValidationError("temporal_split: validation_user_fraction must lie in (0, 1)");
  }
  const std::size_t n = log.size();
  const auto cut = static_cast<std::size_t>(
      std::ceil(opts.train_fraction * static_cast<double>(n) - 1e-9));
  if (cut >= n) throw DataError("temporal_split: no interactions after the temporal boundary");
  if (cut == 0) throw DataError("temporal_split: no interactions before the temporal boundary");

  SplitDataset split;
  split.item_ids = log.item_ids();
  split.user_ids = log.user_ids();
  split.train_interactions = cut;
  split.boundary_timestamp = log.interactions()[cut].timestamp;

  const auto rows = log.user_rows();
  std::vector<std::vector<ItemIndex>> pre(rows.size());
  for (std::size_t u = 0; u < rows.size(); ++u) {
    for (std::size_t r : rows[u]) {
      if (r < cut) pre[u].push_back(log.item(log.interactions()[r].item_id));
    }
  }

  for (std::size_t u = 0; u < rows.size(); ++u) {
    const auto& ur = rows[u];
    if (ur.empty() || ur.back() < cut) continue;
    if (ur.size() < 2) continue;  // nothing to condition on
    SplitCase c;
    c.user = static_cast<UserIndex>(u);
    for (std::size_t j = 0; j + 1 < ur.size(); ++j) {
      c.input.push_back(log.item(log.interactions()[ur[j]].item_id));
    }
    c.ground_truth = log.item(log.interactions()[ur.back()].item_id);
    split.test_cases.push_back(std::move(c));
  }

  std::vector<UserIndex> eligible;
  for (std::size_t u = 0; u < pre.size(); ++u) {
    if (pre[u].size() >= 2) eligible.push_back(static_cast<UserIndex>(u));
  }
  std::vector<UserIndex> chosen;
  if (!eligible.empty()) {
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(opts.validation_user_fraction *
                                                 static_cast<double>(eligible.size()))));
    std::mt19937_64 rng(opts.seed);
    std::vector<UserIndex> pool = eligible;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(want, pool.size()));
    std::sort(pool.begin(), pool.end());
    chosen = std::move(pool);
  }
  for (UserIndex u : chosen) {
    auto& seq = pre[static_cast<std::size_t>(u)];
    SplitCase c;
    c.user = u;
    c.ground_truth = seq.back();
    seq.pop_back();
    c.input = seq;
    split.validation_cases.push_back(std::move(c));
  }
  split.train_sequences = std::move(pre);

  split.train_frequency.assign(log.num_items(), 0);
  for (const auto& seq : split.train_sequences) {
    for (ItemIndex i : seq) ++split.train_frequency[static_cast<std::size_t>(i)];
  }
  std::vector<std::uint8_t> seen_eval(log.num_items(), 0);
  auto mark = [&](const std::vector<SplitCase>& cases) {
    for (const auto& c : cases) {
      seen_eval[static_cast<std::size_t>(c.ground_truth)] = 1;
      for (ItemIndex i : c.input) seen_eval[static_cast<std::size_t>(i)] = 1;
    }
  };
  mark(split.validation_cases);
  mark(split.test_cases);
  for (std::size_t i = 0; i < log.num_items(); ++i) {
    if (split.train_frequency[i] > 0) {
      split.warm_items.push_back(static_cast<ItemIndex>(i));
    } else if (seen_eval[i]) {
      split.cold_items.push_back(static_cast<ItemIndex>(i));
    }
  }
  if (split.test_cases.empty()) throw DataError("temporal_split: no test cases could be built");
  if (split.warm_items.empty()) throw DataError("temporal_split: no warm items");
  return split;
}

struct DatasetStatistics {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double average_length = 0.0;
  double cold_gt_percent = 0.0;
};

inline DatasetStatistics dataset_statistics(const InteractionLog& log, const SplitDataset& split) {
  DatasetStatistics s;
  s.users = log.num_users();
  s.items = log.num_items();
  s.interactions = log.size();
  s.average_length = s.users ? static_cast<double>(s.interactions) / static_cast<double>(s.users) : 0.0;
  std::size_t cold = 0;
  for (const auto& c : split.test_cases) cold += split.is_cold(c.ground_truth) ? 1 : 0;
  s.cold_gt_percent = split.test_cases.empty()
                          ? 0.0
                          : 100.0 * static_cast<double>(cold) / static_cast<double>(split.test_cases.size());
  return s;
}

}  // namespace coldrec::data
