#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "coldrec/data/content.hpp"
#include "coldrec/error.hpp"
#include "coldrec/eval/evaluate.hpp"

namespace coldrec::eval {

// Content-based KNN: rank every covered item by cosine similarity to the mean
// content vector of the (covered) input items. Ties go to the lower index.
inline std::vector<ItemIndex> knn_baseline(const data::ContentMatrix& content, const EvalCase& c,
                                           std::size_t k) {
  const std::size_t m = content.dim();
  std::vector<double> profile(m, 0.0);
  std::size_t used = 0;
  for (ItemIndex i : c.input) {
    if (i < 0 || static_cast<std::size_t>(i) >= content.num_items() || !content.covers(i)) continue;
    const auto row = content.vectors.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < m; ++j) profile[j] += row[j];
    ++used;
  }
  if (used == 0) throw DataError("knn: empty profile (no input item has content)");
  for (double& x : profile) x /= static_cast<double>(used);
  const double pnorm = numerics::norm(profile);
  if (!(pnorm > 0.0)) throw DataError("knn: empty profile (input content vectors cancel out)");

  std::vector<ItemIndex> candidates;
  std::vector<double> scores;
  for (std::size_t i = 0; i < content.num_items(); ++i) {
    if (!content.coverage[i]) continue;
    const auto row = content.vectors.row(i);
    candidates.push_back(static_cast<ItemIndex>(i));
    scores.push_back(numerics::dot(profile, row) / (pnorm * numerics::norm(row)));
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return candidates[a] < candidates[b];
                    });
  std::vector<ItemIndex> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = candidates[order[i]];
  return out;
}

// RankingFn adapter: cases with an empty profile are excluded.
inline RankingFn knn_ranking(const data::ContentMatrix& content) {
  return [&content](const EvalCase& c, std::size_t k) -> std::optional<std::vector<ItemIndex>> {
    try {
      return knn_baseline(content, c, k);
    } catch (const DataError&) {
      return std::nullopt;
    }
  };
}

}  // namespace coldrec::eval
