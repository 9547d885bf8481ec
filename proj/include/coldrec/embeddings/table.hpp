#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coldrec/data/content.hpp"
#include "coldrec/error.hpp"
#include "coldrec/numerics/adam.hpp"
#include "coldrec/numerics/ops.hpp"
#include "coldrec/numerics/tensor.hpp"

namespace coldrec::embeddings {

using data::ItemIndex;
using numerics::Tensor;

enum class Variant { IdLearned, ContentInit, FrozenDelta };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::IdLearned: return "id_learned";
    case Variant::ContentInit: return "content_init";
    case Variant::FrozenDelta: return "frozen_delta";
  }
  return "unknown";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "id_learned" || s == "sasrec") return Variant::IdLearned;
  if (s == "content_init") return Variant::ContentInit;
  if (s == "frozen_delta" || s == "trainable_delta") return Variant::FrozenDelta;
  throw ValidationError("unknown embedding variant '" + s +
                        "' (expected id_learned, content_init or frozen_delta)");
}

inline bool uses_content(Variant v) { return v != Variant::IdLearned; }

// Item representation provider. For FrozenDelta the row of item i is
// base[i] + delta[i], with base frozen on content-covered rows and every delta
// row kept inside the ball of radius delta_max.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(Variant variant, Tensor base, Tensor delta, double delta_max,
                 std::vector<std::uint8_t> base_trainable,
                 std::vector<std::uint8_t> delta_trainable)
      : variant_(variant),
        base_(std::move(base)),
        delta_(std::move(delta)),
        delta_max_(delta_max),
        base_trainable_(std::move(base_trainable)),
        delta_trainable_(std::move(delta_trainable)) {
    sync_requires_grad();
  }

  Variant variant() const { return variant_; }
  double delta_max() const { return delta_max_; }
  std::size_t num_items() const { return base_.dim(0); }
  std::size_t dim() const { return base_.dim(1); }

  const Tensor& base() const { return base_; }
  const Tensor& delta() const { return delta_; }
  bool has_delta() const { return delta_.defined(); }
  const std::vector<std::uint8_t>& base_trainable() const { return base_trainable_; }
  const std::vector<std::uint8_t>& delta_trainable() const { return delta_trainable_; }

  // Full item matrix as a graph node.
  Tensor matrix() const { return has_delta() ? numerics::add(base_, delta_) : base_; }

  std::vector<double> lookup(ItemIndex item) const {
    if (item < 0 || static_cast<std::size_t>(item) >= num_items()) {
      throw std::out_of_range("lookup: item " + std::to_string(item) + " outside table of " +
                              std::to_string(num_items()) + " rows");
    }
    const std::size_t m = dim();
    const auto b = base_.values().subspan(static_cast<std::size_t>(item) * m, m);
    std::vector<double> row(b.begin(), b.end());
    if (has_delta()) {
      const auto d = delta_.values().subspan(static_cast<std::size_t>(item) * m, m);
      for (std::size_t j = 0; j < m; ++j) row[j] += d[j];
    }
    return row;
  }

  // Projects every delta row onto the ball of radius delta_max.
  void clip_delta() {
    if (!has_delta()) return;
    const std::size_t m = dim();
    auto v = delta_.values();
    for (std::size_t i = 0; i < num_items(); ++i) {
      auto row = v.subspan(i * m, m);
      double sq = 0.0;
      for (double x : row) sq += x * x;
      const double len = std::sqrt(sq);
      if (len > delta_max_) {
        const double factor = delta_max_ / len;
        for (double& x : row) x *= factor;
      }
    }
  }

  double max_delta_norm() const {
    if (!has_delta()) return 0.0;
    const std::size_t m = dim();
    double best = 0.0;
    const auto v = delta_.values();
    for (std::size_t i = 0; i < num_items(); ++i) {
      double sq = 0.0;
      for (double x : v.subspan(i * m, m)) sq += x * x;
      best = std::max(best, std::sqrt(sq));
    }
    return best;
  }

  // Limits updates to rows that receive training signal.
  void restrict_trainable(std::span<const std::uint8_t> rows) {
    for (std::size_t i = 0; i < num_items(); ++i) {
      if (!rows[i]) {
        base_trainable_[i] = 0;
        if (!delta_trainable_.empty()) delta_trainable_[i] = 0;
      }
    }
    sync_requires_grad();
  }

  std::vector<numerics::Parameter> parameters() const {
    std::vector<numerics::Parameter> out;
    if (base_.requires_grad()) out.push_back({"item.base", base_, base_trainable_});
    if (has_delta() && delta_.requires_grad()) out.push_back({"item.delta", delta_, delta_trainable_});
    return out;
  }

  std::size_t uncovered_rows() const { return uncovered_; }
  void set_uncovered_rows(std::size_t n) { uncovered_ = n; }

 private:
  void sync_requires_grad() {
    const auto any = [](const std::vector<std::uint8_t>& v) {
      return std::any_of(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; });
    };
    base_.set_requires_grad(any(base_trainable_));
    if (has_delta()) delta_.set_requires_grad(any(delta_trainable_));
  }

  Variant variant_ = Variant::IdLearned;
  Tensor base_;
  Tensor delta_;
  double delta_max_ = 0.0;
  std::vector<std::uint8_t> base_trainable_;
  std::vector<std::uint8_t> delta_trainable_;
  std::size_t uncovered_ = 0;
};

namespace detail {

// Zero-mean normal truncated at two standard deviations, std = 1/sqrt(m).
inline void fill_truncated_normal(std::span<double> row, std::mt19937_64& rng, std::size_t m) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  const double bound = 2.0 / std::sqrt(static_cast<double>(m));
  for (double& x : row) {
    do {
      x = normal(rng);
    } while (std::abs(x) > bound);
  }
}

}  // namespace detail

inline EmbeddingTable init_table(Variant variant, const data::ContentMatrix* content,
                                 std::size_t num_items, std::size_t m,
                                 std::optional<double> delta_max, std::uint64_t seed) {
  if (m == 0 || num_items == 0) throw ValidationError("init_table: empty table requested");
  if (variant == Variant::FrozenDelta) {
    if (!delta_max) throw ValidationError("init_table: frozen_delta requires delta_max");
    if (!(*delta_max >= 0.0 && *delta_max < 1.0)) {
      throw ValidationError("init_table: delta_max must lie in [0, 1)");
    }
  } else if (delta_max) {
    throw ValidationError("init_table: delta_max only applies to frozen_delta");
  }
  if (uses_content(variant)) {
    if (!content) throw ValidationError("init_table: " + to_string(variant) + " requires content");
    if (content->num_items() != num_items || content->dim() != m) {
      throw ValidationError("init_table: content is " + std::to_string(content->num_items()) + "x" +
                            std::to_string(content->dim()) + ", table needs " +
                            std::to_string(num_items) + "x" + std::to_string(m));
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<double> base(num_items * m, 0.0);
  std::size_t uncovered = 0;
  for (std::size_t i = 0; i < num_items; ++i) {
    std::span<double> row(base.data() + i * m, m);
    if (uses_content(variant) && content->coverage[i]) {
      const auto src = content->vectors.row(i);
      std::copy(src.begin(), src.end(), row.begin());
    } else {
      detail::fill_truncated_normal(row, rng, m);
      if (uses_content(variant)) ++uncovered;
    }
  }

  std::vector<std::uint8_t> base_trainable(num_items, 1);
  Tensor delta;
  std::vector<std::uint8_t> delta_trainable;
  if (variant == Variant::FrozenDelta) {
    for (std::size_t i = 0; i < num_items; ++i) base_trainable[i] = content->coverage[i] ? 0 : 1;
    delta = Tensor::zeros({num_items, m});
    delta_trainable.assign(num_items, 1);
  }
  EmbeddingTable table(variant, Tensor({num_items, m}, std::move(base)), std::move(delta),
                       delta_max.value_or(0.0), std::move(base_trainable), std::move(delta_trainable));
  table.set_uncovered_rows(uncovered);
  return table;
}

}  // namespace coldrec::embeddings
