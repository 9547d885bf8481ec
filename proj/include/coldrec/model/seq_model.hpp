#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coldrec/data/interactions.hpp"
#include "coldrec/embeddings/table.hpp"
#include "coldrec/model/config.hpp"
#include "coldrec/numerics/adam.hpp"
#include "coldrec/numerics/matrix.hpp"
#include "coldrec/numerics/ops.hpp"

namespace coldrec::model {

using data::ItemIndex;
using numerics::Tensor;

struct TransformerBlock {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

// One training sequence: model inputs and, per position, the warm-slot index
// of the next item (-1 on padding).
struct TrainingExample {
  std::vector<std::int64_t> inputs;
  std::vector<std::int64_t> targets;
};

// Unidirectional pre-norm transformer over item sequences. Scores are inner
// products between the final hidden state and rows of the item table, which
// also provides the input embeddings.
class SeqModel {
 public:
  SeqModel(ModelConfig config, embeddings::EmbeddingTable items, std::vector<ItemIndex> warm_items,
           std::vector<ItemIndex> cold_items)
      : config_(std::move(config)),
        items_(std::move(items)),
        warm_items_(std::move(warm_items)),
        cold_items_(std::move(cold_items)) {
    config_.validate();
    if (items_.dim() != config_.embedding_dim) {
      throw ValidationError("model: item table dimension " + std::to_string(items_.dim()) +
                            " does not match embedding_dim " + std::to_string(config_.embedding_dim));
    }
    std::sort(warm_items_.begin(), warm_items_.end());
    std::sort(cold_items_.begin(), cold_items_.end());
    if (warm_items_.empty()) throw ValidationError("model: no warm items");
    warm_slot_.assign(items_.num_items(), -1);
    usable_.assign(items_.num_items(), 0);
    for (std::size_t s = 0; s < warm_items_.size(); ++s) {
      const auto i = static_cast<std::size_t>(warm_items_[s]);
      warm_slot_.at(i) = static_cast<std::int64_t>(s);
      usable_[i] = 1;
    }
    if (embeddings::uses_content(items_.variant())) {
      candidates_ = warm_items_;
      candidates_.insert(candidates_.end(), cold_items_.begin(), cold_items_.end());
      std::sort(candidates_.begin(), candidates_.end());
      for (ItemIndex c : cold_items_) usable_.at(static_cast<std::size_t>(c)) = 1;
    } else {
      candidates_ = warm_items_;
    }
    std::vector<std::uint8_t> trainable(items_.num_items(), 0);
    for (ItemIndex w : warm_items_) trainable[static_cast<std::size_t>(w)] = 1;
    items_.restrict_trainable(trainable);
    init_weights();
  }

  const ModelConfig& config() const { return config_; }
  const embeddings::EmbeddingTable& items() const { return items_; }
  embeddings::EmbeddingTable& items() { return items_; }
  const std::vector<ItemIndex>& warm_items() const { return warm_items_; }
  const std::vector<ItemIndex>& cold_items() const { return cold_items_; }
  // Items eligible for ranking: warm only without content, warm and cold with.
  const std::vector<ItemIndex>& candidates() const { return candidates_; }
  std::int64_t warm_slot(ItemIndex i) const { return warm_slot_.at(static_cast<std::size_t>(i)); }

  // Applies the cold-item input policy and keeps the last max_seq_len items.
  std::vector<std::int64_t> prepare_input(std::span<const ItemIndex> seq) const {
    std::vector<std::int64_t> out;
    out.reserve(seq.size());
    for (ItemIndex i : seq) {
      if (i < 0 || static_cast<std::size_t>(i) >= usable_.size()) {
        throw std::out_of_range("model: item index " + std::to_string(i) + " out of range");
      }
      if (usable_[static_cast<std::size_t>(i)]) {
        out.push_back(i);
      } else if (config_.cold_input == ColdInputPolicy::Oov) {
        out.push_back(-1);
      }
    }
    if (out.size() > config_.max_seq_len) {
      out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(config_.max_seq_len));
    }
    return out;
  }

  // Hidden states [B, T, m] for right-padded sequences (T = longest input).
  // rng is only drawn from when training is true.
  Tensor forward(const std::vector<std::vector<std::int64_t>>& batch, bool training,
                 std::mt19937_64* rng) const {
    if (batch.empty()) throw std::invalid_argument("forward: empty batch");
    std::size_t t = 0;
    for (const auto& s : batch) t = std::max(t, s.size());
    if (t == 0) throw std::invalid_argument("forward: all sequences are empty");
    if (t > config_.max_seq_len) throw std::invalid_argument("forward: sequence exceeds max_seq_len");
    const std::size_t b = batch.size();
    const std::size_t m = config_.embedding_dim;
    std::vector<std::int64_t> idx(b * t, -1);
    for (std::size_t i = 0; i < b; ++i) std::copy(batch[i].begin(), batch[i].end(), idx.begin() + i * t);
    std::vector<std::int64_t> pos(t);
    std::iota(pos.begin(), pos.end(), 0);

    std::mt19937_64 unused;
    std::mt19937_64& gen = rng ? *rng : unused;
    const bool drop = training && rng != nullptr;

    Tensor x = numerics::embedding(items_.matrix(), idx, {b, t});
    x = numerics::add(x, numerics::embedding(positional_, pos, {t}));
    x = numerics::dropout(x, config_.dropout, gen, drop);

    const std::size_t heads = config_.num_heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(m / heads));
    for (const auto& blk : blocks_) {
      Tensor a = numerics::layer_norm(x, blk.ln1_gain, blk.ln1_bias);
      Tensor q = numerics::split_heads(numerics::add(numerics::matmul(a, blk.wq), blk.bq), heads);
      Tensor k = numerics::split_heads(numerics::add(numerics::matmul(a, blk.wk), blk.bk), heads);
      Tensor v = numerics::split_heads(numerics::add(numerics::matmul(a, blk.wv), blk.bv), heads);
      Tensor scores = numerics::scale(numerics::batched_matmul(q, k, true), inv_sqrt_d);
      Tensor attn = numerics::softmax(numerics::causal_mask(scores));
      Tensor ctx = numerics::merge_heads(numerics::batched_matmul(attn, v, false), heads);
      Tensor o = numerics::add(numerics::matmul(ctx, blk.wo), blk.bo);
      x = numerics::add(x, numerics::dropout(o, config_.dropout, gen, drop));

      Tensor f = numerics::layer_norm(x, blk.ln2_gain, blk.ln2_bias);
      f = numerics::relu(numerics::add(numerics::matmul(f, blk.w1), blk.b1));
      f = numerics::dropout(f, config_.dropout, gen, drop);
      f = numerics::add(numerics::matmul(f, blk.w2), blk.b2);
      x = numerics::add(x, numerics::dropout(f, config_.dropout, gen, drop));
    }
    return numerics::layer_norm(x, final_gain_, final_bias_);
  }

  // Mean next-item cross-entropy against every warm item.
  Tensor batch_loss(const std::vector<TrainingExample>& batch, bool training,
                    std::mt19937_64* rng) const {
    std::vector<std::vector<std::int64_t>> inputs;
    inputs.reserve(batch.size());
    std::size_t t = 0;
    for (const auto& ex : batch) {
      inputs.push_back(ex.inputs);
      t = std::max(t, ex.inputs.size());
    }
    std::vector<std::int64_t> targets(batch.size() * t, -1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::copy(batch[i].targets.begin(), batch[i].targets.end(), targets.begin() + i * t);
    }
    // only positions with a target are scored
    std::vector<std::size_t> rows;
    std::vector<std::int64_t> kept;
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (targets[r] >= 0) {
        rows.push_back(r);
        kept.push_back(targets[r]);
      }
    }
    if (rows.empty()) throw std::invalid_argument("batch_loss: batch has no targets");
    Tensor h = numerics::select_rows(forward(inputs, training, rng), rows);
    Tensor warm = numerics::embedding(items_.matrix(), warm_items_, {warm_items_.size()});
    Tensor logits = numerics::matmul_transposed(h, warm);
    return numerics::cross_entropy(logits, kept, -1);
  }

  // Builds a training example from a warm-only item sequence; nullopt when it
  // has fewer than two items.
  std::optional<TrainingExample> make_example(std::span<const ItemIndex> seq) const {
    if (seq.size() < 2) return std::nullopt;
    const std::size_t len = std::min(seq.size() - 1, config_.max_seq_len);
    const std::size_t start = seq.size() - 1 - len;
    TrainingExample ex;
    for (std::size_t j = start; j < start + len; ++j) {
      ex.inputs.push_back(seq[j]);
      ex.targets.push_back(warm_slot(seq[j + 1]));
    }
    return ex;
  }

  // User representations for a batch of raw sequences, dropout off.
  std::vector<std::vector<double>> encode_batch(const std::vector<std::vector<ItemIndex>>& seqs) const {
    numerics::NoGradGuard no_grad;
    std::vector<std::vector<std::int64_t>> prepared;
    prepared.reserve(seqs.size());
    for (const auto& s : seqs) {
      auto p = prepare_input(s);
      if (p.empty()) throw std::invalid_argument("encode: empty input sequence");
      prepared.push_back(std::move(p));
    }
    Tensor h = forward(prepared, false, nullptr);
    const std::size_t t = h.dim(1);
    const std::size_t m = h.dim(2);
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    const auto hv = h.values();
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto* row = hv.data() + (i * t + prepared[i].size() - 1) * m;
      out.emplace_back(row, row + m);
    }
    return out;
  }

  std::vector<double> encode(std::span<const ItemIndex> input) const {
    return encode_batch({std::vector<ItemIndex>(input.begin(), input.end())}).front();
  }

  numerics::Matrix item_matrix() const {
    numerics::NoGradGuard no_grad;
    const Tensor e = items_.matrix();
    return numerics::Matrix(items_.num_items(), items_.dim(),
                            std::vector<double>(e.values().begin(), e.values().end()));
  }

  // r(u, i) = h . e_i for each candidate.
  std::vector<double> score_items(std::span<const double> h, std::span<const ItemIndex> candidates) const {
    return score_with(item_matrix(), h, candidates);
  }

  static std::vector<double> score_with(const numerics::Matrix& items, std::span<const double> h,
                                        std::span<const ItemIndex> candidates) {
    std::vector<double> out(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      out[c] = numerics::dot(h, items.row(static_cast<std::size_t>(candidates[c])));
    }
    return out;
  }

  // Trainable tensors in a fixed order.
  std::vector<numerics::Parameter> parameters() const {
    auto out = items_.parameters();
    for (auto& [name, t] : dense_tensors()) out.push_back({name, t, {}});
    return out;
  }

  // Every stored tensor (frozen ones included) by checkpoint name.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("item.base", items_.base());
    if (items_.has_delta()) out.emplace_back("item.delta", items_.delta());
    auto dense = dense_tensors();
    out.insert(out.end(), dense.begin(), dense.end());
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> dense_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("positional", positional_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      const std::string p = "block" + std::to_string(i) + ".";
      out.emplace_back(p + "ln1.gain", b.ln1_gain);
      out.emplace_back(p + "ln1.bias", b.ln1_bias);
      out.emplace_back(p + "wq", b.wq);
      out.emplace_back(p + "bq", b.bq);
      out.emplace_back(p + "wk", b.wk);
      out.emplace_back(p + "bk", b.bk);
      out.emplace_back(p + "wv", b.wv);
      out.emplace_back(p + "bv", b.bv);
      out.emplace_back(p + "wo", b.wo);
      out.emplace_back(p + "bo", b.bo);
      out.emplace_back(p + "ln2.gain", b.ln2_gain);
      out.emplace_back(p + "ln2.bias", b.ln2_bias);
      out.emplace_back(p + "w1", b.w1);
      out.emplace_back(p + "b1", b.b1);
      out.emplace_back(p + "w2", b.w2);
      out.emplace_back(p + "b2", b.b2);
    }
    out.emplace_back("final.gain", final_gain_);
    out.emplace_back("final.bias", final_bias_);
    return out;
  }

  void init_weights() {
    const std::size_t m = config_.embedding_dim;
    std::mt19937_64 rng(config_.seed ^ 0x5eedf00dULL);
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * m));  // Glorot, square
    std::uniform_real_distribution<double> uni(-bound, bound);
    auto dense = [&](std::size_t rows, std::size_t cols) {
      std::vector<double> v(rows * cols);
      for (double& x : v) x = uni(rng);
      return Tensor({rows, cols}, std::move(v), true);
    };
    auto constant = [&](double c) { return Tensor({m}, std::vector<double>(m, c), true); };
    positional_ = Tensor::zeros({config_.max_seq_len, m}, true);
    blocks_.clear();
    for (std::size_t i = 0; i < config_.num_blocks; ++i) {
      TransformerBlock b;
      b.ln1_gain = constant(1.0);
      b.ln1_bias = constant(0.0);
      b.wq = dense(m, m);
      b.bq = constant(0.0);
      b.wk = dense(m, m);
      b.bk = constant(0.0);
      b.wv = dense(m, m);
      b.bv = constant(0.0);
      b.wo = dense(m, m);
      b.bo = constant(0.0);
      b.ln2_gain = constant(1.0);
      b.ln2_bias = constant(0.0);
      b.w1 = dense(m, m);
      b.b1 = constant(0.0);
      b.w2 = dense(m, m);
      b.b2 = constant(0.0);
      blocks_.push_back(std::move(b));
    }
    final_gain_ = constant(1.0);
    final_bias_ = constant(0.0);
  }

  ModelConfig config_;
  embeddings::EmbeddingTable items_;
  std::vector<ItemIndex> warm_items_;
  std::vector<ItemIndex> cold_items_;
  std::vector<ItemIndex> candidates_;
  std::vector<std::int64_t> warm_slot_;
  std::vector<std::uint8_t> usable_;
  Tensor positional_;
  std::vector<TransformerBlock> blocks_;
  Tensor final_gain_;
  Tensor final_bias_;
};

// Top-k items by score, ties broken by ascending item index.
inline std::vector<ItemIndex> top_k(std::span<const ItemIndex> candidates, std::span<const double> scores,
                                    std::size_t k) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t kk = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(), better);
  std::vector<ItemIndex> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = candidates[order[i]];
  return out;
}

// Serves rankings from a trained model with the item matrix materialized once.
class Recommender {
 public:
  explicit Recommender(const SeqModel& model)
      : model_(&model), items_(model.item_matrix()) {}

  std::vector<ItemIndex> recommend(std::span<const ItemIndex> input, std::size_t k,
                                   bool filter_seen) const {
    if (k == 0) throw std::invalid_argument("recommend: k must be at least 1");
    if (model_->prepare_input(input).empty()) return {};
    const auto h = model_->encode(input);
    return rank(h, input, k, filter_seen);
  }

  // Batched variant; entries whose input is empty after the input policy get
  // an empty list.
  std::vector<std::vector<ItemIndex>> recommend_batch(const std::vector<std::vector<ItemIndex>>& inputs,
                                                      std::size_t k, bool filter_seen) const {
    std::vector<std::vector<ItemIndex>> out(inputs.size());
    std::vector<std::vector<ItemIndex>> usable;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!model_->prepare_input(inputs[i]).empty()) {
        usable.push_back(inputs[i]);
        where.push_back(i);
      }
    }
    if (usable.empty()) return out;
    const auto hs = model_->encode_batch(usable);
    for (std::size_t j = 0; j < where.size(); ++j) out[where[j]] = rank(hs[j], usable[j], k, filter_seen);
    return out;
  }

  std::vector<ItemIndex> rank(std::span<const double> h, std::span<const ItemIndex> input, std::size_t k,
                              bool filter_seen) const {
    std::vector<ItemIndex> cands = model_->candidates();
    if (filter_seen) {
      std::vector<ItemIndex> seen(input.begin(), input.end());
      std::sort(seen.begin(), seen.end());
      std::erase_if(cands, [&](ItemIndex c) { return std::binary_search(seen.begin(), seen.end(), c); });
    }
    const auto scores = SeqModel::score_with(items_, h, cands);
    return top_k(cands, scores, k);
  }

 private:
  const SeqModel* model_;
  numerics::Matrix items_;
};

inline std::vector<double> encode(const SeqModel& model, std::span<const ItemIndex> input) {
  return model.encode(input);
}

inline std::vector<double> score_items(const SeqModel& model, std::span<const double> h,
                                       std::span<const ItemIndex> candidates) {
  return model.score_items(h, candidates);
}

inline std::vector<ItemIndex> recommend(const SeqModel& model, std::span<const ItemIndex> input,
                                        std::size_t k) {
  return Recommender(model).recommend(input, k, model.config().filter_seen);
}

}  // namespace coldrec::model
