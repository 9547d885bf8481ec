#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "coldrec/data/split.hpp"
#include "coldrec/error.hpp"
#include "coldrec/eval/metrics.hpp"
#include "coldrec/model/seq_model.hpp"
#include "coldrec/numerics/adam.hpp"

namespace coldrec::model {

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double val_ndcg10 = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
  double best_val_ndcg10 = 0.0;
  std::size_t steps = 0;
};

struct TrainHooks {
  // Called after every optimizer step (and the delta projection).
  std::function<void(const SeqModel&, std::size_t step)> after_step;
  // Receives one CSV line per epoch: epoch,step,loss,val_ndcg10
  std::ostream* log_stream = nullptr;
};

inline double validation_ndcg(const SeqModel& model, const std::vector<data::SplitCase>& cases,
                              std::size_t k = 10) {
  if (cases.empty()) return 0.0;
  const Recommender rec(model);
  std::vector<std::vector<ItemIndex>> inputs;
  inputs.reserve(cases.size());
  for (const auto& c : cases) inputs.push_back(c.input);
  double total = 0.0;
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::size_t end = std::min(inputs.size(), start + chunk);
    std::vector<std::vector<ItemIndex>> part(inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                             inputs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto lists = rec.recommend_batch(part, k, model.config().filter_seen);
    for (std::size_t i = 0; i < lists.size(); ++i) {
      total += eval::ndcg_at_k(eval::rank_of<ItemIndex>(lists[i], cases[start + i].ground_truth), k);
    }
  }
  return total / static_cast<double>(cases.size());
}

namespace detail {

inline std::vector<std::vector<double>> snapshot(const SeqModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : model.named_tensors()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

inline void restore(SeqModel& model, const std::vector<std::vector<double>>& snap) {
  auto tensors = model.named_tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), tensors[i].second.values().begin());
  }
}

}  // namespace detail

// Full cross-entropy next-item training with Adam. After every step the delta
// rows are projected back into their norm ball. Validation NDCG@10 is tracked
// per epoch and the best epoch's parameters are restored at the end.
inline TrainResult train(SeqModel& model, const data::SplitDataset& split, const TrainHooks& hooks = {}) {
  const auto& cfg = model.config();
  std::vector<TrainingExample> examples;
  for (const auto& seq : split.train_sequences) {
    if (auto ex = model.make_example(seq)) examples.push_back(std::move(*ex));
  }
  if (examples.empty()) throw TrainingError("train: no training sequence has two or more items");

  std::mt19937_64 rng(cfg.seed);
  auto params = model.parameters();
  numerics::AdamState adam;
  adam.learning_rate = cfg.learning_rate;

  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto best_state = detail::snapshot(model);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainingExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const numerics::Tensor loss = model.batch_loss(batch, true, &rng);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(result.steps + 1));
      }
      numerics::backward(loss);
      numerics::adam_step(params, adam);
      model.items().clip_delta();
      ++result.steps;
      if (hooks.after_step) hooks.after_step(model, result.steps);
      loss_sum += value;
      ++batches;
    }

    const double val = validation_ndcg(model, split.validation_cases);
    TrainLogRow row{epoch, result.steps, loss_sum / static_cast<double>(batches), val};
    result.log.push_back(row);
    if (hooks.log_stream) {
      *hooks.log_stream << row.epoch << ',' << row.step << ',' << row.loss << ',' << row.val_ndcg10 << '\n';
    }
    if (split.validation_cases.empty()) {
      // nothing to select on: keep the latest parameters
      best = val;
      result.best_epoch = epoch;
      best_state = detail::snapshot(model);
    } else if (val > best) {
      best = val;
      result.best_epoch = epoch;
      best_state = detail::snapshot(model);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  detail::restore(model, best_state);
  result.best_val_ndcg10 = best;
  return result;
}

}  // namespace coldrec::model
