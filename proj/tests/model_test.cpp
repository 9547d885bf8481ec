#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "coldrec/data/split.hpp"
#include "coldrec/embeddings/table.hpp"
#include "coldrec/error.hpp"
#include "coldrec/model/seq_model.hpp"
#include "coldrec/model/trainer.hpp"
#include "gradcheck.hpp"

using namespace coldrec;
using namespace coldrec::model;
using embeddings::Variant;
using data::ItemIndex;

namespace {

data::ContentMatrix unit_content(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  data::ContentMatrix c;
  c.source_dim = m;
  c.vectors = numerics::Matrix(n, m);
  c.coverage.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = c.vectors.row(i);
    for (auto& x : row) x = g(rng);
    const double len = numerics::norm(row);
    for (auto& x : row) x /= len;
  }
  return c;
}

ModelConfig small_config(std::size_t m = 8) {
  ModelConfig cfg;
  cfg.embedding_dim = m;
  cfg.num_blocks = 1;
  cfg.max_seq_len = 6;
  cfg.batch_size = 8;
  cfg.dropout = 0.0;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 3;
  cfg.seed = 4;
  return cfg;
}

// Items 0..n-3 are warm, the last two cold.
SeqModel make_model(Variant v, std::size_t n, const ModelConfig& cfg, const data::ContentMatrix* content = nullptr,
                    std::optional<double> delta_max = std::nullopt) {
  std::vector<ItemIndex> warm(n - 2), cold{static_cast<ItemIndex>(n - 2), static_cast<ItemIndex>(n - 1)};
  std::iota(warm.begin(), warm.end(), ItemIndex{0});
  if (v == Variant::FrozenDelta && !delta_max) delta_max = 0.5;
  auto table = embeddings::init_table(v, content, n, cfg.embedding_dim, delta_max, cfg.seed);
  return SeqModel(cfg, std::move(table), warm, cold);
}

data::SplitDataset make_split(std::size_t n, std::vector<std::vector<ItemIndex>> seqs,
                              std::vector<data::SplitCase> validation = {}) {
  data::SplitDataset s;
  for (std::size_t i = 0; i < n; ++i) s.item_ids.push_back("i" + std::to_string(i));
  for (std::size_t u = 0; u < seqs.size(); ++u) s.user_ids.push_back("u" + std::to_string(u));
  s.train_frequency.assign(n, 0);
  for (const auto& seq : seqs) {
    for (auto i : seq) ++s.train_frequency[static_cast<std::size_t>(i)];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.train_frequency[i]) s.warm_items.push_back(static_cast<ItemIndex>(i));
  }
  s.cold_items = {static_cast<ItemIndex>(n - 2), static_cast<ItemIndex>(n - 1)};
  s.train_sequences = std::move(seqs);
  s.validation_cases = std::move(validation);
  return s;
}

std::vector<std::vector<ItemIndex>> random_sequences(std::size_t users, std::size_t warm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<ItemIndex> item(0, static_cast<ItemIndex>(warm - 1));
  std::uniform_int_distribution<std::size_t> len(2, 9);
  std::vector<std::vector<ItemIndex>> out(users);
  for (auto& s : out) {
    s.resize(len(rng));
    for (auto& x : s) x = item(rng);
  }
  // every warm item appears at least once
  for (std::size_t i = 0; i < warm; ++i) out[i % users].push_back(static_cast<ItemIndex>(i));
  return out;
}

std::vector<std::vector<double>> values_of(const SeqModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : m.named_tensors()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

}  // namespace

TEST(Encoding, LaterItemsDoNotChangeEarlierStates) {
  const auto cfg = small_config();
  const auto model = make_model(Variant::IdLearned, 10, cfg);
  const auto a = model.forward({{1, 2, 3, 4, 5}}, false, nullptr);
  const auto b = model.forward({{1, 2, 3, 7, 0}}, false, nullptr);
  const std::size_t m = cfg.embedding_dim;
  for (std::size_t j = 0; j < 3 * m; ++j) EXPECT_NEAR(a.values()[j], b.values()[j], 1e-12);
  double diff = 0.0;
  for (std::size_t j = 3 * m; j < 5 * m; ++j) diff += std::abs(a.values()[j] - b.values()[j]);
  EXPECT_GT(diff, 1e-6);
  // the prefix state matches encoding the prefix alone
  const auto h = model.encode(std::vector<ItemIndex>{1, 2, 3});
  for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(h[j], a.values()[2 * m + j], 1e-12);
}

TEST(Encoding, PaddingDoesNotLeakIntoShorterSequences) {
  const auto model = make_model(Variant::IdLearned, 10, small_config());
  const auto alone = model.encode(std::vector<ItemIndex>{4, 2});
  const auto batched = model.encode_batch({{4, 2}, {1, 2, 3, 5, 6}});
  for (std::size_t j = 0; j < alone.size(); ++j) EXPECT_NEAR(alone[j], batched[0][j], 1e-12);
}

TEST(Encoding, LongInputsKeepTheMostRecentItems) {
  const auto model = make_model(Variant::IdLearned, 12, small_config());
  const std::vector<ItemIndex> longer{9, 8, 7, 1, 2, 3, 4, 5, 6};
  const std::vector<ItemIndex> tail{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(model.encode(longer), model.encode(tail));
}

TEST(Encoding, EvaluationIsDeterministic) {
  auto cfg = small_config();
  cfg.dropout = 0.5;
  const auto model = make_model(Variant::IdLearned, 10, cfg);
  const std::vector<ItemIndex> s{3, 1, 4, 1, 5};
  EXPECT_EQ(model.encode(s), model.encode(s));
  EXPECT_THROW(model.encode(std::vector<ItemIndex>{}), std::invalid_argument);
}

TEST(Encoding, ColdInputPolicy) {
  auto cfg = small_config();
  const auto drop = make_model(Variant::IdLearned, 10, cfg);
  EXPECT_EQ(drop.prepare_input(std::vector<ItemIndex>{1, 8, 2}), (std::vector<std::int64_t>{1, 2}));
  EXPECT_TRUE(recommend(drop, std::vector<ItemIndex>{8, 9}, 3).empty());
  cfg.cold_input = ColdInputPolicy::Oov;
  const auto oov = make_model(Variant::IdLearned, 10, cfg);
  EXPECT_EQ(oov.prepare_input(std::vector<ItemIndex>{1, 8, 2}), (std::vector<std::int64_t>{1, -1, 2}));
  const auto content = unit_content(10, cfg.embedding_dim, 2);
  const auto fd = make_model(Variant::FrozenDelta, 10, cfg, &content);
  EXPECT_EQ(fd.prepare_input(std::vector<ItemIndex>{1, 8, 2}), (std::vector<std::int64_t>{1, 8, 2}));
}

TEST(Scoring, ScoresAreLinearInTheUserState) {
  const auto model = make_model(Variant::IdLearned, 10, small_config());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> h1(8), h2(8), sum(8);
  for (std::size_t j = 0; j < 8; ++j) {
    h1[j] = g(rng);
    h2[j] = g(rng);
    sum[j] = 2.0 * h1[j] - 3.0 * h2[j];
  }
  const auto c = model.candidates();
  const auto s1 = score_items(model, h1, c), s2 = score_items(model, h2, c), s = score_items(model, sum, c);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(s[i], 2.0 * s1[i] - 3.0 * s2[i], 1e-12);
  const auto e = model.items().lookup(c[3]);
  EXPECT_NEAR(s1[3], std::inner_product(h1.begin(), h1.end(), e.begin(), 0.0), 1e-12);
}

TEST(Scoring, TopKMatchesFullSort) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coarse(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<ItemIndex> cands{4, 0, 3, 1, 2};
    std::vector<double> scores(5);
    for (auto& x : scores) x = coarse(rng);
    std::vector<std::pair<double, ItemIndex>> all;
    for (std::size_t i = 0; i < 5; ++i) all.emplace_back(-scores[i], cands[i]);
    std::sort(all.begin(), all.end());
    for (std::size_t k = 1; k <= 6; ++k) {
      const auto got = top_k(cands, scores, k);
      ASSERT_EQ(got.size(), std::min<std::size_t>(k, 5));
      for (std::size_t r = 0; r < got.size(); ++r) EXPECT_EQ(got[r], all[r].second);
    }
  }
}

TEST(Scoring, TiesGoToLowerIndex) {
  const std::vector<ItemIndex> cands{7, 2, 5};
  const std::vector<double> scores{1.0, 1.0, 1.0};
  EXPECT_EQ(top_k(cands, scores, 3), (std::vector<ItemIndex>{2, 5, 7}));
}

TEST(Scoring, FullListIsAPermutationOfCandidates) {
  const auto content = unit_content(12, 8, 5);
  const auto model = make_model(Variant::FrozenDelta, 12, small_config(), &content);
  auto list = recommend(model, std::vector<ItemIndex>{1, 2, 3}, model.candidates().size());
  std::sort(list.begin(), list.end());
  EXPECT_EQ(list, model.candidates());
  EXPECT_EQ(model.candidates().size(), 12u);
}

TEST(Scoring, IdLearnedNeverRecommendsColdItems) {
  const auto model = make_model(Variant::IdLearned, 12, small_config());
  const auto list = recommend(model, std::vector<ItemIndex>{1, 2}, 100);
  EXPECT_EQ(list.size(), 10u);
  for (auto i : list) EXPECT_LT(i, 10);
}

TEST(Scoring, FilterSeenRemovesInputItems) {
  const auto model = make_model(Variant::IdLearned, 12, small_config());
  const Recommender rec(model);
  const auto list = rec.recommend(std::vector<ItemIndex>{1, 2}, 100, true);
  EXPECT_EQ(list.size(), 8u);
  EXPECT_EQ(std::count(list.begin(), list.end(), 1), 0);
  EXPECT_EQ(std::count(list.begin(), list.end(), 2), 0);
}

TEST(Training, FullModelGradientMatchesFiniteDifferences) {
  auto cfg = small_config(8);
  const auto model = make_model(Variant::IdLearned, 8, cfg);
  std::vector<TrainingExample> batch{*model.make_example(std::vector<ItemIndex>{0, 1, 2, 3}),
                                     *model.make_example(std::vector<ItemIndex>{5, 4, 1})};
  std::vector<numerics::Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  const double err = testing_support::max_gradient_error(
      [&] { return model.batch_loss(batch, false, nullptr); }, params, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(Training, FrozenDeltaGradientFlowsOnlyToDelta) {
  auto cfg = small_config(8);
  const auto content = unit_content(8, 8, 7);
  const auto model = make_model(Variant::FrozenDelta, 8, cfg, &content);
  std::vector<TrainingExample> batch{*model.make_example(std::vector<ItemIndex>{0, 1, 2, 3}),
                                     *model.make_example(std::vector<ItemIndex>{5, 4, 1})};
  const auto params = model.parameters();
  ASSERT_EQ(params.front().name, "item.delta");
  numerics::backward(model.batch_loss(batch, false, nullptr));
  EXPECT_FALSE(model.items().base().has_grad());
  std::vector<numerics::Tensor> delta{model.items().delta()};
  const double err = testing_support::max_gradient_error(
      [&] { return model.batch_loss(batch, false, nullptr); }, delta, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(Training, InitialLossIsNearUniform) {
  auto cfg = small_config(16);
  const std::size_t n = 42;
  const auto model = make_model(Variant::IdLearned, n, cfg);
  const auto seqs = random_sequences(16, n - 2, 3);
  std::vector<TrainingExample> batch;
  for (const auto& s : seqs) batch.push_back(*model.make_example(s));
  const double loss = model.batch_loss(batch, false, nullptr).item();
  const double uniform = std::log(static_cast<double>(n - 2));
  EXPECT_GT(loss, 0.8 * uniform);
  EXPECT_LT(loss, 1.2 * uniform);
}

TEST(Training, MemorizesARepeatedPair) {
  auto cfg = small_config(8);
  cfg.max_epochs = 60;
  cfg.learning_rate = 1e-2;
  auto model = make_model(Variant::IdLearned, 8, cfg);
  std::vector<std::vector<ItemIndex>> seqs(16, {0, 1});
  for (ItemIndex i = 2; i < 6; ++i) seqs.push_back({i, static_cast<ItemIndex>((i + 1) % 6)});
  train(model, make_split(8, seqs));
  EXPECT_EQ(recommend(model, std::vector<ItemIndex>{0}, 1).front(), 1);
}

TEST(Training, FrozenDeltaKeepsBaseAndBall) {
  auto cfg = small_config(8);
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 10;
  const std::size_t n = 14;
  const auto content = unit_content(n, 8, 9);
  auto model = make_model(Variant::FrozenDelta, n, cfg, &content, 0.2);
  const std::vector<double> base(model.items().base().values().begin(), model.items().base().values().end());
  double worst = 0.0;
  std::size_t steps = 0;
  TrainHooks hooks;
  hooks.after_step = [&](const SeqModel& m, std::size_t) {
    worst = std::max(worst, m.items().max_delta_norm());
    ++steps;
    const auto now = m.items().base().values();
    ASSERT_TRUE(std::equal(now.begin(), now.end(), base.begin()));
  };
  const auto result = train(model, make_split(n, random_sequences(20, n - 2, 4)), hooks);
  EXPECT_EQ(steps, result.steps);
  EXPECT_GT(steps, 0u);
  EXPECT_LE(worst, 0.2 + 1e-12);
  EXPECT_GT(worst, 0.1);
  // cold rows receive no signal
  const auto d = model.items().delta().values();
  for (std::size_t i = n - 2; i < n; ++i) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(d[i * 8 + j], 0.0);
  }
}

TEST(Training, SameSeedSameModel) {
  auto cfg = small_config(8);
  cfg.dropout = 0.3;
  const std::size_t n = 12;
  const auto split = make_split(n, random_sequences(20, n - 2, 5));
  auto a = make_model(Variant::IdLearned, n, cfg);
  auto b = make_model(Variant::IdLearned, n, cfg);
  const auto ra = train(a, split);
  const auto rb = train(b, split);
  EXPECT_EQ(values_of(a), values_of(b));
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t e = 0; e < ra.log.size(); ++e) EXPECT_EQ(ra.log[e].loss, rb.log[e].loss);
}

TEST(Training, EarlyStoppingRestoresBestEpoch) {
  auto cfg = small_config(8);
  cfg.max_epochs = 40;
  cfg.patience = 2;
  const std::size_t n = 12;
  const auto seqs = random_sequences(20, n - 2, 6);
  std::vector<data::SplitCase> val{{0, {1, 2}, 3}, {1, {4}, 5}, {2, {6, 7}, 0}};
  auto model = make_model(Variant::IdLearned, n, cfg);
  const auto split = make_split(n, seqs, val);
  const auto result = train(model, split);
  ASSERT_FALSE(result.log.empty());
  EXPECT_LE(result.log.size(), result.best_epoch + cfg.patience);
  double best = -1.0;
  for (const auto& row : result.log) best = std::max(best, row.val_ndcg10);
  EXPECT_EQ(result.best_val_ndcg10, best);
  EXPECT_NEAR(validation_ndcg(model, split.validation_cases), best, 1e-12);
}

TEST(Training, NonFiniteLossIsReported) {
  auto model = make_model(Variant::IdLearned, 10, small_config());
  model.named_tensors()[1].second.values()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(model, make_split(10, random_sequences(10, 8, 1))), TrainingError);
}

TEST(Training, NoUsableSequencesIsAnError) {
  auto model = make_model(Variant::IdLearned, 10, small_config());
  EXPECT_THROW(train(model, make_split(10, {{1}, {2}})), TrainingError);
}
