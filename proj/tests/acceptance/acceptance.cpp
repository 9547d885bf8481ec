#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "coldrec/cli/commands.hpp"
#include "coldrec/cli/runtime.hpp"
#include "coldrec/embeddings/geometry.hpp"
#include "coldrec/eval/evaluate.hpp"
#include "coldrec/numerics/pca.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace coldrec;
using embeddings::Variant;
using data::ItemIndex;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t m) {
  std::normal_distribution<double> g;
  std::vector<double> v(m);
  double len = 0.0;
  for (auto& x : v) {
    x = g(rng);
    len += x * x;
  }
  for (auto& x : v) x /= std::sqrt(len);
  return v;
}

// ---- 1: geometric bound ----
Outcome geometric_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  bool ok = true;
  double gap_at_half = 1.0;
  std::string detail;
  for (double delta : {0.1, 0.3, 0.5, 0.6, 0.9}) {
    const double bound = std::sqrt(1.0 - delta * delta);
    double lowest = 2.0;
    for (int s = 0; s < 10000; ++s) {
      const auto c = random_unit(rng, 16);
      auto d = random_unit(rng, 16);
      std::vector<double> e(16);
      for (std::size_t j = 0; j < 16; ++j) e[j] = c[j] + delta * d[j];
      lowest = std::min(lowest, embeddings::cosine(c, e));
    }
    ok = ok && lowest >= bound - 1e-9 && std::abs(embeddings::min_cosine_similarity(delta) - bound) < 1e-15;
    if (delta == 0.5) gap_at_half = lowest - bound;
    detail += fmt("%sd=%.1f min %.4f/bound %.4f", detail.empty() ? "" : ", ", delta, lowest, bound);
  }
  const double secs = elapsed(t0);
  ok = ok && gap_at_half <= 0.02 && secs < 5.0;
  return {ok, detail + fmt("; gap at 0.5 = %.4f", gap_at_half), secs};
}

// ---- 4: gradient check ----
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  model::ModelConfig cfg;
  cfg.embedding_dim = 8;
  cfg.num_blocks = 1;
  cfg.max_seq_len = 5;
  cfg.dropout = 0.0;
  cfg.seed = 11;
  const std::size_t n = 6;
  data::ContentMatrix content;
  content.vectors = numerics::Matrix(n, 8);
  content.coverage.assign(n, 1);
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = random_unit(rng, 8);
    std::copy(v.begin(), v.end(), content.vectors.row(i).begin());
  }
  double worst = 0.0;
  for (auto variant : {Variant::IdLearned, Variant::FrozenDelta}) {
    const auto dm = variant == Variant::FrozenDelta ? std::optional<double>(0.5) : std::nullopt;
    auto table = embeddings::init_table(variant, &content, n, 8, dm, cfg.seed);
    model::SeqModel m(cfg, std::move(table), {0, 1, 2, 3}, {4, 5});
    if (variant == Variant::FrozenDelta) {
      // move off the zero initialization so the delta enters non-trivially
      auto delta = m.items().delta();
      for (double& x : delta.values()) x = 0.05 * std::normal_distribution<double>()(rng);
    }
    const std::vector<model::TrainingExample> batch{*m.make_example(std::vector<ItemIndex>{0, 1, 2, 3, 1}),
                                                    *m.make_example(std::vector<ItemIndex>{3, 2, 0})};
    std::vector<numerics::Tensor> params;
    for (const auto& p : m.parameters()) params.push_back(p.tensor);
    worst = std::max(worst, testing_support::max_gradient_error(
                                [&] { return m.batch_loss(batch, false, nullptr); }, params, 1e-6));
  }
  const double secs = elapsed(t0);
  return {worst < 1e-4 && secs < 30.0, fmt("max relative error %.2e over id_learned and frozen_delta", worst), secs};
}

// ---- 7: metric oracles ----
Outcome metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  const std::size_t items = 60, k = 10, n = 1000;
  std::uniform_int_distribution<ItemIndex> item(0, static_cast<ItemIndex>(items - 1));
  std::bernoulli_distribution coin(0.2);
  std::vector<eval::EvalCase> cases(n);
  std::vector<std::vector<ItemIndex>> lists(n);
  for (std::size_t i = 0; i < n; ++i) {
    cases[i].ground_truth = item(rng);
    cases[i].gt_is_cold = coin(rng);
    cases[i].gt_train_frequency = cases[i].gt_is_cold ? 0 : 1 + static_cast<std::size_t>(item(rng));
    lists[i].resize(items);
    std::iota(lists[i].begin(), lists[i].end(), ItemIndex{0});
    std::shuffle(lists[i].begin(), lists[i].end(), rng);
  }
  std::size_t next = 0;
  const eval::RankingFn scorer = [&](const eval::EvalCase&, std::size_t kk) -> std::optional<std::vector<ItemIndex>> {
    auto l = lists[next++];
    l.resize(kk);
    return l;
  };
  const auto report = eval::evaluate(scorer, cases, k);

  double sums[3][2] = {};
  std::size_t counts[3] = {};
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = 0;
    while (lists[i][pos] != cases[i].ground_truth) ++pos;
    const double hr = pos < k ? 1.0 : 0.0;
    const double nd = pos < k ? std::log(2.0) / std::log(static_cast<double>(pos) + 2.0) : 0.0;
    for (std::size_t s : {std::size_t{0}, cases[i].gt_is_cold ? std::size_t{1} : std::size_t{2}}) {
      sums[s][0] += hr;
      sums[s][1] += nd;
      ++counts[s];
    }
  }
  const char* names[3] = {"total", "cold_gt", "warm_gt"};
  double worst = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& seg = report.segment(names[s]);
    if (seg.count != counts[s]) return {false, std::string("count mismatch in ") + names[s], elapsed(t0)};
    worst = std::max(worst, std::abs(*seg.hr - sums[s][0] / counts[s]));
    worst = std::max(worst, std::abs(*seg.ndcg - sums[s][1] / counts[s]));
  }
  double additivity = 0.0;
  const auto& tot = report.segment("total");
  const auto& cold = report.segment("cold_gt");
  const auto& warm = report.segment("warm_gt");
  for (auto field : {&eval::SegmentResult::hr, &eval::SegmentResult::ndcg}) {
    const double mixed = (*(cold.*field) * cold.count + *(warm.*field) * warm.count) / tot.count;
    additivity = std::max(additivity, std::abs(*(tot.*field) - mixed));
  }
  return {worst <= 1e-12 && additivity <= 1e-12,
          fmt("max oracle deviation %.1e, additivity deviation %.1e over %zu cases", worst, additivity, n), elapsed(t0)};
}

// ---- 8: PCA oracle ----
Outcome pca_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  numerics::Matrix x(200, 32);
  for (std::size_t r = 0; r < 200; ++r) {
    const double shared = g(rng);
    for (std::size_t c = 0; c < 32; ++c) x(r, c) = g(rng) * (1.0 + 0.1 * c) + shared * static_cast<double>(c % 4);
  }
  const auto model = numerics::fit_pca(x, 8);

  Eigen::MatrixXd e(200, 32);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = 0; c < 32; ++c) e(r, c) = x(r, c);
  Eigen::MatrixXd z = e.rowwise() - e.colwise().mean();
  const Eigen::RowVectorXd sd = (z.array().square().colwise().sum() / 200.0).sqrt();
  for (Eigen::Index c = 0; c < 32; ++c) z.col(c) /= sd(c);
  const Eigen::MatrixXd cov = z.transpose() * z / 199.0;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < 8; ++j) {
    const Eigen::VectorXd ref = solver.eigenvectors().col(31 - j);
    double dot = 0.0;
    for (Eigen::Index i = 0; i < 32; ++i) dot += ref(i) * model.components(i, j);
    const double sign = dot < 0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < 32; ++i) worst = std::max(worst, std::abs(model.components(i, j) - sign * ref(i)));
  }
  std::vector<double> var(8, 0.0);
  for (std::size_t r = 0; r < 200; ++r) {
    const auto y = numerics::pca_transform(model, x.row(r));
    for (std::size_t j = 0; j < 8; ++j) var[j] += y[j] * y[j] / 199.0;
  }
  const bool descending = std::is_sorted(var.rbegin(), var.rend());
  return {worst <= 1e-6 && descending,
          fmt("max component deviation %.1e, variances %.3f..%.3f %s", worst, var.front(), var.back(),
              descending ? "descending" : "NOT descending"),
          elapsed(t0)};
}

// ---- synthetic experiment shared by 2, 3, 5, 6 ----
struct Experiment {
  cli::ExperimentConfig base;
  std::ofstream log;
};

cli::ExperimentConfig variant_config(const cli::ExperimentConfig& base, Variant v, std::optional<double> dm) {
  auto c = base;
  c.variant = v;
  c.delta_max = dm;
  c.validate();
  return c;
}

struct VariantRuns {
  std::vector<eval::MetricsReport> reports;
  double mean(const std::string& seg) const {
    double s = 0.0;
    for (const auto& r : reports) s += r.segment(seg).ndcg.value_or(0.0);
    return s / static_cast<double>(reports.size());
  }
};

VariantRuns run_variant(Experiment& ex, Variant v, std::optional<double> dm) {
  const auto c = variant_config(ex.base, v, dm);
  VariantRuns out;
  for (auto seed : c.seeds) {
    std::cerr << "  " << c.run_name() << " seed " << seed << "\n";
    out.reports.push_back(cli::run_seed(c, seed, ex.log));
  }
  return out;
}

// ---- 2: projection invariant ----
Outcome projection_invariant(Experiment& ex) {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = variant_config(ex.base, Variant::FrozenDelta, 0.5);
  c.model.learning_rate = 1e-2;  // large enough that the ball is reached
  c.model.max_epochs = 1000;
  c.model.patience = 1000;
  const auto p = cli::load_prepared(c);
  auto m = cli::build_model(c, 1, p);
  const auto base0 = m.items().base().values();
  const std::vector<double> initial(base0.begin(), base0.end());
  struct Done {};
  std::size_t steps = 0, clipped_steps = 0;
  double worst = 0.0;
  bool base_identical = true;
  model::TrainHooks hooks;
  hooks.after_step = [&](const model::SeqModel& sm, std::size_t step) {
    const double norm = sm.items().max_delta_norm();
    worst = std::max(worst, norm);
    if (norm >= 0.5 - 1e-12) ++clipped_steps;
    const auto now = sm.items().base().values();
    base_identical = base_identical && std::memcmp(now.data(), initial.data(), initial.size() * sizeof(double)) == 0;
    steps = step;
    if (step == 200) throw Done{};
  };
  try {
    model::train(m, p.split, hooks);
  } catch (const Done&) {
  }
  const double secs = elapsed(t0);
  return {steps == 200 && worst <= 0.5 + 1e-9 && base_identical && secs < 60.0,
          fmt("%zu steps, max delta norm %.12f, ball reached on %zu steps, base %s", steps, worst, clipped_steps,
              base_identical ? "bit-identical" : "CHANGED"),
          secs};
}

// ---- 9: determinism through the binary ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = work / "determinism";
  cli::SynthConfig sc;
  sc.num_users = 400;
  sc.num_items = 120;
  sc.num_cold = 15;
  sc.num_clusters = 12;
  std::ostringstream quiet;
  cli::cmd_synth(dir / "data", sc, quiet);
  auto c = cli::synthetic_experiment_config();
  c.interactions = (dir / "data" / "interactions.csv").string();
  c.content = (dir / "data" / "content.txt").string();
  c.model.embedding_dim = 16;
  c.model.max_epochs = 3;
  c.seeds = {1};
  cli::write_json(dir / "config.json", cli::to_json(c));
  ::setenv("COLDREC_THREADS", "1", 1);
  std::vector<std::string> csvs;
  for (const auto* name : {"a", "b"}) {
    const auto out = (dir / name).string();
    for (const auto* sub : {"prepare", "train", "evaluate"}) {
      const std::string cmd = std::string(COLDREC_CLI_PATH) + " " + sub + " --config " + (dir / "config.json").string() +
                              " --output_dir " + out + " >>" + (dir / "cli.log").string() + " 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        return {false, std::string("coldrec ") + sub + " failed, see " + (dir / "cli.log").string(), elapsed(t0)};
      }
    }
    auto cc = c;
    cc.output_dir = out;
    csvs.push_back(slurp(cc.seed_dir(1) / "metrics.csv") + "\n" + slurp(cc.seed_dir(1) / "train_log.csv"));
  }
  const bool same = !csvs[0].empty() && csvs[0] == csvs[1];
  return {same, same ? "metrics.csv and train_log.csv byte-identical across two runs" : "outputs differ", elapsed(t0)};
}

}  // namespace

int main(int argc, char** argv) {
  cli::keep_freed_memory();
  fs::path work = COLDREC_ACCEPTANCE_WORK;
  bool reuse = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--reuse") == 0) {
      reuse = true;
    } else {
      work = argv[i];
    }
  }
  if (!reuse) fs::remove_all(work);
  fs::create_directories(work);

  std::map<int, std::pair<std::string, Outcome>> results;
  auto record = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    std::cerr << "running criterion " << id << ": " << name << "\n";
    try {
      results[id] = {name, fn()};
    } catch (const std::exception& e) {
      results[id] = {name, {false, std::string("exception: ") + e.what(), 0.0}};
    }
  };

  record(1, "geometric bound", geometric_bound);
  record(4, "gradient check", gradient_check);
  record(7, "metric oracles", metric_oracles);
  record(8, "PCA oracle", pca_oracle);

  Experiment ex;
  ex.log.open(work / "experiment.log");
  std::optional<VariantRuns> fd, ci, id;
  try {
    std::ostringstream quiet;
    cli::cmd_synth(work / "synthetic", cli::SynthConfig{}, quiet);
    ex.base = cli::synthetic_experiment_config();
    ex.base.interactions = (work / "synthetic" / "interactions.csv").string();
    ex.base.content = (work / "synthetic" / "content.txt").string();
    ex.base.output_dir = (work / "runs").string();
    const auto stats = cli::cmd_prepare(ex.base, ex.log);
    ex.log << "prepared: " << stats.users << " users, " << stats.items << " items, cold gt "
           << stats.cold_gt_percent << "%\n";
  } catch (const std::exception& e) {
    std::cerr << "synthetic setup failed: " << e.what() << "\n";
  }

  record(2, "projection invariant", [&] { return projection_invariant(ex); });

  auto t5 = std::chrono::steady_clock::now();
  double secs5 = 0.0;
  try {
    id = run_variant(ex, Variant::IdLearned, std::nullopt);
    ci = run_variant(ex, Variant::ContentInit, std::nullopt);
    fd = run_variant(ex, Variant::FrozenDelta, 0.5);
    secs5 = elapsed(t5);
  } catch (const std::exception& e) {
    std::cerr << "variant runs failed: " << e.what() << "\n";
  }

  record(3, "id_learned cold metrics are zero", [&]() -> Outcome {
    if (!id) return {false, "id_learned runs unavailable", 0.0};
    bool ok = true;
    std::size_t cold_cases = 0;
    for (const auto& r : id->reports) {
      const auto& s = r.segment("cold_gt");
      cold_cases = s.count;
      ok = ok && s.count > 0 && s.hr && s.ndcg && *s.hr == 0.0 && *s.ndcg == 0.0;
    }
    return {ok, fmt("cold HR@10 and NDCG@10 exactly 0 on all %zu seeds (%zu cold cases)", id->reports.size(), cold_cases),
            0.0};
  });

  record(5, "directional comparison on synthetic data", [&]() -> Outcome {
    if (!id || !ci || !fd) return {false, "variant runs unavailable", secs5};
    const double f = fd->mean("cold_gt"), c = ci->mean("cold_gt"), i = id->mean("cold_gt");
    const double fw = fd->mean("warm_gt"), iw = id->mean("warm_gt");
    const bool ok = f > c && c > i && i == 0.0 && fw >= 0.9 * iw && secs5 < 1800.0;
    return {ok,
            fmt("cold NDCG@10 frozen_delta %.4f > content_init %.4f > id_learned %.4f; warm frozen_delta %.4f vs "
                "0.9 x id_learned %.4f",
                f, c, i, fw, 0.9 * iw),
            secs5};
  });

  record(6, "delta_max sweep shape", [&]() -> Outcome {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = variant_config(ex.base, Variant::FrozenDelta, 0.5);
    const auto rows = cli::cmd_sweep(c, {0.05, 0.3, 0.5, 0.9}, ex.log);
    const double secs = elapsed(t0);
    std::map<double, std::pair<double, double>> by;
    for (const auto& r : rows) by[r.delta_max] = {r.total_ndcg ? r.total_ndcg->mean : 0.0, r.cold_ndcg ? r.cold_ndcg->mean : 0.0};
    double best_total = 0.0, best_at = 0.0;
    for (const auto& [d, v] : by) {
      if (v.first > best_total) {
        best_total = v.first;
        best_at = d;
      }
    }
    std::string table;
    for (const auto& [d, v] : by) table += fmt(" %.2f:%.4f/%.4f", d, v.first, v.second);
    const bool ok = by.at(0.05).first < best_total && by.at(0.9).second < by.at(0.3).second && secs < 2700.0;
    return {ok, fmt("total/cold NDCG@10 by delta_max%s; best total at %.2f", table.c_str(), best_at), secs};
  });

  record(9, "determinism", [&] { return determinism(work); });

  int failed = 0;
  std::cout << "\nacceptance summary\n";
  for (const auto& [id_, r] : results) {
    const auto& [name, o] = r;
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id_ << " (" << name << "): " << o.detail
              << fmt(" [%.1f s]", o.seconds) << "\n";
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed") << "\n";
  return failed ? 1 : 0;
}
