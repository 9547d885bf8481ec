#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "coldrec/cli/artifacts.hpp"
#include "coldrec/cli/checkpoint.hpp"
#include "coldrec/cli/config.hpp"
#include "coldrec/cli/synth.hpp"
#include "coldrec/data/content.hpp"
#include "coldrec/data/preprocess.hpp"
#include "coldrec/data/split.hpp"
#include "coldrec/eval/aggregate.hpp"
#include "coldrec/eval/evaluate.hpp"
#include "coldrec/eval/knn.hpp"
#include "coldrec/model/trainer.hpp"

namespace coldrec::cli {

// COLDREC_THREADS, default 1 (deterministic reference mode).
inline std::size_t thread_count() {
  const char* env = std::getenv("COLDREC_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ValidationError("COLDREC_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(n);
}

struct Prepared {
  data::SplitDataset split;
  std::optional<data::ContentMatrix> content;
};

inline data::DatasetStatistics cmd_prepare(const ExperimentConfig& c, std::ostream& log) {
  const auto raw = data::load_interactions(c.interactions, c.columns);
  const auto clean = data::preprocess(raw, c.preprocess);
  const auto split = data::temporal_split(clean, c.split);
  const auto stats = data::dataset_statistics(clean, split);

  const auto dir = c.prepared_dir();
  fs::create_directories(dir);
  write_json(dir / "split.json", split_to_json(split));
  if (c.content) {
    const auto file = data::read_content_file(*c.content);
    data::ContentMatrix matrix;
    if (c.content_projected) {
      if (file.dim != c.model.embedding_dim) {
        throw DataError("content: projected file has dimension " + std::to_string(file.dim) +
                        ", model.embedding_dim is " + std::to_string(c.model.embedding_dim));
      }
      matrix = data::content_from_projected(file, split);
    } else {
      matrix = data::project_content(file, split, {c.model.embedding_dim, std::nullopt}).matrix;
    }
    data::write_content_binary((dir / "content.bin").string(), data::to_content_file(matrix, split));
  } else {
    fs::remove(dir / "content.bin");
  }
  write_json(dir / "stats.json", stats_to_json(stats));
  write_stats_csv(dir / "stats.csv", stats);
  log << "prepared " << stats.users << " users, " << stats.items << " items, " << stats.interactions
      << " interactions; " << split.warm_items.size() << " warm, " << split.cold_items.size() << " cold, "
      << split.test_cases.size() << " test cases\n";
  return stats;
}

inline Prepared load_prepared(const ExperimentConfig& c) {
  const auto dir = c.prepared_dir();
  if (!fs::exists(dir / "split.json")) {
    throw DataError("no prepared data in '" + dir.string() + "' (run prepare first)");
  }
  Prepared p{split_from_json(read_json(dir / "split.json")), std::nullopt};
  if (fs::exists(dir / "content.bin")) {
    p.content = data::content_from_projected(data::read_content_file((dir / "content.bin").string()), p.split);
  }
  return p;
}

inline model::SeqModel build_model(const ExperimentConfig& c, std::uint64_t seed, const Prepared& p) {
  const data::ContentMatrix* content = nullptr;
  if (embeddings::uses_content(c.variant)) {
    if (!p.content) throw ValidationError(embeddings::to_string(c.variant) + ": content required");
    content = &*p.content;
  }
  auto cfg = c.model;
  cfg.seed = seed;
  auto table = embeddings::init_table(c.variant, content, p.split.num_items(), cfg.embedding_dim, c.delta_max, seed);
  return model::SeqModel(cfg, std::move(table), p.split.warm_items, p.split.cold_items);
}

inline model::TrainResult cmd_train(const ExperimentConfig& c, std::uint64_t seed, std::ostream& log) {
  const auto p = load_prepared(c);
  auto m = build_model(c, seed, p);
  const auto dir = c.seed_dir(seed);
  fs::create_directories(dir);
  std::ofstream train_log(dir / "train_log.csv");
  if (!train_log) throw DataError("cannot write '" + (dir / "train_log.csv").string() + "'");
  train_log << "epoch,step,loss,val_ndcg10\n";
  model::TrainHooks hooks;
  hooks.log_stream = &train_log;
  const auto result = model::train(m, p.split, hooks);
  save_checkpoint(dir / "checkpoint.bin", m, c, seed, p.split,
                  {{"best_epoch", result.best_epoch}, {"best_val_ndcg10", result.best_val_ndcg10},
                   {"steps", result.steps}});
  log << c.run_name() << " seed " << seed << ": best epoch " << result.best_epoch << " of "
      << result.log.size() << ", validation NDCG@10 " << result.best_val_ndcg10 << '\n';
  return result;
}

// Top-k lists for every case, encoded in fixed-size batches. Chunks are spread
// over `threads` workers; each case's list does not depend on the split.
inline std::vector<std::vector<data::ItemIndex>> model_rankings(const model::SeqModel& m,
                                                                std::span<const eval::EvalCase> cases,
                                                                std::size_t k, std::size_t threads) {
  const model::Recommender rec(m);
  constexpr std::size_t chunk = 256;
  const std::size_t chunks = (cases.size() + chunk - 1) / chunk;
  std::vector<std::vector<data::ItemIndex>> out(cases.size());
  auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t ch = first; ch < chunks; ch += step) {
      const std::size_t b = ch * chunk;
      const std::size_t e = std::min(cases.size(), b + chunk);
      std::vector<std::vector<data::ItemIndex>> inputs;
      for (std::size_t i = b; i < e; ++i) inputs.push_back(cases[i].input);
      auto lists = rec.recommend_batch(inputs, k, m.config().filter_seen);
      for (std::size_t i = b; i < e; ++i) out[i] = std::move(lists[i - b]);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline eval::MetricsReport evaluate_model(const model::SeqModel& m, const data::SplitDataset& split,
                                          std::size_t k, const eval::SegmentationSpec& seg, std::uint64_t seed,
                                          std::size_t threads) {
  const auto cases = eval::make_eval_cases(split, split.test_cases);
  const auto lists = model_rankings(m, cases, k, threads);
  std::vector<std::optional<eval::Rank>> ranks(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ranks[i] = eval::rank_of<data::ItemIndex>(lists[i], cases[i].ground_truth);
  }
  return eval::aggregate_ranks(cases, ranks, k, seg, seed);
}

inline void write_report(const fs::path& dir, const eval::MetricsReport& report) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw DataError("cannot write '" + (dir / "metrics.csv").string() + "'");
  eval::write_report_csv(csv, report);
  write_json(dir / "metrics.json", eval::report_to_json(report));
}

inline eval::MetricsReport cmd_evaluate(const ExperimentConfig& c, std::uint64_t seed,
                                        std::optional<fs::path> checkpoint, std::ostream& log) {
  const auto p = load_prepared(c);
  const auto path = checkpoint.value_or(c.seed_dir(seed) / "checkpoint.bin");
  const auto ckpt = load_checkpoint(path);
  check_mapping(ckpt, p.split);
  const auto report = evaluate_model(ckpt.model, p.split, c.k, c.segmentation, ckpt.seed, thread_count());
  const auto dir = path.parent_path();
  write_report(dir, report);
  write_json(dir / "run.json", to_json(c));
  const auto& total = report.segment("total");
  log << c.run_name() << " seed " << ckpt.seed << ": NDCG@" << c.k << " total "
      << eval::detail::format_value(total.ndcg.value_or(0.0)) << ", cold "
      << (report.segment("cold_gt").ndcg ? eval::detail::format_value(*report.segment("cold_gt").ndcg) : "NA")
      << '\n';
  return report;
}

inline eval::MetricsReport cmd_knn(const ExperimentConfig& c, std::ostream& log) {
  if (!c.content) throw ValidationError("knn: content required (set 'content' in the config)");
  const auto p = load_prepared(c);
  if (!p.content) throw ValidationError("knn: content required (prepared data has no content; rerun prepare)");
  const auto cases = eval::make_eval_cases(p.split, p.split.test_cases);
  const auto report =
      eval::evaluate(eval::knn_ranking(*p.content), cases, c.k, c.segmentation, 0, thread_count());
  const auto dir = fs::path(c.output_dir) / "knn";
  write_report(dir, report);
  log << "knn: NDCG@" << c.k << " total " << eval::detail::format_value(report.segment("total").ndcg.value_or(0.0))
      << ", excluded " << report.excluded << '\n';
  return report;
}

// Whether a seed directory already holds a finished run of exactly this config.
inline bool run_complete(const ExperimentConfig& c, std::uint64_t seed) {
  const auto dir = c.seed_dir(seed);
  if (!fs::exists(dir / "metrics.json") || !fs::exists(dir / "run.json")) return false;
  return read_json(dir / "run.json") == to_json(c);
}

// Train and evaluate one seed, reusing a finished identical run.
inline eval::MetricsReport run_seed(const ExperimentConfig& c, std::uint64_t seed, std::ostream& log) {
  if (run_complete(c, seed)) {
    log << c.run_name() << " seed " << seed << ": reusing finished run\n";
    return eval::report_from_json(read_json(c.seed_dir(seed) / "metrics.json"));
  }
  cmd_train(c, seed, log);
  return cmd_evaluate(c, seed, std::nullopt, log);
}

struct SweepRow {
  double delta_max = 0.0;
  std::optional<eval::MeanStd> total_ndcg;
  std::optional<eval::MeanStd> cold_ndcg;
};

inline void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "delta_max,total_ndcg_mean,total_ndcg_std,cold_ndcg_mean,cold_ndcg_std,runs\n";
  auto cell = [](const std::optional<eval::MeanStd>& v, bool std) {
    return v ? eval::detail::format_value(std ? v->std : v->mean) : std::string("NA");
  };
  for (const auto& r : rows) {
    out << eval::detail::format_value(r.delta_max) << ',' << cell(r.total_ndcg, false) << ','
        << cell(r.total_ndcg, true) << ',' << cell(r.cold_ndcg, false) << ',' << cell(r.cold_ndcg, true) << ','
        << (r.total_ndcg ? r.total_ndcg->runs : 0) << '\n';
  }
}

// Runs frozen_delta for every delta_max value and seed. Rows are ordered by
// delta_max; on failure the rows finished so far are still written.
inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& c, std::vector<double> values, std::ostream& log) {
  std::sort(values.begin(), values.end());
  const auto last = std::unique(values.begin(), values.end());
  if (last != values.end()) {
    log << "warning: duplicate delta_max values removed\n";
    values.erase(last, values.end());
  }
  if (values.size() < 2) throw ValidationError("sweep: need at least two distinct delta_max values");
  for (double v : values) {
    if (!(v >= 0.0 && v < 1.0)) throw ValidationError("sweep: delta_max values must lie in [0, 1)");
  }
  std::vector<SweepRow> rows;
  const auto path = fs::path(c.output_dir) / "sweep.csv";
  fs::create_directories(c.output_dir);
  try {
    for (double v : values) {
      auto run = c;
      run.variant = embeddings::Variant::FrozenDelta;
      run.delta_max = v;
      run.validate();
      std::vector<double> total, cold;
      for (auto seed : run.seeds) {
        const auto report = run_seed(run, seed, log);
        if (auto x = report.segment("total").ndcg) total.push_back(*x);
        if (auto x = report.segment("cold_gt").ndcg) cold.push_back(*x);
      }
      rows.push_back({v, eval::mean_std(total), eval::mean_std(cold)});
      write_sweep_csv(path, rows);
    }
  } catch (...) {
    write_sweep_csv(path, rows);
    throw;
  }
  return rows;
}

// ---- report ----

struct ReportTable {
  std::vector<std::string> models;
  std::vector<std::string> columns;
  // cells[row][col]
  std::vector<std::vector<std::optional<eval::MeanStd>>> cells;
  std::vector<std::vector<bool>> best;
};

// Reads every metrics.json under a run directory (the directory itself or its
// seed_* children).
inline std::vector<eval::MetricsReport> read_run_dir(const fs::path& dir) {
  std::vector<eval::MetricsReport> out;
  if (fs::exists(dir / "metrics.json")) {
    out.push_back(eval::report_from_json(read_json(dir / "metrics.json")));
    return out;
  }
  if (!fs::is_directory(dir)) throw DataError("report: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> children;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "metrics.json")) children.push_back(e.path());
  }
  std::sort(children.begin(), children.end());
  for (const auto& ch : children) out.push_back(eval::report_from_json(read_json(ch / "metrics.json")));
  if (out.empty()) throw DataError("report: no finished runs in '" + dir.string() + "'");
  return out;
}

inline eval::RunSummary summarize(const std::vector<eval::MetricsReport>& reports) {
  if (reports.size() >= 2) return eval::aggregate_runs(reports);
  eval::RunSummary s;
  s.k = reports.front().k;
  s.runs = 1;
  for (const auto& seg : reports.front().segments) {
    auto one = [](const std::optional<double>& v) -> std::optional<eval::MeanStd> {
      if (!v) return std::nullopt;
      return eval::MeanStd{*v, 0.0, 1};
    };
    s.segments.push_back({seg.name, one(seg.hr), one(seg.ndcg)});
  }
  return s;
}

// Rows are runs, columns {cold_gt, warm_gt, total} x {HR, NDCG}. The best mean
// per column, compared at the printed precision, is marked; ties mark all.
inline ReportTable build_report(const std::vector<std::pair<std::string, eval::RunSummary>>& runs) {
  if (runs.empty()) throw ValidationError("report: no runs given");
  const auto& first = runs.front().second;
  for (const auto& [name, s] : runs) {
    bool same = s.k == first.k && s.segments.size() == first.segments.size();
    for (std::size_t i = 0; same && i < s.segments.size(); ++i) same = s.segments[i].name == first.segments[i].name;
    if (!same) throw ValidationError("report: run '" + name + "' uses a different k or segmentation");
  }
  ReportTable t;
  const std::string k = std::to_string(first.k);
  const std::vector<std::string> segments = {"cold_gt", "warm_gt", "total"};
  for (const auto& seg : segments) {
    t.columns.push_back(seg + " HR@" + k);
    t.columns.push_back(seg + " NDCG@" + k);
  }
  for (const auto& [name, s] : runs) {
    t.models.push_back(name);
    std::vector<std::optional<eval::MeanStd>> row;
    for (const auto& seg : segments) {
      row.push_back(s.segment(seg).hr);
      row.push_back(s.segment(seg).ndcg);
    }
    t.cells.push_back(std::move(row));
  }
  t.best.assign(t.models.size(), std::vector<bool>(t.columns.size(), false));
  for (std::size_t col = 0; col < t.columns.size(); ++col) {
    std::optional<long long> top;
    auto shown = [](double v) { return std::llround(v * 1000.0); };
    for (const auto& row : t.cells) {
      if (row[col]) top = std::max(top.value_or(shown(row[col]->mean)), shown(row[col]->mean));
    }
    if (!top) continue;
    for (std::size_t r = 0; r < t.models.size(); ++r) {
      t.best[r][col] = t.cells[r][col] && shown(t.cells[r][col]->mean) == *top;
    }
  }
  return t;
}

inline void write_report_table(std::ostream& out, const ReportTable& t) {
  out << "model";
  for (const auto& c : t.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < t.models.size(); ++r) {
    out << t.models[r];
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      out << ',' << eval::format_mean_std(t.cells[r][c]) << (t.best[r][c] ? "*" : "");
    }
    out << '\n';
  }
}

// Long format over every segment, for plotting the stratified analyses.
inline void write_segment_table(std::ostream& out,
                                const std::vector<std::pair<std::string, eval::RunSummary>>& runs) {
  out << "model,segment,metric,mean,std,runs\n";
  for (const auto& [name, s] : runs) {
    for (const auto& seg : s.segments) {
      for (const auto& [metric, v] : {std::pair{"HR", seg.hr}, std::pair{"NDCG", seg.ndcg}}) {
        out << name << ',' << seg.name << ',' << metric << ',';
        if (v) {
          out << eval::detail::format_value(v->mean) << ',' << eval::detail::format_value(v->std) << ',' << v->runs;
        } else {
          out << "NA,NA,0";
        }
        out << '\n';
      }
    }
  }
}

inline ReportTable cmd_report(const std::vector<fs::path>& dirs, const std::optional<fs::path>& out_dir,
                              std::ostream& out) {
  if (dirs.empty()) throw ValidationError("report: give at least one run directory");
  std::vector<std::pair<std::string, eval::RunSummary>> runs;
  for (const auto& d : dirs) {
    const auto name = fs::path(d).lexically_normal().filename().string();
    runs.emplace_back(name.empty() ? d.string() : name, summarize(read_run_dir(d)));
  }
  const auto table = build_report(runs);
  write_report_table(out, table);
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::ofstream a(*out_dir / "report.csv");
    std::ofstream b(*out_dir / "report_segments.csv");
    if (!a || !b) throw DataError("cannot write report files in '" + out_dir->string() + "'");
    write_report_table(a, table);
    write_segment_table(b, runs);
  }
  return table;
}

// ---- synthetic data ----

// Settings sized for the synthetic catalog: smaller model and batches so a
// run takes about a minute on one core.
inline ExperimentConfig synthetic_experiment_config() {
  ExperimentConfig c;
  c.interactions = "interactions.csv";
  c.content = "content.txt";
  c.preprocess.n_core = 3;
  c.model.embedding_dim = 32;
  c.model.max_seq_len = 32;
  c.model.batch_size = 32;
  c.model.dropout = 0.2;
  c.output_dir = "runs";
  return c;
}

inline void cmd_synth(const fs::path& out_dir, const SynthConfig& sc, std::ostream& log) {
  const auto data = generate_synthetic(sc);
  fs::create_directories(out_dir);
  write_interactions_csv((out_dir / "interactions.csv").string(), data.interactions);
  data::write_content_text((out_dir / "content.txt").string(), data.content);
  write_json(out_dir / "config.json", to_json(synthetic_experiment_config()));
  log << "wrote " << data.interactions.size() << " interactions, " << data.content.ids.size() << " items ("
      << data.cold_item_ids.size() << " released late) to " << out_dir.string() << '\n';
}

}  // namespace coldrec::cli
