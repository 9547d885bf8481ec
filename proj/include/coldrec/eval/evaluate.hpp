#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "coldrec/data/split.hpp"
#include "coldrec/error.hpp"
#include "coldrec/eval/metrics.hpp"

namespace coldrec::eval {

using data::ItemIndex;

struct EvalCase {
  std::vector<ItemIndex> input;
  ItemIndex ground_truth = 0;
  bool gt_is_cold = false;
  double cold_input_fraction = 0.0;
  std::size_t gt_train_frequency = 0;
};

inline std::vector<EvalCase> make_eval_cases(const data::SplitDataset& split,
                                             const std::vector<data::SplitCase>& cases) {
  std::vector<EvalCase> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    EvalCase e;
    e.input = c.input;
    e.ground_truth = c.ground_truth;
    e.gt_train_frequency = split.train_frequency.at(static_cast<std::size_t>(c.ground_truth));
    e.gt_is_cold = e.gt_train_frequency == 0;
    std::size_t cold = 0;
    for (ItemIndex i : c.input) cold += split.is_warm(i) ? 0 : 1;
    e.cold_input_fraction =
        c.input.empty() ? 0.0 : static_cast<double>(cold) / static_cast<double>(c.input.size());
    out.push_back(std::move(e));
  }
  return out;
}

// Bins for the stratified analyses. The first cold-input bin holds fraction
// exactly 0; bin j > 0 holds (edges[j-1], edges[j]] with an implicit 0 before
// edges[0]. Frequency bucket j holds counts in (freq_upper[j-1], freq_upper[j]];
// the first bucket is exactly 0 and counts above the last bound go to "+".
struct SegmentationSpec {
  std::vector<double> cold_input_edges = {0.25, 0.5, 0.75, 1.0};
  std::vector<std::size_t> frequency_upper = {0, 2, 5, 10, 20, 50};

  bool operator==(const SegmentationSpec&) const = default;

  std::vector<std::string> cold_input_names() const {
    std::vector<std::string> names{"cold_input:0"};
    double lo = 0.0;
    for (double hi : cold_input_edges) {
      names.push_back("cold_input:(" + format_edge(lo) + "," + format_edge(hi) + "]");
      lo = hi;
    }
    return names;
  }

  std::vector<std::string> frequency_names() const {
    std::vector<std::string> names;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < frequency_upper.size(); ++i) {
      const std::size_t hi = frequency_upper[i];
      if (i == 0 && hi == 0) {
        names.push_back("freq:0");
      } else {
        names.push_back("freq:" + std::to_string(lo) + "-" + std::to_string(hi));
      }
      lo = hi + 1;
    }
    names.push_back("freq:" + std::to_string(lo) + "+");
    return names;
  }

  std::size_t cold_input_bin(double fraction) const {
    if (fraction <= 0.0) return 0;
    for (std::size_t j = 0; j < cold_input_edges.size(); ++j) {
      if (fraction <= cold_input_edges[j] + 1e-12) return j + 1;
    }
    return cold_input_edges.size();
  }

  std::size_t frequency_bucket(std::size_t freq) const {
    for (std::size_t j = 0; j < frequency_upper.size(); ++j) {
      if (freq <= frequency_upper[j]) return j;
    }
    return frequency_upper.size();
  }

 private:
  static std::string format_edge(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }
};

struct SegmentResult {
  std::string name;
  std::size_t count = 0;
  // Absent when count == 0.
  std::optional<double> hr;
  std::optional<double> ndcg;

  bool operator==(const SegmentResult&) const = default;
};

struct MetricsReport {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t excluded = 0;
  std::vector<SegmentResult> segments;

  const SegmentResult& segment(const std::string& name) const {
    for (const auto& s : segments) {
      if (s.name == name) return s;
    }
    throw std::out_of_range("report has no segment '" + name + "'");
  }

  bool operator==(const MetricsReport&) const = default;
};

// Aggregates per-case ranks. Cases with no ranking (nullopt entry in
// `rankings`) are excluded from every segment and counted separately.
inline MetricsReport aggregate_ranks(std::span<const EvalCase> cases,
                                     std::span<const std::optional<Rank>> ranks, std::size_t k,
                                     const SegmentationSpec& seg, std::uint64_t seed) {
  MetricsReport report;
  report.k = k;
  report.seed = seed;
  std::vector<std::string> names{"total", "cold_gt", "warm_gt"};
  const auto ci = seg.cold_input_names();
  const auto fq = seg.frequency_names();
  names.insert(names.end(), ci.begin(), ci.end());
  names.insert(names.end(), fq.begin(), fq.end());

  std::vector<double> hr(names.size(), 0.0);
  std::vector<double> nd(names.size(), 0.0);
  std::vector<std::size_t> count(names.size(), 0);
  const std::size_t ci_base = 3;
  const std::size_t fq_base = ci_base + ci.size();

  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!ranks[i]) {
      ++report.excluded;
      continue;
    }
    const double h = hr_at_k(*ranks[i], k);
    const double n = ndcg_at_k(*ranks[i], k);
    const std::size_t slots[] = {0, cases[i].gt_is_cold ? std::size_t{1} : std::size_t{2},
                                 ci_base + seg.cold_input_bin(cases[i].cold_input_fraction),
                                 fq_base + seg.frequency_bucket(cases[i].gt_train_frequency)};
    for (std::size_t s : slots) {
      hr[s] += h;
      nd[s] += n;
      ++count[s];
    }
  }
  for (std::size_t s = 0; s < names.size(); ++s) {
    SegmentResult r{names[s], count[s], std::nullopt, std::nullopt};
    if (count[s]) {
      r.hr = hr[s] / static_cast<double>(count[s]);
      r.ndcg = nd[s] / static_cast<double>(count[s]);
    }
    report.segments.push_back(std::move(r));
  }
  return report;
}

// Returns the top-k list for a case, or nullopt to exclude the case.
using RankingFn = std::function<std::optional<std::vector<ItemIndex>>(const EvalCase&, std::size_t k)>;

// Ranks every case (optionally across `threads` workers; results are folded
// in case order) and aggregates the metrics per segment.
inline MetricsReport evaluate(const RankingFn& recommender, std::span<const EvalCase> cases, std::size_t k,
                              const SegmentationSpec& seg = {}, std::uint64_t seed = 0,
                              std::size_t threads = 1) {
  std::vector<std::optional<Rank>> ranks(cases.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto list = recommender(cases[i], k);
      if (!list) continue;
      ranks[i] = rank_of<ItemIndex>(*list, cases[i].ground_truth);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, cases.size()));
  if (threads == 1) {
    work(0, cases.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (cases.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * per;
      const std::size_t e = std::min(cases.size(), b + per);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return aggregate_ranks(cases, ranks, k, seg, seed);
}

namespace detail {

inline std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

// segment,metric,k,value,count,seed; absent values are written as NA.
inline void write_report_csv(std::ostream& out, const MetricsReport& report) {
  out << "segment,metric,k,value,count,seed\n";
  for (const auto& s : report.segments) {
    for (const auto& [metric, value] : {std::pair{"HR", s.hr}, std::pair{"NDCG", s.ndcg}}) {
      out << s.name << ',' << metric << ',' << report.k << ','
          << (value ? detail::format_value(*value) : "NA") << ',' << s.count << ',' << report.seed << '\n';
    }
  }
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["excluded"] = report.excluded;
  auto& segs = j["segments"];
  segs = nlohmann::ordered_json::object();
  for (const auto& s : report.segments) {
    nlohmann::ordered_json e;
    e["count"] = s.count;
    e["hr"] = s.hr ? nlohmann::ordered_json(*s.hr) : nlohmann::ordered_json(nullptr);
    e["ndcg"] = s.ndcg ? nlohmann::ordered_json(*s.ndcg) : nlohmann::ordered_json(nullptr);
    segs[s.name] = std::move(e);
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::ordered_json& j) {
  MetricsReport r;
  r.k = j.at("k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.excluded = j.value("excluded", std::size_t{0});
  for (const auto& [name, e] : j.at("segments").items()) {
    SegmentResult s{name, e.at("count").get<std::size_t>(), std::nullopt, std::nullopt};
    if (!e.at("hr").is_null()) s.hr = e.at("hr").get<double>();
    if (!e.at("ndcg").is_null()) s.ndcg = e.at("ndcg").get<double>();
    r.segments.push_back(std::move(s));
  }
  return r;
}

}  // namespace coldrec::eval
