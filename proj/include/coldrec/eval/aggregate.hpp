#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "coldrec/error.hpp"
#include "coldrec/eval/evaluate.hpp"

namespace coldrec::eval {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t runs = 0;
};

inline std::string format_mean_std(const std::optional<MeanStd>& v) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", v->mean, v->std);
  return buf;
}

inline std::optional<MeanStd> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  MeanStd out;
  out.runs = xs.size();
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

struct SegmentSummary {
  std::string name;
  std::optional<MeanStd> hr;
  std::optional<MeanStd> ndcg;
};

struct RunSummary {
  std::size_t k = 10;
  std::size_t runs = 0;
  std::vector<SegmentSummary> segments;

  const SegmentSummary& segment(const std::string& name) const {
    for (const auto& s : segments) {
      if (s.name == name) return s;
    }
    throw std::out_of_range("summary has no segment '" + name + "'");
  }
};

// Mean and sample std per segment over runs; runs where a segment is absent
// do not contribute to it.
inline RunSummary aggregate_runs(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2) throw ValidationError("aggregate_runs: need at least two reports");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    bool same = r.k == first.k && r.segments.size() == first.segments.size();
    for (std::size_t s = 0; same && s < r.segments.size(); ++s) {
      same = r.segments[s].name == first.segments[s].name;
    }
    if (!same) throw ValidationError("aggregate_runs: reports use different k or segmentation");
  }
  RunSummary out;
  out.k = first.k;
  out.runs = reports.size();
  for (std::size_t s = 0; s < first.segments.size(); ++s) {
    std::vector<double> hr, nd;
    for (const auto& r : reports) {
      if (r.segments[s].hr) hr.push_back(*r.segments[s].hr);
      if (r.segments[s].ndcg) nd.push_back(*r.segments[s].ndcg);
    }
    out.segments.push_back({first.segments[s].name, mean_std(hr), mean_std(nd)});
  }
  return out;
}

}  // namespace coldrec::eval
