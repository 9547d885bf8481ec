#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "coldrec/data/content.hpp"
#include "coldrec/data/interactions.hpp"
#include "coldrec/error.hpp"

namespace coldrec::cli {

// Content-driven synthetic world. Items live in a latent space made of
// clusters; their content vectors are a noisy linear image of the latent
// position, while behaviour follows the latent position plus an item-specific
// offset that content cannot see. Users drift between nearby items with a
// taste bias. A held-out set of items is released at the 90% time quantile
// and only appears afterwards.
struct SynthConfig {
  std::size_t num_users = 2000;
  std::size_t num_items = 500;
  std::size_t num_cold = 50;
  std::size_t num_clusters = 50;
  std::size_t latent_dim = 16;
  std::size_t content_dim = 48;
  double mean_length = 12.0;
  std::size_t min_length = 4;
  double cluster_spread = 0.3;
  double behaviour_offset = 0.25;  // std of the content-invisible item offset
  double content_noise = 0.2;
  double transition_weight = 10.0;
  double taste_weight = 2.0;
  double popularity_std = 1.0;
  double cold_boost = 0.5;  // log-odds bonus of released items after release
  double release_quantile = 0.9;
  std::uint64_t seed = 7;
};

struct SynthData {
  std::vector<data::Interaction> interactions;
  data::ContentFile content;
  std::vector<std::string> cold_item_ids;
};

inline std::string synth_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

inline SynthData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_cold >= cfg.num_items) throw ValidationError("synth: num_cold must be below num_items");
  if (cfg.num_users == 0 || cfg.num_items == 0) throw ValidationError("synth: empty world");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t r = cfg.latent_dim;
  const std::size_t n_items = cfg.num_items;

  std::vector<std::vector<double>> centers(cfg.num_clusters, std::vector<double>(r));
  for (auto& c : centers)
    for (double& x : c) x = normal(rng);

  std::vector<std::vector<double>> latent(n_items, std::vector<double>(r));
  std::vector<std::vector<double>> behaviour(n_items, std::vector<double>(r));
  std::vector<double> popularity(n_items);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, cfg.num_clusters - 1);
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto& c = centers[pick_cluster(rng)];
    for (std::size_t j = 0; j < r; ++j) latent[i][j] = c[j] + cfg.cluster_spread * normal(rng);
    double len = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      behaviour[i][j] = latent[i][j] + cfg.behaviour_offset * normal(rng);
      len += behaviour[i][j] * behaviour[i][j];
    }
    len = std::sqrt(len);
    for (double& x : behaviour[i]) x /= len;
    popularity[i] = cfg.popularity_std * normal(rng);
  }

  // The last num_cold item indices are the late releases.
  std::vector<std::uint8_t> late(n_items, 0);
  for (std::size_t i = n_items - cfg.num_cold; i < n_items; ++i) late[i] = 1;

  SynthData out;
  out.content.dim = cfg.content_dim;
  std::vector<std::vector<double>> mixing(cfg.content_dim, std::vector<double>(r));
  for (auto& row : mixing)
    for (double& x : row) x = normal(rng) / std::sqrt(static_cast<double>(r));
  for (std::size_t i = 0; i < n_items; ++i) {
    std::vector<double> v(cfg.content_dim);
    for (std::size_t d = 0; d < cfg.content_dim; ++d) {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += mixing[d][j] * latent[i][j];
      v[d] = s + cfg.content_noise * normal(rng);
    }
    out.content.ids.push_back(synth_id('i', i));
    out.content.vectors.push_back(std::move(v));
    if (late[i]) out.cold_item_ids.push_back(synth_id('i', i));
  }

  // Event times first, so the release time is the global quantile.
  constexpr std::int64_t horizon = 10'000'000;
  std::uniform_int_distribution<std::int64_t> when(0, horizon - 1);
  std::poisson_distribution<std::size_t> extra(std::max(0.0, cfg.mean_length - static_cast<double>(cfg.min_length)));
  std::vector<std::vector<std::int64_t>> times(cfg.num_users);
  std::vector<std::int64_t> all_times;
  for (auto& t : times) {
    t.resize(cfg.min_length + extra(rng));
    for (auto& x : t) x = when(rng);
    std::sort(t.begin(), t.end());
    all_times.insert(all_times.end(), t.begin(), t.end());
  }
  std::sort(all_times.begin(), all_times.end());
  const auto release_at = all_times[static_cast<std::size_t>(
      std::floor(cfg.release_quantile * static_cast<double>(all_times.size() - 1)))];

  std::vector<double> logits(n_items);
  std::vector<double> taste(r);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const auto& c = centers[pick_cluster(rng)];
    double len = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      taste[j] = c[j] + cfg.cluster_spread * normal(rng);
      len += taste[j] * taste[j];
    }
    len = std::sqrt(len);
    for (double& x : taste) x /= len;

    std::ptrdiff_t prev = -1;
    for (std::int64_t t : times[u]) {
      const bool released = t > release_at;
      double mx = -1e300;
      for (std::size_t i = 0; i < n_items; ++i) {
        if (late[i] && !released) {
          logits[i] = -1e300;
          continue;
        }
        double s = popularity[i] + (late[i] ? cfg.cold_boost : 0.0);
        double tv = 0.0;
        for (std::size_t j = 0; j < r; ++j) tv += taste[j] * behaviour[i][j];
        s += cfg.taste_weight * tv;
        if (prev >= 0) {
          if (static_cast<std::size_t>(prev) == i) {
            logits[i] = -1e300;
            continue;
          }
          double pv = 0.0;
          for (std::size_t j = 0; j < r; ++j) pv += behaviour[static_cast<std::size_t>(prev)][j] * behaviour[i][j];
          s += cfg.transition_weight * pv;
        }
        logits[i] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (double& l : logits) z += (l = (l <= -1e299 ? 0.0 : std::exp(l - mx)));
      std::uniform_real_distribution<double> uni(0.0, z);
      double target = uni(rng);
      std::size_t chosen = 0;
      for (std::size_t i = 0; i < n_items; ++i) {
        target -= logits[i];
        if (logits[i] > 0.0) chosen = i;
        if (target <= 0.0 && logits[i] > 0.0) break;
      }
      out.interactions.push_back(
          {synth_id('u', u), synth_id('i', chosen), t, std::nullopt, out.interactions.size()});
      prev = static_cast<std::ptrdiff_t>(chosen);
    }
  }
  return out;
}

inline void write_interactions_csv(const std::string& path, const std::vector<data::Interaction>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write interactions file '" + path + "'");
  out << "user_id,item_id,timestamp\n";
  for (const auto& x : rows) out << x.user_id << ',' << x.item_id << ',' << x.timestamp << '\n';
}

}  // namespace coldrec::cli
