#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coldrec/data/interactions.hpp"
#include "coldrec/data/preprocess.hpp"
#include "coldrec/data/split.hpp"
#include "coldrec/embeddings/table.hpp"
#include "coldrec/error.hpp"
#include "coldrec/eval/evaluate.hpp"
#include "coldrec/model/config.hpp"

namespace coldrec::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct ExperimentConfig {
  std::string interactions;
  std::optional<std::string> content;
  bool content_projected = false;  // content file already holds m-dim item vectors
  data::ColumnSchema columns;
  data::PreprocessOptions preprocess{.n_core = 3};
  data::SplitOptions split;
  model::ModelConfig model;
  embeddings::Variant variant = embeddings::Variant::FrozenDelta;
  std::optional<double> delta_max = 0.5;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t k = 10;
  eval::SegmentationSpec segmentation;
  std::string output_dir = "runs";

  void validate() const {
    if (interactions.empty()) throw ValidationError("config: 'interactions' path is required");
    if (variant == embeddings::Variant::FrozenDelta) {
      if (!delta_max) throw ValidationError("config: variant frozen_delta requires delta_max");
      if (!(*delta_max >= 0.0 && *delta_max < 1.0)) {
        throw ValidationError("config: delta_max must lie in [0, 1)");
      }
    } else if (delta_max) {
      throw ValidationError("config: delta_max is only valid with variant frozen_delta");
    }
    if (embeddings::uses_content(variant) && !content) {
      throw ValidationError("config: variant " + embeddings::to_string(variant) + " requires a content file");
    }
    if (seeds.empty()) throw ValidationError("config: seeds must not be empty");
    auto sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ValidationError("config: seeds must be distinct");
    }
    if (k == 0) throw ValidationError("config: k must be positive");
    if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
      throw ValidationError("config: split.train_fraction must lie in (0, 1)");
    }
    if (!(split.validation_user_fraction > 0.0 && split.validation_user_fraction < 1.0)) {
      throw ValidationError("config: split.validation_user_fraction must lie in (0, 1)");
    }
    if (preprocess.user_sample_size && *preprocess.user_sample_size == 0) {
      throw ValidationError("config: preprocess.user_sample_size must be positive");
    }
    const auto& edges = segmentation.cold_input_edges;
    if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()) || edges.front() <= 0.0 ||
        edges.back() != 1.0 || std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
      throw ValidationError("config: cold_input_edges must increase strictly within (0, 1] and end at 1");
    }
    const auto& fq = segmentation.frequency_upper;
    if (fq.empty() || std::adjacent_find(fq.begin(), fq.end(), std::greater_equal<>()) != fq.end()) {
      throw ValidationError("config: frequency_upper must increase strictly");
    }
    model.validate();
  }

  // Directory holding one variant's runs, e.g. <output_dir>/frozen_delta_0.5.
  std::string run_name() const {
    std::string name = embeddings::to_string(variant);
    if (delta_max) {
      std::ostringstream os;
      os << *delta_max;
      name += "_" + os.str();
    }
    return name;
  }

  fs::path prepared_dir() const { return fs::path(output_dir) / "prepared"; }
  fs::path variant_dir() const { return fs::path(output_dir) / run_name(); }
  fs::path seed_dir(std::uint64_t seed) const { return variant_dir() / ("seed_" + std::to_string(seed)); }
};

template <class T>
std::optional<T> optional_field(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["interactions"] = c.interactions;
  j["content"] = c.content ? Json(*c.content) : Json(nullptr);
  j["content_projected"] = c.content_projected;
  j["columns"] = {{"user", c.columns.user},
                  {"item", c.columns.item},
                  {"timestamp", c.columns.timestamp},
                  {"weight", c.columns.weight}};
  const auto& p = c.preprocess;
  j["preprocess"] = {{"min_weight", p.min_weight ? Json(*p.min_weight) : Json(nullptr)},
                     {"user_sample_size", p.user_sample_size ? Json(*p.user_sample_size) : Json(nullptr)},
                     {"sample_seed", p.sample_seed},
                     {"dedup_consecutive", p.dedup_consecutive},
                     {"n_core", p.n_core}};
  j["split"] = {{"train_fraction", c.split.train_fraction},
                {"validation_user_fraction", c.split.validation_user_fraction},
                {"seed", c.split.seed}};
  const auto& m = c.model;
  j["model"] = {{"embedding_dim", m.embedding_dim},
                {"num_blocks", m.num_blocks},
                {"num_heads", m.num_heads},
                {"dropout", m.dropout},
                {"max_seq_len", m.max_seq_len},
                {"batch_size", m.batch_size},
                {"learning_rate", m.learning_rate},
                {"max_epochs", m.max_epochs},
                {"patience", m.patience},
                {"cold_input", model::to_string(m.cold_input)},
                {"filter_seen", m.filter_seen}};
  j["variant"] = embeddings::to_string(c.variant);
  j["delta_max"] = c.delta_max ? Json(*c.delta_max) : Json(nullptr);
  j["seeds"] = c.seeds;
  j["k"] = c.k;
  j["segmentation"] = {{"cold_input_edges", c.segmentation.cold_input_edges},
                       {"frequency_upper", c.segmentation.frequency_upper}};
  j["output_dir"] = c.output_dir;
  return j;
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError("config: unknown key '" + where + key + "'");
    }
  }
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig from_json(const Json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"interactions", "content", "content_projected", "columns", "preprocess", "split", "model",
                    "variant", "delta_max", "seeds", "k", "segmentation", "output_dir"},
                   "");
    c.interactions = j.value("interactions", "");
    c.content = optional_field<std::string>(j, "content");
    c.content_projected = j.value("content_projected", false);
    if (j.contains("columns")) {
      const auto& s = j.at("columns");
      reject_unknown(s, {"user", "item", "timestamp", "weight"}, "columns.");
      c.columns.user = s.value("user", c.columns.user);
      c.columns.item = s.value("item", c.columns.item);
      c.columns.timestamp = s.value("timestamp", c.columns.timestamp);
      c.columns.weight = s.value("weight", c.columns.weight);
    }
    if (j.contains("preprocess")) {
      const auto& s = j.at("preprocess");
      reject_unknown(s, {"min_weight", "user_sample_size", "sample_seed", "dedup_consecutive", "n_core"},
                     "preprocess.");
      c.preprocess.min_weight = optional_field<double>(s, "min_weight");
      c.preprocess.user_sample_size = optional_field<std::size_t>(s, "user_sample_size");
      c.preprocess.sample_seed = s.value("sample_seed", c.preprocess.sample_seed);
      c.preprocess.dedup_consecutive = s.value("dedup_consecutive", c.preprocess.dedup_consecutive);
      c.preprocess.n_core = s.value("n_core", c.preprocess.n_core);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown(s, {"train_fraction", "validation_user_fraction", "seed"}, "split.");
      c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
      c.split.validation_user_fraction = s.value("validation_user_fraction", c.split.validation_user_fraction);
      c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("model")) {
      const auto& s = j.at("model");
      reject_unknown(s,
                     {"embedding_dim", "num_blocks", "num_heads", "dropout", "max_seq_len", "batch_size",
                      "learning_rate", "max_epochs", "patience", "cold_input", "filter_seen"},
                     "model.");
      auto& m = c.model;
      m.embedding_dim = s.value("embedding_dim", m.embedding_dim);
      m.num_blocks = s.value("num_blocks", m.num_blocks);
      m.num_heads = s.value("num_heads", m.num_heads);
      m.dropout = s.value("dropout", m.dropout);
      m.max_seq_len = s.value("max_seq_len", m.max_seq_len);
      m.batch_size = s.value("batch_size", m.batch_size);
      m.learning_rate = s.value("learning_rate", m.learning_rate);
      m.max_epochs = s.value("max_epochs", m.max_epochs);
      m.patience = s.value("patience", m.patience);
      if (s.contains("cold_input")) m.cold_input = model::parse_cold_input_policy(s.at("cold_input"));
      m.filter_seen = s.value("filter_seen", m.filter_seen);
    }
    if (j.contains("variant")) {
      c.variant = embeddings::parse_variant(j.at("variant").get<std::string>());
      // an explicit variant without delta_max means no delta
      if (!j.contains("delta_max")) c.delta_max.reset();
    }
    if (j.contains("delta_max")) c.delta_max = optional_field<double>(j, "delta_max");
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      c.seeds = s.is_array() ? s.get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{s.get<std::uint64_t>()};
    }
    c.k = j.value("k", c.k);
    if (j.contains("segmentation")) {
      const auto& s = j.at("segmentation");
      reject_unknown(s, {"cold_input_edges", "frequency_upper"}, "segmentation.");
      if (s.contains("cold_input_edges")) {
        c.segmentation.cold_input_edges = s.at("cold_input_edges").get<std::vector<double>>();
      }
      if (s.contains("frequency_upper")) {
        c.segmentation.frequency_upper = s.at("frequency_upper").get<std::vector<std::size_t>>();
      }
    }
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

// Applies a flat override such as ("model.embedding_dim", "32") or
// ("seeds", "1,2,3"). The value is parsed as JSON when possible, otherwise
// taken as a string; comma lists become arrays.
inline void apply_override(Json& j, const std::string& key, const std::string& raw) {
  if (key.empty()) throw ValidationError("config: empty override key");
  Json value;
  auto parse = [](const std::string& s) {
    Json v = Json::parse(s, nullptr, false);
    return v.is_discarded() ? Json(s) : v;
  };
  if (raw.find(',') != std::string::npos && raw.front() != '[') {
    value = Json::array();
    std::stringstream ss(raw);
    std::string part;
    while (std::getline(ss, part, ',')) value.push_back(parse(part));
  } else {
    value = parse(raw);
  }
  Json* node = &j;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = Json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

// Paths inside the config are taken relative to the config file's directory.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("config: '" + path + "' is not a JSON object");
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  ExperimentConfig c = from_json(j);
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.interactions);
  if (c.content) resolve(*c.content);
  resolve(c.output_dir);
  c.validate();
  return c;
}

}  // namespace coldrec::cli
