#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldrec/data/split.hpp"
#include "coldrec/error.hpp"

namespace coldrec::cli {

using Json = nlohmann::ordered_json;

inline Json cases_to_json(const std::vector<data::SplitCase>& cases) {
  Json out = Json::array();
  for (const auto& c : cases) out.push_back({{"user", c.user}, {"input", c.input}, {"ground_truth", c.ground_truth}});
  return out;
}

inline std::vector<data::SplitCase> cases_from_json(const Json& j) {
  std::vector<data::SplitCase> out;
  for (const auto& e : j) {
    out.push_back({e.at("user").get<data::UserIndex>(), e.at("input").get<std::vector<data::ItemIndex>>(),
                   e.at("ground_truth").get<data::ItemIndex>()});
  }
  return out;
}

inline Json split_to_json(const data::SplitDataset& s) {
  Json j;
  j["item_ids"] = s.item_ids;
  j["user_ids"] = s.user_ids;
  j["boundary_timestamp"] = s.boundary_timestamp;
  j["train_interactions"] = s.train_interactions;
  j["warm_items"] = s.warm_items;
  j["cold_items"] = s.cold_items;
  j["train_frequency"] = s.train_frequency;
  j["train_sequences"] = s.train_sequences;
  j["validation_cases"] = cases_to_json(s.validation_cases);
  j["test_cases"] = cases_to_json(s.test_cases);
  return j;
}

inline data::SplitDataset split_from_json(const Json& j) {
  data::SplitDataset s;
  try {
    s.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    s.user_ids = j.at("user_ids").get<std::vector<std::string>>();
    s.boundary_timestamp = j.at("boundary_timestamp").get<std::int64_t>();
    s.train_interactions = j.at("train_interactions").get<std::size_t>();
    s.warm_items = j.at("warm_items").get<std::vector<data::ItemIndex>>();
    s.cold_items = j.at("cold_items").get<std::vector<data::ItemIndex>>();
    s.train_frequency = j.at("train_frequency").get<std::vector<std::size_t>>();
    s.train_sequences = j.at("train_sequences").get<std::vector<std::vector<data::ItemIndex>>>();
    s.validation_cases = cases_from_json(j.at("validation_cases"));
    s.test_cases = cases_from_json(j.at("test_cases"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split file: ") + e.what());
  }
  if (s.train_frequency.size() != s.item_ids.size()) throw DataError("split file: item tables disagree");
  return s;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("'" + path.string() + "' is not valid JSON");
  return j;
}

inline Json stats_to_json(const data::DatasetStatistics& s) {
  return {{"users", s.users},
          {"items", s.items},
          {"interactions", s.interactions},
          {"average_length", s.average_length},
          {"cold_gt_percent", s.cold_gt_percent}};
}

inline void write_stats_csv(const std::filesystem::path& path, const data::DatasetStatistics& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.2f,%.2f\n", s.users, s.items, s.interactions, s.average_length,
                s.cold_gt_percent);
  out << "users,items,interactions,average_length,cold_gt_percent\n" << buf;
}

}  // namespace coldrec::cli
