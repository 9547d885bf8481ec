#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coldrec/error.hpp"

namespace coldrec::data {

using ItemIndex = std::int64_t;
using UserIndex = std::int64_t;

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  std::optional<double> weight;
  // Position in the source file; breaks timestamp ties.
  std::size_t order = 0;

  bool operator==(const Interaction&) const = default;
};

// Interactions kept in (timestamp, order) order with dense indices assigned by
// first appearance in that order.
class InteractionLog {
 public:
  InteractionLog() = default;

  explicit InteractionLog(std::vector<Interaction> interactions)
      : interactions_(std::move(interactions)) {
    std::stable_sort(interactions_.begin(), interactions_.end(),
                     [](const Interaction& a, const Interaction& b) {
                       if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                       return a.order < b.order;
                     });
    for (const auto& x : interactions_) {
      if (item_index_.emplace(x.item_id, static_cast<ItemIndex>(item_ids_.size())).second) {
        item_ids_.push_back(x.item_id);
      }
      if (user_index_.emplace(x.user_id, static_cast<UserIndex>(user_ids_.size())).second) {
        user_ids_.push_back(x.user_id);
      }
    }
  }

  const std::vector<Interaction>& interactions() const { return interactions_; }
  std::size_t size() const { return interactions_.size(); }
  bool empty() const { return interactions_.empty(); }

  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_users() const { return user_ids_.size(); }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }

  ItemIndex item(const std::string& id) const { return item_index_.at(id); }
  UserIndex user(const std::string& id) const { return user_index_.at(id); }
  std::optional<ItemIndex> find_item(const std::string& id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }

  // Positions into interactions(), grouped per dense user index, time-ordered.
  std::vector<std::vector<std::size_t>> user_rows() const {
    std::vector<std::vector<std::size_t>> rows(user_ids_.size());
    for (std::size_t i = 0; i < interactions_.size(); ++i) {
      rows[user_index_.at(interactions_[i].user_id)].push_back(i);
    }
    return rows;
  }

  // Per-user item-index sequences in time order.
  std::vector<std::vector<ItemIndex>> sequences() const {
    std::vector<std::vector<ItemIndex>> seqs(user_ids_.size());
    for (const auto& x : interactions_) {
      seqs[user_index_.at(x.user_id)].push_back(item_index_.at(x.item_id));
    }
    return seqs;
  }

 private:
  std::vector<Interaction> interactions_;
  std::vector<std::string> item_ids_;
  std::vector<std::string> user_ids_;
  std::unordered_map<std::string, ItemIndex> item_index_;
  std::unordered_map<std::string, UserIndex> user_index_;
};

// Column names to read from the CSV header.
struct ColumnSchema {
  std::string user = "user_id";
  std::string item = "item_id";
  std::string timestamp = "timestamp";
  std::string weight = "weight";
};

namespace detail {

// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace detail

inline InteractionLog parse_interactions(std::istream& in, const ColumnSchema& schema = {},
                                         const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(source + ": no interactions");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(detail::trim(line));
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (detail::trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto user_col = column(schema.user);
  const auto item_col = column(schema.item);
  const auto ts_col = column(schema.timestamp);
  const auto weight_col = column(schema.weight);
  if (!user_col || !item_col || !ts_col) {
    throw DataError(source + ":1: header must contain columns '" + schema.user + "', '" +
                    schema.item + "', '" + schema.timestamp + "'");
  }

  std::vector<Interaction> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = detail::split_csv_line(trimmed);
    auto fail = [&](const std::string& what) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(fields.size()));
    }
    Interaction x;
    x.user_id = std::string(detail::trim(fields[*user_col]));
    x.item_id = std::string(detail::trim(fields[*item_col]));
    if (x.user_id.empty() || x.item_id.empty()) fail("empty user or item id");
    const auto ts = detail::trim(fields[*ts_col]);
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), x.timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size()) fail("timestamp '" + std::string(ts) + "' is not an integer");
    if (x.timestamp < 0) fail("negative timestamp");
    if (weight_col) {
      const auto w = detail::trim(fields[*weight_col]);
      if (!w.empty()) {
        double value = 0.0;
        auto [wp, wec] = std::from_chars(w.data(), w.data() + w.size(), value);
        if (wec != std::errc() || wp != w.data() + w.size()) fail("weight '" + std::string(w) + "' is not a number");
        x.weight = value;
      }
    }
    x.order = rows.size();
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw DataError(source + ": no interactions");
  return InteractionLog(std::move(rows));
}

inline InteractionLog load_interactions(const std::string& path, const ColumnSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file '" + path + "'");
  return parse_interactions(in, schema, path);
}

}  // namespace coldrec::data
