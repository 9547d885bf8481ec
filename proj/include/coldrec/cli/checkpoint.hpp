#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldrec/cli/config.hpp"
#include "coldrec/data/content.hpp"
#include "coldrec/data/split.hpp"
#include "coldrec/error.hpp"
#include "coldrec/model/seq_model.hpp"

namespace coldrec::cli {

// Binary layout: "SRCK", u32 version, u32-length JSON header, then until end
// of file one record per tensor: u32-length name, u32 rank, u64 extents, f64
// values. Everything little-endian.
inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  Json header;
  model::SeqModel model;
};

inline void save_checkpoint(const std::filesystem::path& path, const model::SeqModel& m,
                            const ExperimentConfig& config, std::uint64_t seed, const data::SplitDataset& split,
                            const Json& extra = Json::object()) {
  const auto& table = m.items();
  Json h;
  h["config"] = to_json(config);
  h["seed"] = seed;
  h["variant"] = embeddings::to_string(table.variant());
  h["delta_max"] = table.has_delta() ? Json(table.delta_max()) : Json(nullptr);
  h["item_ids"] = split.item_ids;
  h["user_ids"] = split.user_ids;
  h["warm_items"] = m.warm_items();
  h["cold_items"] = m.cold_items();
  h["base_trainable"] = table.base_trainable();
  h["delta_trainable"] = table.delta_trainable();
  h["uncovered_rows"] = table.uncovered_rows();
  h["extra"] = extra;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write("SRCK", 4);
  data::binio::write_u32(out, checkpoint_version);
  data::binio::write_string(out, h.dump());
  for (const auto& [name, t] : m.named_tensors()) {
    data::binio::write_string(out, name);
    data::binio::write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) data::binio::write_u64(out, d);
    for (double v : t.values()) data::binio::write_f64(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SRCK", 4) != 0) {
    throw DataError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = data::binio::read_pod<std::uint32_t>(in, "checkpoint version");
  if (version != checkpoint_version) {
    throw DataError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  Json h = Json::parse(data::binio::read_string(in, "checkpoint header"), nullptr, false);
  if (h.is_discarded()) throw DataError("checkpoint '" + path.string() + "': corrupt header");

  std::map<std::string, numerics::Tensor> tensors;
  while (in.peek() != std::char_traits<char>::eof()) {
    auto name = data::binio::read_string(in, "tensor name");
    const auto rank = data::binio::read_pod<std::uint32_t>(in, "tensor rank");
    numerics::Shape shape(rank);
    for (auto& d : shape) d = data::binio::read_pod<std::uint64_t>(in, "tensor extent");
    std::vector<double> values(numerics::shape_numel(shape));
    if (!values.empty() &&
        !in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 8))) {
      throw DataError("checkpoint '" + path.string() + "': truncated tensor '" + name + "'");
    }
    tensors.emplace(std::move(name), numerics::Tensor(std::move(shape), std::move(values)));
  }

  try {
    ExperimentConfig config = from_json(h.at("config"));
    const auto seed = h.at("seed").get<std::uint64_t>();
    config.model.seed = seed;
    const auto variant = embeddings::parse_variant(h.at("variant").get<std::string>());
    auto take = [&](const std::string& name) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError("checkpoint '" + path.string() + "': missing tensor '" + name + "'");
      return it->second;
    };
    numerics::Tensor delta;
    if (!h.at("delta_max").is_null()) delta = take("item.delta");
    embeddings::EmbeddingTable table(variant, take("item.base"), delta,
                                     h.at("delta_max").is_null() ? 0.0 : h.at("delta_max").get<double>(),
                                     h.at("base_trainable").get<std::vector<std::uint8_t>>(),
                                     h.at("delta_trainable").get<std::vector<std::uint8_t>>());
    table.set_uncovered_rows(h.at("uncovered_rows").get<std::size_t>());
    model::SeqModel m(config.model, std::move(table), h.at("warm_items").get<std::vector<data::ItemIndex>>(),
                      h.at("cold_items").get<std::vector<data::ItemIndex>>());
    auto named = m.named_tensors();
    if (named.size() != tensors.size()) {
      throw DataError("checkpoint '" + path.string() + "': expected " + std::to_string(named.size()) +
                      " tensors, found " + std::to_string(tensors.size()));
    }
    for (auto& [name, t] : named) {
      const auto src = take(name);
      if (src.shape() != t.shape()) {
        throw DataError("checkpoint '" + path.string() + "': tensor '" + name + "' has shape " +
                        numerics::shape_string(src.shape()) + ", model expects " + numerics::shape_string(t.shape()));
      }
      std::copy(src.values().begin(), src.values().end(), t.values().begin());
    }
    return {std::move(config), seed, std::move(h), std::move(m)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "': " + e.what());
  }
}

// A checkpoint is only valid against the split it was trained on.
inline void check_mapping(const Checkpoint& ckpt, const data::SplitDataset& split) {
  const auto& h = ckpt.header;
  if (h.at("item_ids").get<std::vector<std::string>>() != split.item_ids ||
      h.at("user_ids").get<std::vector<std::string>>() != split.user_ids ||
      h.at("warm_items").get<std::vector<data::ItemIndex>>() != split.warm_items ||
      h.at("cold_items").get<std::vector<data::ItemIndex>>() != split.cold_items) {
    throw DataError("stale checkpoint: its item/user mappings do not match the prepared split");
  }
}

}  // namespace coldrec::cli
