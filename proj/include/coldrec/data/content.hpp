#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "coldrec/data/split.hpp"
#include "coldrec/error.hpp"
#include "coldrec/numerics/matrix.hpp"
#include "coldrec/numerics/pca.hpp"

namespace coldrec::data {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// Raw per-item content vectors as read from disk, in file order.
struct ContentFile {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;
};

// Item-index-aligned unit-norm content rows. Rows outside coverage are zero.
struct ContentMatrix {
  numerics::Matrix vectors;
  std::size_t source_dim = 0;
  std::vector<std::uint8_t> coverage;

  std::size_t num_items() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  bool covers(ItemIndex i) const { return coverage.at(static_cast<std::size_t>(i)) != 0; }
};

namespace binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw DataError("truncated binary file while reading " + what);
  }
  return v;
}
inline std::string read_string(std::istream& in, const std::string& what) {
  const auto len = read_pod<std::uint32_t>(in, what + " length");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw DataError("truncated binary file while reading " + what);
  return s;
}

}  // namespace binio

inline ContentFile parse_content_text(std::istream& in, const std::string& source) {
  ContentFile file;
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty content file");
  std::size_t count = 0;
  {
    std::istringstream head(line);
    if (!(head >> count >> file.dim) || file.dim == 0) {
      throw DataError(source + ":1: expected '<num_items> <D>' header");
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::string id;
    if (!(row >> id)) continue;
    std::vector<double> v(file.dim);
    for (std::size_t j = 0; j < file.dim; ++j) {
      if (!(row >> v[j])) {
        throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(file.dim) + " values for item '" + id + "'");
      }
    }
    std::string extra;
    if (row >> extra) {
      throw DataError(source + ":" + std::to_string(line_no) + ": too many values for item '" + id + "'");
    }
    file.ids.push_back(std::move(id));
    file.vectors.push_back(std::move(v));
  }
  if (file.ids.size() != count) {
    throw DataError(source + ": header announces " + std::to_string(count) + " items, found " +
                    std::to_string(file.ids.size()));
  }
  return file;
}

inline ContentFile parse_content_binary(std::istream& in, const std::string& source) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "CEM1", 4) != 0) {
    throw DataError(source + ": missing CEM1 magic");
  }
  ContentFile file;
  const auto count = binio::read_pod<std::uint32_t>(in, "item count");
  file.dim = binio::read_pod<std::uint32_t>(in, "dimension");
  if (file.dim == 0) throw DataError(source + ": zero content dimension");
  for (std::uint32_t i = 0; i < count; ++i) {
    file.ids.push_back(binio::read_string(in, "item id"));
    std::vector<double> v(file.dim);
    for (auto& x : v) x = binio::read_pod<double>(in, "content value");
    file.vectors.push_back(std::move(v));
  }
  return file;
}

// Reads either the text or the CEM1 binary form, chosen by the leading magic.
inline ContentFile read_content_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open content file '" + path + "'");
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  const bool binary = in.gcount() == 4 && std::memcmp(head.data(), "CEM1", 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? parse_content_binary(in, path) : parse_content_text(in, path);
}

inline void write_content_binary(const std::string& path, const ContentFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write content file '" + path + "'");
  out.write("CEM1", 4);
  binio::write_u32(out, static_cast<std::uint32_t>(file.ids.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(file.dim));
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    binio::write_string(out, file.ids[i]);
    for (double x : file.vectors[i]) binio::write_f64(out, x);
  }
}

inline void write_content_text(const std::string& path, const ContentFile& file) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write content file '" + path + "'");
  out << file.ids.size() << ' ' << file.dim << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    out << file.ids[i];
    for (double x : file.vectors[i]) out << ' ' << x;
    out << '\n';
  }
}

// How projection statistics are obtained: fit on warm items, or reuse a model.
struct ProjectionSpec {
  std::size_t target_dim = 0;
  std::optional<numerics::PcaModel> model;
};

struct ProjectedContent {
  ContentMatrix matrix;
  numerics::PcaModel pca;
};

// Standardize -> PCA-project -> unit-normalize every item of the split that
// has content. Statistics are fit on warm items only. Every cold item must be
// present in the file.
inline ProjectedContent project_content(const ContentFile& file, const SplitDataset& split,
                                        const ProjectionSpec& spec) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < file.ids.size(); ++i) by_id.emplace(file.ids[i], i);

  const std::size_t n = split.num_items();
  std::vector<std::optional<std::size_t>> source(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (auto it = by_id.find(split.item_ids[i]); it != by_id.end()) source[i] = it->second;
  }

  std::string missing;
  std::size_t missing_count = 0;
  for (ItemIndex c : split.cold_items) {
    if (!source[static_cast<std::size_t>(c)]) {
      if (missing_count < 20) missing += (missing.empty() ? "" : ", ") + split.item_ids[static_cast<std::size_t>(c)];
      ++missing_count;
    }
  }
  if (missing_count) {
    throw DataError("content: " + std::to_string(missing_count) +
                    " cold item(s) have no content: " + missing + (missing_count > 20 ? ", ..." : ""));
  }

  numerics::PcaModel pca;
  if (spec.model) {
    pca = *spec.model;
    if (pca.input_dim() != file.dim) {
      throw DataError("content: projection expects dimension " + std::to_string(pca.input_dim()) +
                      ", file has " + std::to_string(file.dim));
    }
  } else {
    std::vector<std::size_t> fit_rows;
    for (ItemIndex w : split.warm_items) {
      if (source[static_cast<std::size_t>(w)]) fit_rows.push_back(*source[static_cast<std::size_t>(w)]);
    }
    numerics::Matrix fit(fit_rows.size(), file.dim);
    for (std::size_t r = 0; r < fit_rows.size(); ++r) {
      std::copy(file.vectors[fit_rows[r]].begin(), file.vectors[fit_rows[r]].end(), fit.row(r).begin());
    }
    try {
      pca = numerics::fit_pca(fit, spec.target_dim);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("content projection: ") + e.what());
    }
  }

  ContentMatrix out;
  out.source_dim = file.dim;
  out.vectors = numerics::Matrix(n, pca.output_dim());
  out.coverage.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!source[i]) continue;
    auto y = numerics::pca_transform(pca, file.vectors[*source[i]]);
    const double len = numerics::norm(y);
    if (!(len > 1e-12) || !std::isfinite(len)) {
      throw DataError("content: item '" + split.item_ids[i] + "' projects to a zero vector");
    }
    auto row = out.vectors.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) row[j] = y[j] / len;
    out.coverage[i] = 1;
  }
  return {std::move(out), std::move(pca)};
}

inline ProjectedContent load_content(const std::string& path, const SplitDataset& split,
                                     const ProjectionSpec& spec) {
  return project_content(read_content_file(path), split, spec);
}

// Already-projected rows (as written by prepare) keyed by item id.
inline ContentMatrix content_from_projected(const ContentFile& file, const SplitDataset& split) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < file.ids.size(); ++i) by_id.emplace(file.ids[i], i);
  ContentMatrix out;
  out.source_dim = file.dim;
  out.vectors = numerics::Matrix(split.num_items(), file.dim);
  out.coverage.assign(split.num_items(), 0);
  for (std::size_t i = 0; i < split.num_items(); ++i) {
    auto it = by_id.find(split.item_ids[i]);
    if (it == by_id.end()) continue;
    const auto& v = file.vectors[it->second];
    std::copy(v.begin(), v.end(), out.vectors.row(i).begin());
    out.coverage[i] = 1;
  }
  for (ItemIndex c : split.cold_items) {
    if (!out.covers(c)) {
      throw DataError("content: cold item '" + split.item_ids[static_cast<std::size_t>(c)] +
                      "' has no content");
    }
  }
  return out;
}

inline ContentFile to_content_file(const ContentMatrix& content, const SplitDataset& split) {
  ContentFile file;
  file.dim = content.dim();
  for (std::size_t i = 0; i < content.num_items(); ++i) {
    if (!content.coverage[i]) continue;
    file.ids.push_back(split.item_ids[i]);
    const auto row = content.vectors.row(i);
    file.vectors.emplace_back(row.begin(), row.end());
  }
  return file;
}

}  // namespace coldrec::data
