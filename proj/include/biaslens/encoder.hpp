// Copyright 2026 The biaslens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unicode/utf8.h>

#include "json.hpp"

#include "biaslens/chunker.hpp"
#include "biaslens/common.hpp"

namespace biaslens {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// One row per unique chunk text, aligned with `texts`.
struct EmbeddingMatrix {
  std::vector<std::string> texts;
  Matrix vectors;
  std::string backend_id;

  std::size_t rows() const { return texts.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

struct HashBackend {
  std::size_t dim = 512;
};

struct FileBackend {
  std::string path;
};

using EncoderBackend = std::variant<HashBackend, FileBackend>;

/// Parses "hash:<d>" or "file:<path>".
inline EncoderBackend parse_backend(std::string_view spec) {
  if (spec.starts_with("hash:")) {
    const std::string num(spec.substr(5));
    std::size_t pos = 0;
    unsigned long d = 0;
    try {
      d = std::stoul(num, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != num.size() || num.empty())
      throw InputError("invalid hash backend dimension '" + num + "'");
    return HashBackend{d};
  }
  if (spec.starts_with("file:") && spec.size() > 5) return FileBackend{std::string(spec.substr(5))};
  throw InputError("unknown encoder backend '" + std::string(spec) +
                   "' (expected file:<path> or hash:<d>)");
}

namespace detail {

inline void hash_trigrams_into(std::span<const std::string_view> grams, std::uint64_t salt,
                               Vector& v) {
  const auto d = static_cast<std::uint64_t>(v.size());
  for (auto g : grams) {
    const std::uint64_t h = splitmix64(fnv1a64(g) ^ splitmix64(salt));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[static_cast<Eigen::Index>(h % d)] += sign;
  }
}

}  // namespace detail

/// Signed feature hashing of the character-trigram multiset of the text
/// padded with two leading '#', followed by L2 normalization. Only leading
/// padding is used so a trailing punctuation mark changes one trigram, not
/// three.
inline Vector hash_embed(std::string_view text, std::size_t d) {
  if (d < 8) throw InputError("hash embedding dimension must be at least 8");
  const std::string padded = "##" + std::string(text);
  std::vector<std::size_t> starts;
  {
    const auto* s = reinterpret_cast<const uint8_t*>(padded.data());
    const auto len = static_cast<int32_t>(padded.size());
    int32_t i = 0;
    while (i < len) {
      starts.push_back(static_cast<std::size_t>(i));
      U8_FWD_1(s, i, len);
    }
    starts.push_back(padded.size());
  }
  std::vector<std::string_view> grams;
  for (std::size_t k = 0; k + 3 < starts.size(); ++k)
    grams.emplace_back(padded.data() + starts[k], starts[k + 3] - starts[k]);

  Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
  detail::hash_trigrams_into(grams, 0, v);
  // Signs can cancel within a bucket; rehash with a new salt until not.
  for (std::uint64_t salt = 1; v.squaredNorm() == 0.0; ++salt) {
    v.setZero();
    if (grams.empty()) {
      const std::string_view whole(padded);
      detail::hash_trigrams_into(std::span<const std::string_view>(&whole, 1), salt, v);
    } else {
      detail::hash_trigrams_into(grams, salt, v);
    }
  }
  v /= v.norm();
  return v;
}

/// Reads `{"chunk", "vector"}` lines; every vector must share one dimension.
inline std::unordered_map<std::string, std::vector<double>> read_embeddings(std::istream& in) {
  std::unordered_map<std::string, std::vector<double>> table;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::string where = "embeddings line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("chunk") || !j["chunk"].is_string() ||
        !j.contains("vector") || !j["vector"].is_array())
      throw InputError(where + ": expected fields 'chunk' and 'vector'");
    std::vector<double> vec;
    for (const auto& x : j["vector"]) {
      if (!x.is_number()) throw InputError(where + ": non-numeric vector entry");
      const double v = x.get<double>();
      if (!std::isfinite(v)) throw InputError(where + ": non-finite vector entry");
      vec.push_back(v);
    }
    if (vec.empty()) throw InputError(where + ": empty vector");
    if (!dim) dim = vec.size();
    if (vec.size() != *dim)
      throw InputError(where + ": dimension mismatch (" + std::to_string(vec.size()) +
                       " vs " + std::to_string(*dim) + ")");
    table[normalize_chunk(j["chunk"].get<std::string>())] = std::move(vec);
  }
  return table;
}

inline EmbeddingMatrix encode_hash(const std::vector<std::string>& texts, std::size_t d,
                                   unsigned threads = 1) {
  EmbeddingMatrix m;
  m.texts = texts;
  m.backend_id = "hash:" + std::to_string(d);
  m.vectors = Matrix(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(d));
  if (d < 8) throw InputError("hash embedding dimension must be at least 8");
  parallel_for(texts.size(), threads, [&](std::size_t i) {
    m.vectors.row(static_cast<Eigen::Index>(i)) = hash_embed(texts[i], d).transpose();
  });
  return m;
}

inline EmbeddingMatrix encode_table(const std::vector<std::string>& texts,
                                    const std::unordered_map<std::string, std::vector<double>>& table,
                                    std::string backend_id) {
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (const auto& t : texts) {
    if (!table.contains(t)) {
      ++missing_count;
      if (missing.size() < 10) missing.push_back(t);
    }
  }
  if (missing_count > 0) {
    std::string msg = "embeddings file is missing " + std::to_string(missing_count) + " chunk text(s):";
    for (const auto& t : missing) msg += " \"" + t + "\"";
    if (missing_count > missing.size()) msg += " ...";
    throw InputError(msg);
  }
  EmbeddingMatrix m;
  m.texts = texts;
  m.backend_id = std::move(backend_id);
  const std::size_t d = texts.empty() ? 0 : table.at(texts.front()).size();
  m.vectors = Matrix(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& v = table.at(texts[i]);
    for (std::size_t k = 0; k < d; ++k)
      m.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
  }
  return m;
}

/// Rows follow `chunks.unique_texts()`.
inline EmbeddingMatrix encode(const ChunkSet& chunks, const EncoderBackend& backend,
                              unsigned threads = 1) {
  if (const auto* h = std::get_if<HashBackend>(&backend))
    return encode_hash(chunks.unique_texts(), h->dim, threads);
  const auto& path = std::get<FileBackend>(backend).path;
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  return encode_table(chunks.unique_texts(), read_embeddings(in), "file:" + digest_bytes(bytes));
}

/// Same line format the file backend reads.
inline std::string to_jsonl(const EmbeddingMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json j;
    j["chunk"] = m.texts[i];
    std::vector<double> row(m.dim());
    for (std::size_t k = 0; k < m.dim(); ++k)
      row[k] = m.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    j["vector"] = row;
    out += j.dump();
    out += '\n';
  }
  return out;
}

/// Loads an embeddings file as a matrix, preserving line order.
inline EmbeddingMatrix embeddings_from_jsonl(const std::string& bytes, std::string backend_id) {
  std::istringstream in(bytes);
  std::vector<std::string> order;
  {
    std::istringstream scan(bytes);
    std::string line;
    while (std::getline(scan, line)) {
      if (text::trim(line).empty()) continue;
      try {
        order.push_back(normalize_chunk(nlohmann::json::parse(line).at("chunk").get<std::string>()));
      } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed embeddings file: ") + e.what());
      }
    }
  }
  return encode_table(order, read_embeddings(in), std::move(backend_id));
}

}  // namespace biaslens
