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

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/text.hpp"

namespace biaslens {

enum class CaptionPolicy { kFirst, kRandom };

inline CaptionPolicy parse_caption_policy(std::string_view s) {
  if (s == "first") return CaptionPolicy::kFirst;
  if (s == "random") return CaptionPolicy::kRandom;
  throw InputError("unknown caption policy '" + std::string(s) + "' (expected first|random)");
}

inline std::string to_string(CaptionPolicy p) {
  return p == CaptionPolicy::kFirst ? "first" : "random";
}

struct ImageRecord {
  std::string id;
  std::vector<std::string> captions;
  std::map<std::string, int> labels;

  bool operator==(const ImageRecord&) const = default;
};

/// Immutable after construction. One caption per record is selected and the
/// index is kept so a run can be replayed.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<ImageRecord> records, std::vector<std::size_t> selected,
         CaptionPolicy policy, std::uint64_t seed)
      : records_(std::move(records)),
        selected_(std::move(selected)),
        policy_(policy),
        seed_(seed) {
    if (records_.size() != selected_.size())
      throw InputError("selection index count does not match record count");
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!ids.insert(records_[i].id).second)
        throw InputError("duplicate record id '" + records_[i].id + "'");
      if (selected_[i] >= records_[i].captions.size())
        throw InputError("record '" + records_[i].id + "': selected caption index out of range");
    }
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<ImageRecord>& records() const { return records_; }
  const ImageRecord& record(std::size_t i) const { return records_.at(i); }
  const std::vector<std::size_t>& selected_indices() const { return selected_; }
  std::size_t selected_index(std::size_t i) const { return selected_.at(i); }
  const std::string& caption(std::size_t i) const {
    return records_.at(i).captions.at(selected_.at(i));
  }
  CaptionPolicy policy() const { return policy_; }
  std::uint64_t selection_seed() const { return seed_; }

  std::optional<std::size_t> find(std::string_view id) const {
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].id == id) return i;
    return std::nullopt;
  }

  bool operator==(const Corpus&) const = default;

 private:
  std::vector<ImageRecord> records_;
  std::vector<std::size_t> selected_;
  CaptionPolicy policy_ = CaptionPolicy::kFirst;
  std::uint64_t seed_ = 0;
};

/// Per-record deterministic choice: depends only on (id, seed, count).
inline std::size_t select_caption(const ImageRecord& r, CaptionPolicy policy,
                                  std::uint64_t seed) {
  if (policy == CaptionPolicy::kFirst || r.captions.size() == 1) return 0;
  return static_cast<std::size_t>(mix_seed(seed, fnv1a64(r.id)) % r.captions.size());
}

namespace detail {

inline ImageRecord parse_record(const nlohmann::json& j, std::size_t line_no,
                                std::optional<std::size_t>* stored_selection) {
  const std::string where = "line " + std::to_string(line_no);
  if (!j.is_object()) throw InputError(where + ": record is not an object");
  ImageRecord r;
  if (!j.contains("id") || !j["id"].is_string())
    throw InputError(where + ": missing string field 'id'");
  r.id = j["id"].get<std::string>();
  if (!j.contains("captions") || !j["captions"].is_array())
    throw InputError(where + ": record '" + r.id + "' missing array field 'captions'");
  if (j["captions"].empty())
    throw InputError(where + ": record '" + r.id + "' has an empty caption list");
  for (const auto& c : j["captions"]) {
    if (!c.is_string())
      throw InputError(where + ": record '" + r.id + "' has a non-string caption");
    std::string cap = text::nfc(c.get<std::string>());
    if (text::trim(cap).empty())
      throw InputError(where + ": record '" + r.id + "' has an empty caption");
    r.captions.push_back(std::move(cap));
  }
  if (j.contains("labels")) {
    const auto& labels = j["labels"];
    if (!labels.is_object())
      throw InputError(where + ": record '" + r.id + "' labels must be an object");
    for (const auto& [name, v] : labels.items()) {
      if (!v.is_number_integer() || (v.get<long long>() != 0 && v.get<long long>() != 1))
        throw InputError(where + ": record '" + r.id + "' label '" + name +
                         "' is not binary (got " + v.dump() + ")");
      r.labels[name] = v.get<int>();
    }
  }
  if (stored_selection != nullptr) {
    *stored_selection = std::nullopt;
    if (j.contains("selected")) {
      if (!j["selected"].is_number_unsigned())
        throw InputError(where + ": record '" + r.id + "' field 'selected' must be a non-negative integer");
      *stored_selection = j["selected"].get<std::size_t>();
    }
  }
  return r;
}

}  // namespace detail

/// Parses line-delimited records. A `selected` field, written by
/// `to_jsonl`, pins the caption choice and overrides the policy.
inline Corpus parse_corpus(std::istream& in, CaptionPolicy policy, std::uint64_t seed) {
  std::vector<ImageRecord> records;
  std::vector<std::size_t> selected;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    std::optional<std::size_t> stored;
    ImageRecord r = detail::parse_record(j, line_no, &stored);
    if (!ids.insert(r.id).second)
      throw InputError("line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    std::size_t idx = stored ? *stored : select_caption(r, policy, seed);
    if (idx >= r.captions.size())
      throw InputError("line " + std::to_string(line_no) + ": record '" + r.id +
                       "' selected index out of range");
    selected.push_back(idx);
    records.push_back(std::move(r));
  }
  return Corpus(std::move(records), std::move(selected), policy, seed);
}

inline Corpus load_corpus(const std::string& path, CaptionPolicy policy, std::uint64_t seed) {
  std::istringstream in(read_file(path));
  return parse_corpus(in, policy, seed);
}

/// One JSON object per line, keys sorted, selection recorded.
inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus.record(i);
    nlohmann::json j;
    j["id"] = r.id;
    j["captions"] = r.captions;
    if (!r.labels.empty()) j["labels"] = r.labels;
    j["selected"] = corpus.selected_index(i);
    out += j.dump();
    out += '\n';
  }
  return out;
}

/// Label column in corpus order.
inline std::vector<std::uint8_t> label_vector(const Corpus& corpus, const std::string& label) {
  std::vector<std::uint8_t> v;
  v.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus.record(i);
    auto it = r.labels.find(label);
    if (it == r.labels.end())
      throw InputError("record " + std::to_string(i) + " ('" + r.id + "') has no label '" + label + "'");
    v.push_back(static_cast<std::uint8_t>(it->second));
  }
  return v;
}

}  // namespace biaslens
