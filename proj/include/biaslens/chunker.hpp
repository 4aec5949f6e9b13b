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

// Rule-based shallow noun-chunk extraction.
//
// Captions are tokenized, each token is tagged from the closed-class lexicon
// (lexicon.hpp), and unknown open-class tokens are resolved by context:
//
//   * digits behave like determiners ("2 dogs"),
//   * -ing/-ed words and lexicon verbs directly after a determiner or
//     adjective become adjectives when another open-class word follows
//     ("a smiling face") and nouns otherwise ("a painting"),
//   * other -ing/-ed words after a noun, pronoun, auxiliary or verb are
//     verbs ("a man riding"),
//   * everything else unknown is a noun.
//
// A chunk is a maximal run of determiner/adjective/noun tokens in which
// determiners only lead, trimmed back to its last noun. Possessive "'s"
// ends a chunk and is not part of it.

#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/corpus.hpp"
#include "biaslens/lexicon.hpp"
#include "biaslens/text.hpp"

namespace biaslens {

/// Byte offsets [begin, end) into the selected caption.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const CharSpan&) const = default;
};

struct NounChunk {
  std::string text;
  std::size_t source_record = 0;
  // Absent for chunks read from a precomputed file.
  std::optional<CharSpan> span;
  bool operator==(const NounChunk&) const = default;
};

/// Lowercases, strips leading/trailing punctuation and collapses internal
/// whitespace to single spaces.
inline std::string normalize_chunk(std::string_view raw) {
  auto s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  s.toLower(icu::Locale::getRoot());
  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
    const UChar32 c = s.char32At(i);
    if (text::is_space(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) out.append(static_cast<UChar>(u' '));
    pending_space = false;
    out.append(c);
  }
  // Strip punctuation (and any whitespace it exposes) at both ends.
  int32_t b = 0;
  int32_t e = out.length();
  while (b < e) {
    const UChar32 c = out.char32At(b);
    if (!text::is_punct(c) && !text::is_space(c)) break;
    b = out.moveIndex32(b, 1);
  }
  while (e > b) {
    const int32_t prev = out.moveIndex32(e, -1);
    const UChar32 c = out.char32At(prev);
    if (!text::is_punct(c) && !text::is_space(c)) break;
    e = prev;
  }
  std::string result;
  out.tempSubStringBetween(b, e).toUTF8String(result);
  return result;
}

namespace chunking {

struct Token {
  std::string lower;
  std::size_t begin = 0;
  std::size_t end = 0;
  Tag tag = Tag::kUnknown;
};

namespace detail {

inline bool is_word_char(UChar32 c) {
  if (u_isalnum(c)) return true;
  const auto type = u_charType(c);
  return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK ||
         type == U_ENCLOSING_MARK;
}

inline bool is_joiner(UChar32 c) { return c == '-' || c == '\'' || c == 0x2019; }
inline bool is_apostrophe(UChar32 c) { return c == '\'' || c == 0x2019; }

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline std::optional<Tag> lookup(const std::string& lower) {
  const auto& lex = lexicon();
  auto it = lex.find(lower);
  if (it == lex.end()) return std::nullopt;
  return it->second;
}

}  // namespace detail

/// Splits a caption into word and punctuation tokens with byte spans.
/// Hyphenated words stay whole; a trailing "'s" is split off as its own
/// token.
inline std::vector<Token> tokenize(std::string_view caption) {
  struct Cp {
    UChar32 c;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Cp> cps;
  {
    const auto* s = reinterpret_cast<const uint8_t*>(caption.data());
    const auto len = static_cast<int32_t>(caption.size());
    int32_t i = 0;
    while (i < len) {
      const int32_t start = i;
      UChar32 c;
      U8_NEXT(s, i, len, c);
      if (c < 0) c = 0xFFFD;
      cps.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i)});
    }
  }

  std::vector<Token> tokens;
  auto emit = [&](std::size_t b, std::size_t e, Tag tag) {
    Token t;
    t.begin = b;
    t.end = e;
    t.lower = text::to_lower(caption.substr(b, e - b));
    t.tag = tag;
    tokens.push_back(std::move(t));
  };

  std::size_t i = 0;
  while (i < cps.size()) {
    const UChar32 c = cps[i].c;
    if (text::is_space(c)) {
      ++i;
      continue;
    }
    if (!detail::is_word_char(c)) {
      emit(cps[i].begin, cps[i].end, Tag::kPunct);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < cps.size()) {
      if (detail::is_word_char(cps[j].c)) {
        ++j;
      } else if (detail::is_joiner(cps[j].c) && j + 1 < cps.size() &&
                 detail::is_word_char(cps[j + 1].c)) {
        j += 2;
      } else {
        break;
      }
    }
    const std::size_t wb = cps[i].begin;
    const std::size_t we = cps[j - 1].end;
    // "girl's" -> "girl" + possessive; "that's" -> "that" + auxiliary.
    if (j - i >= 3 && detail::is_apostrophe(cps[j - 2].c) &&
        (cps[j - 1].c == 's' || cps[j - 1].c == 'S')) {
      const std::size_t split = cps[j - 2].begin;
      emit(wb, split, Tag::kUnknown);
      const auto stem_tag = detail::lookup(tokens.back().lower);
      const bool contraction =
          stem_tag && (*stem_tag == Tag::kPron || *stem_tag == Tag::kDet);
      emit(split, we, contraction ? Tag::kAux : Tag::kPossessive);
    } else {
      emit(wb, we, Tag::kUnknown);
      // "girls'" -> "girls" + possessive apostrophe.
      if (j < cps.size() && detail::is_apostrophe(cps[j].c) &&
          (cps[j - 1].c == 's' || cps[j - 1].c == 'S')) {
        emit(cps[j].begin, cps[j].end, Tag::kPossessive);
        ++j;
      }
    }
    i = j;
  }
  return tokens;
}

/// Assigns a tag to every token.
inline void tag_tokens(std::vector<Token>& tokens) {
  std::vector<std::optional<Tag>> lex(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].tag == Tag::kUnknown) lex[i] = detail::lookup(tokens[i].lower);
  }
  auto open_class_at = [&](std::size_t k) {
    if (k >= tokens.size()) return false;
    if (tokens[k].tag != Tag::kUnknown) return false;  // punct or possessive
    if (!lex[k]) return true;
    return *lex[k] == Tag::kAdj || *lex[k] == Tag::kNoun;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token& t = tokens[i];
    if (t.tag != Tag::kUnknown) continue;
    const std::optional<Tag> prev =
        i == 0 ? std::nullopt : std::optional<Tag>(tokens[i - 1].tag);
    const bool after_modifier = prev && (*prev == Tag::kDet || *prev == Tag::kAdj);
    const bool next_open = open_class_at(i + 1);

    if (lex[i]) {
      t.tag = *lex[i];
      if (t.tag == Tag::kVerb && after_modifier) t.tag = next_open ? Tag::kAdj : Tag::kNoun;
      continue;
    }
    const std::string& w = t.lower;
    if (!w.empty() && std::all_of(w.begin(), w.end(), [](char ch) {
          return (ch >= '0' && ch <= '9') || ch == '.' || ch == ',';
        })) {
      t.tag = Tag::kDet;
      continue;
    }
    const bool participle = (w.size() > 4 && detail::ends_with(w, "ing")) ||
                            (w.size() > 3 && detail::ends_with(w, "ed"));
    if (!participle) {
      t.tag = Tag::kNoun;
      continue;
    }
    if (after_modifier) {
      t.tag = next_open ? Tag::kAdj : Tag::kNoun;
    } else if (prev && (*prev == Tag::kNoun || *prev == Tag::kPron || *prev == Tag::kAux ||
                        *prev == Tag::kVerb)) {
      t.tag = Tag::kVerb;
    } else if (next_open) {
      t.tag = Tag::kAdj;
    } else {
      t.tag = (prev && *prev == Tag::kPrep) ? Tag::kNoun : Tag::kVerb;
    }
  }
}

}  // namespace chunking

struct ExtractedChunk {
  std::string text;
  CharSpan span;
  bool operator==(const ExtractedChunk&) const = default;
};

/// Noun chunks of one caption, in order, with non-overlapping spans.
inline std::vector<ExtractedChunk> extract_chunks(std::string_view caption) {
  using chunking::Tag;
  std::vector<chunking::Token> tokens = chunking::tokenize(caption);
  chunking::tag_tokens(tokens);

  std::vector<ExtractedChunk> out;
  std::size_t run_begin = 0;
  std::size_t run_len = 0;
  bool run_has_content = false;

  auto close_run = [&] {
    if (run_len == 0) return;
    std::size_t last_noun = run_len;
    for (std::size_t k = run_len; k-- > 0;) {
      if (tokens[run_begin + k].tag == Tag::kNoun) {
        last_noun = k;
        break;
      }
    }
    if (last_noun != run_len) {
      CharSpan span{tokens[run_begin].begin, tokens[run_begin + last_noun].end};
      std::string text = normalize_chunk(caption.substr(span.begin, span.end - span.begin));
      if (!text.empty()) out.push_back({std::move(text), span});
    }
    run_len = 0;
    run_has_content = false;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Tag tag = tokens[i].tag;
    if (tag == Tag::kDet) {
      if (run_has_content) close_run();
      if (run_len == 0) run_begin = i;
      ++run_len;
    } else if (tag == Tag::kAdj || tag == Tag::kNoun) {
      if (run_len == 0) run_begin = i;
      ++run_len;
      run_has_content = true;
    } else {
      close_run();
    }
  }
  close_run();
  return out;
}

/// All chunks of a corpus plus their deduplicated texts and provenance.
class ChunkSet {
 public:
  ChunkSet() = default;
  ChunkSet(std::size_t record_count, std::vector<NounChunk> chunks)
      : record_count_(record_count), chunks_(std::move(chunks)) {
    for (const auto& c : chunks_) {
      if (c.text.empty()) throw InputError("empty chunk text");
      if (c.source_record >= record_count_)
        throw InputError("chunk '" + c.text + "' references record " +
                         std::to_string(c.source_record) + " outside the corpus");
      auto [it, inserted] = index_.emplace(c.text, unique_texts_.size());
      if (inserted) {
        unique_texts_.push_back(c.text);
        multiplicity_.push_back(0);
        provenance_.emplace_back();
      }
      const std::size_t u = it->second;
      ++multiplicity_[u];
      auto& recs = provenance_[u];
      if (recs.empty() || recs.back() != c.source_record) {
        // Chunks arrive in record order, so provenance stays sorted.
        if (!recs.empty() && recs.back() > c.source_record)
          throw InputError("chunks are not in record order");
        recs.push_back(c.source_record);
      }
    }
  }

  std::size_t record_count() const { return record_count_; }
  std::size_t size() const { return chunks_.size(); }  // M
  const std::vector<NounChunk>& chunks() const { return chunks_; }
  const std::vector<std::string>& unique_texts() const { return unique_texts_; }
  const std::vector<std::size_t>& multiplicity() const { return multiplicity_; }
  /// Sorted record indices for unique text u.
  const std::vector<std::size_t>& provenance(std::size_t u) const { return provenance_.at(u); }
  std::optional<std::size_t> index_of(const std::string& text) const {
    auto it = index_.find(text);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t record_count_ = 0;
  std::vector<NounChunk> chunks_;
  std::vector<std::string> unique_texts_;
  std::vector<std::size_t> multiplicity_;
  std::vector<std::vector<std::size_t>> provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline ChunkSet chunk_corpus(const Corpus& corpus, unsigned threads = 1) {
  std::vector<std::vector<ExtractedChunk>> per_record(corpus.size());
  parallel_for(corpus.size(), threads,
               [&](std::size_t i) { per_record[i] = extract_chunks(corpus.caption(i)); });
  std::vector<NounChunk> chunks;
  for (std::size_t i = 0; i < per_record.size(); ++i)
    for (auto& c : per_record[i]) chunks.push_back({std::move(c.text), i, c.span});
  return ChunkSet(corpus.size(), std::move(chunks));
}

/// Reads precomputed chunks (one `{"id", "chunks"}` object per line) in
/// place of extraction. Records without a line get no chunks.
inline ChunkSet chunk_precomputed(const Corpus& corpus, std::istream& in) {
  std::map<std::size_t, std::vector<std::string>> by_record;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("precomputed chunks line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("chunks") ||
        !j["chunks"].is_array())
      throw InputError("precomputed chunks line " + std::to_string(line_no) +
                       ": expected fields 'id' and 'chunks'");
    const auto id = j["id"].get<std::string>();
    const auto rec = corpus.find(id);
    if (!rec) throw InputError("precomputed chunks reference unknown record id '" + id + "'");
    auto& dst = by_record[*rec];
    for (const auto& c : j["chunks"]) {
      if (!c.is_string())
        throw InputError("precomputed chunks line " + std::to_string(line_no) + ": non-string chunk");
      std::string t = normalize_chunk(text::nfc(c.get<std::string>()));
      if (!t.empty()) dst.push_back(std::move(t));
    }
  }
  std::vector<NounChunk> chunks;
  for (auto& [rec, texts] : by_record)
    for (auto& t : texts) chunks.push_back({std::move(t), rec, std::nullopt});
  return ChunkSet(corpus.size(), std::move(chunks));
}

inline nlohmann::json to_json(const ChunkSet& cs) {
  nlohmann::json chunks = nlohmann::json::array();
  for (const auto& c : cs.chunks()) {
    nlohmann::json j{{"text", c.text}, {"record", c.source_record}};
    if (c.span) {
      j["start"] = c.span->begin;
      j["end"] = c.span->end;
    }
    chunks.push_back(std::move(j));
  }
  nlohmann::json unique = nlohmann::json::array();
  for (std::size_t u = 0; u < cs.unique_texts().size(); ++u) {
    unique.push_back({{"text", cs.unique_texts()[u]},
                      {"count", cs.multiplicity()[u]},
                      {"records", cs.provenance(u)}});
  }
  return {{"N", cs.record_count()}, {"M", cs.size()}, {"chunks", chunks}, {"unique", unique}};
}

inline ChunkSet chunkset_from_json(const nlohmann::json& j) {
  try {
    std::vector<NounChunk> chunks;
    for (const auto& c : j.at("chunks")) {
      NounChunk nc{c.at("text").get<std::string>(), c.at("record").get<std::size_t>(), std::nullopt};
      if (c.contains("start"))
        nc.span = CharSpan{c.at("start").get<std::size_t>(), c.at("end").get<std::size_t>()};
      chunks.push_back(std::move(nc));
    }
    return ChunkSet(j.at("N").get<std::size_t>(), std::move(chunks));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed chunks file: ") + e.what());
  }
}

}  // namespace biaslens
