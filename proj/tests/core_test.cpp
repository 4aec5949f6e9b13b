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

// Corpus loading, chunk extraction and the encoder.

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biaslens/chunker.hpp"
#include "biaslens/common.hpp"
#include "biaslens/corpus.hpp"
#include "biaslens/encoder.hpp"
#include "oracles.hpp"

namespace biaslens {
namespace {

using ::testing::HasSubstr;

Corpus corpus_from(const std::string& jsonl, CaptionPolicy policy = CaptionPolicy::kFirst,
                   std::uint64_t seed = 0) {
  std::istringstream in(jsonl);
  return parse_corpus(in, policy, seed);
}

std::vector<std::string> texts(const std::vector<ExtractedChunk>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.text);
  return out;
}

template <typename Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// ---------------------------------------------------------------------------
// common

TEST(Common, BitVectorCountsAndNegation) {
  BitVector b(70);
  b.set(0);
  b.set(64);
  b.set(69);
  EXPECT_EQ(b.count(), 3u);
  EXPECT_EQ(b.negated().count(), 67u);
  BitVector c(70);
  c.set(64);
  EXPECT_EQ(b.count_and(c), 1u);
  EXPECT_EQ(BitVector::from_bytes(b.to_bytes()), b);
  EXPECT_THROW(BitVector::from_bytes({0, 2}), InputError);
}

TEST(Common, RngIsReproducible) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
}

TEST(Common, ParallelForVisitsEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

// ---------------------------------------------------------------------------
// corpus

TEST(Corpus, FirstPolicySelectsIndexZero) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["x one","x two"]}
{"id":"b","captions":["y"]}
)");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.selected_indices(), (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(c.caption(0), "x one");
}

TEST(Corpus, RandomPolicyIsDeterministicPerSeed) {
  const std::string line = R"({"id":"img-1","captions":["a","b","c","d","e"]})";
  const Corpus c1 = corpus_from(line, CaptionPolicy::kRandom, 11);
  const Corpus c2 = corpus_from(line, CaptionPolicy::kRandom, 11);
  EXPECT_EQ(c1.selected_indices(), c2.selected_indices());
  EXPECT_LT(c1.selected_index(0), 5u);
  // Different seeds reach more than one caption.
  std::set<std::size_t> seen;
  for (std::uint64_t s = 0; s < 50; ++s) seen.insert(corpus_from(line, CaptionPolicy::kRandom, s).selected_index(0));
  EXPECT_GT(seen.size(), 1u);
}

TEST(Corpus, NonBinaryLabelNamesRecordAndLabel) {
  const std::string msg = error_of([] { corpus_from(R"({"id":"r7","captions":["c"],"labels":{"cat":2}})"); });
  EXPECT_THAT(msg, HasSubstr("r7"));
  EXPECT_THAT(msg, HasSubstr("cat"));
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  const std::string msg = error_of([] { corpus_from("{\"id\":\"a\",\"captions\":[\"c\"]}\n{oops\n"); });
  EXPECT_THAT(msg, HasSubstr("line 2"));
}

TEST(Corpus, RejectsDuplicatesAndEmptyCaptions) {
  EXPECT_THROW(corpus_from(R"({"id":"a","captions":["c"]}
{"id":"a","captions":["d"]})"),
               InputError);
  EXPECT_THROW(corpus_from(R"({"id":"a","captions":[]})"), InputError);
  EXPECT_THROW(corpus_from(R"({"id":"a","captions":["   "]})"), InputError);
}

TEST(Corpus, LabelVector) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["x"],"labels":{"cat":1}}
{"id":"b","captions":["x"],"labels":{"cat":0}}
{"id":"c","captions":["x"],"labels":{"cat":1}})");
  EXPECT_EQ(label_vector(c, "cat"), (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Corpus, LabelVectorMissingLabelNamesRecord) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["x"],"labels":{"cat":1}}
{"id":"b","captions":["x"],"labels":{"cat":0}}
{"id":"c","captions":["x"]})");
  const std::string msg = error_of([&] { label_vector(c, "cat"); });
  EXPECT_THAT(msg, HasSubstr("record 2"));
}

TEST(Corpus, LabelVectorOfEmptyCorpus) { EXPECT_TRUE(label_vector(Corpus{}, "cat").empty()); }

TEST(Corpus, RoundTripThroughJsonl) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["x one","x two","x three"],"labels":{"k":1}}
{"id":"b","captions":["y"]})",
                               CaptionPolicy::kRandom, 3);
  const Corpus back = corpus_from(to_jsonl(c), CaptionPolicy::kRandom, 3);
  EXPECT_EQ(back, c);
}

TEST(Corpus, CaptionsAreNfcNormalized) {
  // "e" + combining acute vs precomposed U+00E9.
  const Corpus c = corpus_from("{\"id\":\"a\",\"captions\":[\"a cafe\\u0301\"]}");
  EXPECT_EQ(c.caption(0), "a caf\xC3\xA9");
}

// ---------------------------------------------------------------------------
// chunker

TEST(Chunker, SentenceWithTwoChunks) {
  EXPECT_EQ(texts(extract_chunks("The girl has a big smile")),
            (std::vector<std::string>{"the girl", "a big smile"}));
}

TEST(Chunker, EmptyCaption) { EXPECT_TRUE(extract_chunks("").empty()); }

TEST(Chunker, GerundVerbBetweenChunks) {
  // Tags by hand from the lexicon: A/DET man/NOUN riding/VERB a/DET
  // red/ADJ skateboard/NOUN.
  EXPECT_EQ(texts(extract_chunks("A man riding a red skateboard")),
            (std::vector<std::string>{"a man", "a red skateboard"}));
}

TEST(Chunker, PossessiveAndHyphen) {
  EXPECT_EQ(texts(extract_chunks("the dog's well-worn collar")),
            (std::vector<std::string>{"the dog", "well-worn collar"}));
}

TEST(Chunker, SpansAreOrderedDisjointAndInside) {
  const std::string cap = "Two dogs play near a wooden bench in the sunny park.";
  const auto cs = extract_chunks(cap);
  ASSERT_FALSE(cs.empty());
  std::size_t prev_end = 0;
  for (const auto& c : cs) {
    EXPECT_LE(prev_end, c.span.begin);
    EXPECT_LT(c.span.begin, c.span.end);
    EXPECT_LE(c.span.end, cap.size());
    EXPECT_EQ(normalize_chunk(cap.substr(c.span.begin, c.span.end - c.span.begin)), c.text);
    prev_end = c.span.end;
  }
}

TEST(Chunker, NormalizeChunk) {
  EXPECT_EQ(normalize_chunk("  The Girl "), "the girl");
  EXPECT_EQ(normalize_chunk("a big smile."), "a big smile");
  EXPECT_EQ(normalize_chunk("a   BIG\tsmile"), "a big smile");
}

TEST(Chunker, ExtractionIsPure) {
  const std::string cap = "A woman in a red dress holds an umbrella";
  EXPECT_EQ(extract_chunks(cap), extract_chunks(cap));
}

TEST(Chunker, SingleRecordCorpus) {
  const ChunkSet cs = chunk_corpus(corpus_from(R"({"id":"a","captions":["a cat"]})"));
  EXPECT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs.unique_texts(), (std::vector<std::string>{"a cat"}));
  EXPECT_EQ(cs.provenance(0), (std::vector<std::size_t>{0}));
}

TEST(Chunker, SharedChunkAcrossRecords) {
  const ChunkSet cs = chunk_corpus(corpus_from(R"({"id":"a","captions":["a cat"]}
{"id":"b","captions":["a cat"]})"));
  EXPECT_EQ(cs.size(), 2u);
  ASSERT_EQ(cs.unique_texts().size(), 1u);
  EXPECT_EQ(cs.provenance(0), (std::vector<std::size_t>{0, 1}));
}

TEST(Chunker, PrecomputedUnknownIdIsNamed) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["a cat"]})");
  std::istringstream in(R"({"id":"zzz","chunks":["a dog"]})");
  const std::string msg = error_of([&] { chunk_precomputed(c, in); });
  EXPECT_THAT(msg, HasSubstr("zzz"));
}

TEST(Chunker, ProvenanceIsComplete) {
  const Corpus c = corpus_from(R"({"id":"a","captions":["a cat on a mat"]}
{"id":"b","captions":["a dog near a cat"]}
{"id":"c","captions":["the mat"]})");
  const ChunkSet cs = chunk_corpus(c, 2);
  for (std::size_t u = 0; u < cs.unique_texts().size(); ++u) {
    std::set<std::size_t> expected;
    for (const auto& ch : cs.chunks())
      if (ch.text == cs.unique_texts()[u]) expected.insert(ch.source_record);
    EXPECT_EQ(std::set<std::size_t>(cs.provenance(u).begin(), cs.provenance(u).end()), expected);
  }
  EXPECT_GE(cs.size(), cs.unique_texts().size());
}

TEST(Chunker, JsonRoundTrip) {
  const ChunkSet cs = chunk_corpus(corpus_from(R"({"id":"a","captions":["a cat on a mat"]}
{"id":"b","captions":["a dog"]})"));
  const ChunkSet back = chunkset_from_json(to_json(cs));
  EXPECT_EQ(back.chunks(), cs.chunks());
  EXPECT_EQ(back.unique_texts(), cs.unique_texts());
}

// ---------------------------------------------------------------------------
// encoder

TEST(Encoder, DuplicateTextsGiveOneRow) {
  const ChunkSet cs = chunk_corpus(corpus_from(R"({"id":"a","captions":["a cat"]}
{"id":"b","captions":["a cat"]})"));
  const EmbeddingMatrix m = encode(cs, HashBackend{64});
  EXPECT_EQ(m.rows(), 1u);
}

TEST(Encoder, HashRowsHaveUnitNorm) {
  for (const std::string t : {"a", "x", "a cat", "a big smile", "##", "\xC3\xA9t\xC3\xA9"}) {
    const Vector v = hash_embed(t, 512);
    EXPECT_EQ(v.size(), 512);
    EXPECT_TRUE(v.allFinite());
    EXPECT_NEAR(v.norm(), 1.0, 1e-9) << t;
  }
}

TEST(Encoder, HashIsDeterministic) { EXPECT_EQ(hash_embed("a cat", 512), hash_embed("a cat", 512)); }

TEST(Encoder, NearDuplicatesAreClose) {
  const double exact = oracle::trigram_cosine("a big smile", "a big smile!", "##");
  EXPECT_GT(exact, 0.9);
  const double hashed = hash_embed("a big smile", 512).dot(hash_embed("a big smile!", 512));
  EXPECT_GT(hashed, 0.9);
}

TEST(Encoder, RejectsTinyDimension) { EXPECT_THROW(hash_embed("a", 4), InputError); }

TEST(Encoder, FileBackendNamesMissingText) {
  std::istringstream in(R"({"chunk":"a dog","vector":[1,0,0]})");
  const auto table = read_embeddings(in);
  const std::string msg = error_of([&] { encode_table({"a dog", "a cat"}, table, "file"); });
  EXPECT_THAT(msg, HasSubstr("a cat"));
}

TEST(Encoder, FileBackendRejectsMixedDimensions) {
  std::istringstream in(R"({"chunk":"a","vector":[1,0]}
{"chunk":"b","vector":[1,0,0]})");
  EXPECT_THROW(read_embeddings(in), InputError);
}

TEST(Encoder, ParseBackend) {
  EXPECT_EQ(std::get<HashBackend>(parse_backend("hash:512")).dim, 512u);
  EXPECT_EQ(std::get<FileBackend>(parse_backend("file:/tmp/e.jsonl")).path, "/tmp/e.jsonl");
  EXPECT_THROW(parse_backend("hash:abc"), InputError);
  EXPECT_THROW(parse_backend("bert"), InputError);
}

TEST(Encoder, JsonlRoundTrip) {
  const EmbeddingMatrix m = encode_hash({"a cat", "a dog"}, 16);
  const EmbeddingMatrix back = embeddings_from_jsonl(to_jsonl(m), m.backend_id);
  EXPECT_EQ(back.texts, m.texts);
  EXPECT_TRUE(back.vectors == m.vectors);
}

}  // namespace
}  // namespace biaslens
