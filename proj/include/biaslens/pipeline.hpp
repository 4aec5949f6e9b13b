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

// Discovery pipeline: ingest -> chunk -> embed -> reduce -> cluster ->
// correlate, plus the weights stage. Each stage exists twice: as an
// in-memory call (`discover`) and as a file-to-file step used by the CLI.
// The file steps are what `run_all` chains, so a chained run and six manual
// subcommands write the same bytes.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "biaslens/chunker.hpp"
#include "biaslens/clusterer.hpp"
#include "biaslens/common.hpp"
#include "biaslens/corpus.hpp"
#include "biaslens/correlator.hpp"
#include "biaslens/encoder.hpp"
#include "biaslens/manifest.hpp"
#include "biaslens/mitigator.hpp"
#include "biaslens/reducer.hpp"

namespace biaslens {

struct PipelineConfig {
  CaptionPolicy caption_policy = CaptionPolicy::kFirst;
  std::uint64_t selection_seed = 7;
  std::string backend = "hash:512";
  ComponentSelection selection = ComponentSelection::by_variance(0.90);
  bool unit_norm = true;
  ClusterMode mode = ClusterMode::kTwoStage;
  ClusteringParams cluster;
  double phi_threshold = 0.05;
  double alpha = 0.05;
  MatchMode match = MatchMode::kProvenance;
  std::vector<std::string> robustness_labels;
  unsigned threads = 1;
};

struct Discovery {
  ChunkSet chunks;
  EmbeddingMatrix embeddings;
  PcaModel pca;
  ReducedMatrix reduced;
  FeatureClustering clustering;
  IndicatorMatrix indicators;
  CorrelationReport report;
};

inline IndicatorMatrix build_indicators(const FeatureClustering& fc, const ChunkSet& chunks,
                                        const Corpus& corpus, MatchMode match) {
  return match == MatchMode::kProvenance ? build_indicators(fc, chunks)
                                         : build_indicators_substring(fc, corpus);
}

/// In-memory run of chunk -> embed -> reduce -> cluster -> correlate.
inline Discovery discover(const Corpus& corpus, const PipelineConfig& cfg) {
  Discovery d;
  d.chunks = chunk_corpus(corpus, cfg.threads);
  d.embeddings = encode(d.chunks, parse_backend(cfg.backend), cfg.threads);
  d.pca = fit_pca(d.embeddings, cfg.selection);
  d.reduced = transform(d.pca, d.embeddings, cfg.unit_norm, cfg.threads);
  d.clustering = cluster(d.reduced, cfg.mode, cfg.cluster);
  d.indicators = build_indicators(d.clustering, d.chunks, corpus, cfg.match);
  d.report = correlate_all(d.indicators, cfg.phi_threshold, cfg.alpha, cfg.threads);
  return d;
}

// ---------------------------------------------------------------------------
// Report document

struct FeatureInfo {
  std::size_t id = 0;
  std::string label;
  std::vector<std::string> members;
  std::vector<std::size_t> records;  // records where the feature is present
};

/// Everything a reviewer (or the weights stage) needs without the upstream
/// files: record ids and captions, features with their presence, and all
/// pairwise statistics.
struct ReportDocument {
  std::vector<std::string> record_ids;
  std::vector<std::string> captions;
  std::vector<FeatureInfo> features;
  CorrelationReport correlations;
  MatchMode match = MatchMode::kProvenance;
  nlohmann::json robustness;  // null unless requested
  nlohmann::json manifest;

  const FeatureInfo* feature(std::size_t id) const {
    for (const auto& f : features)
      if (f.id == id) return &f;
    return nullptr;
  }

  IndicatorMatrix indicators() const {
    IndicatorMatrix im;
    im.n = record_ids.size();
    for (const auto& f : features) {
      BitVector t(im.n);
      for (auto r : f.records) {
        if (r >= im.n) throw InputError("feature " + std::to_string(f.id) + " references record out of range");
        t.set(r);
      }
      im.indicators.push_back(std::move(t));
      im.feature_ids.push_back(f.id);
    }
    return im;
  }
};

inline ReportDocument make_report_document(const Corpus& corpus, const FeatureClustering& fc,
                                           const IndicatorMatrix& im, CorrelationReport report,
                                           MatchMode match) {
  ReportDocument doc;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    doc.record_ids.push_back(corpus.record(i).id);
    doc.captions.push_back(corpus.caption(i));
  }
  for (std::size_t k = 0; k < fc.clusters.size(); ++k) {
    const auto& c = fc.clusters[k];
    FeatureInfo fi{c.id, c.label, c.members, {}};
    const BitVector& t = im.of(c.id);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i]) fi.records.push_back(i);
    doc.features.push_back(std::move(fi));
  }
  doc.correlations = std::move(report);
  doc.match = match;
  return doc;
}

inline nlohmann::json entry_to_json(const CorrelationEntry& e) {
  return {{"f", e.f},
          {"f'", e.g},
          {"phi", e.phi ? nlohmann::json(*e.phi) : nlohmann::json()},
          {"chi2", e.chi2},
          {"p", e.p_value},
          {"cells", {{"x11", e.table.x11}, {"x10", e.table.x10}, {"x01", e.table.x01}, {"x00", e.table.x00}}},
          {"significant", e.significant}};
}

inline CorrelationEntry entry_from_json(const nlohmann::json& j) {
  CorrelationEntry e;
  e.f = j.at("f").get<std::size_t>();
  e.g = j.at("f'").get<std::size_t>();
  if (!j.at("phi").is_null()) e.phi = j["phi"].get<double>();
  e.chi2 = j.at("chi2").get<double>();
  e.p_value = j.at("p").get<double>();
  const auto& c = j.at("cells");
  e.table = {c.at("x11").get<std::uint64_t>(), c.at("x10").get<std::uint64_t>(),
             c.at("x01").get<std::uint64_t>(), c.at("x00").get<std::uint64_t>()};
  e.significant = j.at("significant").get<bool>();
  return e;
}

inline nlohmann::json to_json(const ReportDocument& doc) {
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < doc.record_ids.size(); ++i)
    records.push_back({{"id", doc.record_ids[i]}, {"caption", doc.captions[i]}});
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : doc.features)
    features.push_back({{"id", f.id},
                        {"label", f.label},
                        {"size", f.members.size()},
                        {"support", f.records.size()},
                        {"members", f.members},
                        {"records", f.records}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& e : doc.correlations.entries) pairs.push_back(entry_to_json(e));
  nlohmann::json retained = nlohmann::json::array();
  for (auto k : doc.correlations.retained)
    retained.push_back({doc.correlations.entries[k].f, doc.correlations.entries[k].g});
  nlohmann::json j{{"N", doc.record_ids.size()},
                   {"F", doc.features.size()},
                   {"phi_threshold", doc.correlations.phi_threshold},
                   {"alpha", doc.correlations.alpha},
                   {"match", to_string(doc.match)},
                   {"records", records},
                   {"features", features},
                   {"pairs", pairs},
                   {"retained", retained},
                   {"manifest", doc.manifest}};
  if (!doc.robustness.is_null()) j["robustness"] = doc.robustness;
  return j;
}

inline ReportDocument report_from_json(const nlohmann::json& j) {
  try {
    ReportDocument doc;
    for (const auto& r : j.at("records")) {
      doc.record_ids.push_back(r.at("id").get<std::string>());
      doc.captions.push_back(r.at("caption").get<std::string>());
    }
    for (const auto& f : j.at("features"))
      doc.features.push_back({f.at("id").get<std::size_t>(), f.at("label").get<std::string>(),
                              f.at("members").get<std::vector<std::string>>(),
                              f.at("records").get<std::vector<std::size_t>>()});
    doc.correlations.phi_threshold = j.at("phi_threshold").get<double>();
    doc.correlations.alpha = j.at("alpha").get<double>();
    for (const auto& p : j.at("pairs")) doc.correlations.entries.push_back(entry_from_json(p));
    for (const auto& r : j.at("retained")) {
      const auto a = r.at(0).get<std::size_t>(), b = r.at(1).get<std::size_t>();
      std::size_t k = 0;
      while (k < doc.correlations.entries.size() &&
             !(doc.correlations.entries[k].f == a && doc.correlations.entries[k].g == b))
        ++k;
      if (k == doc.correlations.entries.size())
        throw InputError("retained pair (" + std::to_string(a) + ", " + std::to_string(b) + ") has no entry");
      doc.correlations.retained.push_back(k);
    }
    doc.match = parse_match_mode(j.at("match").get<std::string>());
    if (j.contains("robustness")) doc.robustness = j["robustness"];
    doc.manifest = j.value("manifest", nlohmann::json());
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed report: ") + e.what());
  }
}

inline nlohmann::json to_json(const RobustnessProfile& p) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : p.rows) rows.push_back({{"feature", r.feature}, {"label", r.label}, {"pearson", opt(r.pearson)}});
  nlohmann::json best = nlohmann::json::array();
  for (std::size_t i = 0; i < p.best_match.size(); ++i)
    best.push_back({{"label", p.best_match[i].first}, {"feature", p.best_match[i].second},
                    {"pearson", p.best_pearson[i]}});
  return {{"rows", rows},
          {"best_match", best},
          {"presence_agreement", opt(p.presence_agreement)},
          {"label_phis", p.label_phis},
          {"feature_phis", p.feature_phis},
          {"pairwise_agreement", opt(p.pairwise_agreement)}};
}

// ---------------------------------------------------------------------------
// File stages

/// Prefixes errors with the stage name, preserving the error category.
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InfeasibleConfig& e) {
    throw InfeasibleConfig("stage '" + stage + "': " + e.what());
  } catch (const InputError& e) {
    throw InputError("stage '" + stage + "': " + e.what());
  } catch (const Error& e) {
    throw Error("stage '" + stage + "': " + e.what());
  }
}

inline void write_with_sidecar(const std::string& path, const std::string& bytes, const StageManifest& m) {
  write_file(path, bytes);
  write_file(sidecar_path(path), dump_json(m.to_json()));
}

inline nlohmann::json stage_ingest(const std::string& input, CaptionPolicy policy, std::uint64_t seed,
                                   const std::string& out) {
  const std::string bytes = read_file(input);
  std::istringstream in(bytes);
  const Corpus corpus = parse_corpus(in, policy, seed);
  StageManifest m;
  m.stage = "ingest";
  m.params = {{"caption_policy", to_string(policy)}, {"seed", seed}, {"records", corpus.size()}};
  m.inputs["input"] = digest_bytes(bytes);
  write_with_sidecar(out, to_jsonl(corpus), m);
  return m.to_json();
}

inline Corpus load_ingested(const std::string& path) {
  const auto man = manifest_of(path);
  CaptionPolicy policy = CaptionPolicy::kFirst;
  std::uint64_t seed = 0;
  if (man.is_object() && man.contains("params")) {
    policy = parse_caption_policy(man["params"].value("caption_policy", "first"));
    seed = man["params"].value("seed", std::uint64_t{0});
  }
  return load_corpus(path, policy, seed);
}

inline nlohmann::json stage_chunk(const std::string& corpus_path, const std::optional<std::string>& precomputed,
                                  const std::string& out, unsigned threads = 1) {
  const Corpus corpus = load_ingested(corpus_path);
  StageManifest m;
  m.stage = "chunk";
  m.inputs["corpus"] = digest_bytes(read_file(corpus_path));
  ChunkSet cs;
  if (precomputed) {
    const std::string bytes = read_file(*precomputed);
    std::istringstream in(bytes);
    cs = chunk_precomputed(corpus, in);
    m.inputs["precomputed"] = digest_bytes(bytes);
    m.params["source"] = "precomputed";
  } else {
    cs = chunk_corpus(corpus, threads);
    m.params["source"] = "rule-based";
  }
  m.params["M"] = cs.size();
  m.params["unique"] = cs.unique_texts().size();
  if (auto up = manifest_of(corpus_path); !up.is_null()) m.upstream.push_back(up);
  nlohmann::json doc = to_json(cs);
  doc["manifest"] = m.to_json();
  write_file(out, dump_json(doc));
  return m.to_json();
}

inline ChunkSet load_chunks(const std::string& path) { return chunkset_from_json(parse_json_file(path)); }

inline nlohmann::json stage_embed(const std::string& chunks_path, const std::string& backend_spec,
                                  const std::string& out, unsigned threads = 1) {
  const auto doc = parse_json_file(chunks_path);
  const ChunkSet cs = chunkset_from_json(doc);
  const EncoderBackend backend = parse_backend(backend_spec);
  const EmbeddingMatrix emb = encode(cs, backend, threads);
  StageManifest m;
  m.stage = "embed";
  m.params = {{"backend", emb.backend_id}, {"d", emb.dim()}, {"rows", emb.rows()}};
  m.inputs["chunks"] = digest_bytes(read_file(chunks_path));
  if (auto up = manifest_of(chunks_path, &doc); !up.is_null()) m.upstream.push_back(up);
  write_with_sidecar(out, to_jsonl(emb), m);
  return m.to_json();
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  const auto man = manifest_of(path);
  std::string backend_id = "file";
  if (man.is_object() && man.contains("params")) backend_id = man["params"].value("backend", backend_id);
  return embeddings_from_jsonl(read_file(path), backend_id);
}

inline nlohmann::json stage_reduce(const std::string& emb_path, ComponentSelection sel, bool unit_norm,
                                   const std::string& out, unsigned threads = 1) {
  const EmbeddingMatrix emb = load_embeddings(emb_path);
  const PcaModel model = fit_pca(emb, sel);
  const ReducedMatrix red = transform(model, emb, unit_norm, threads);
  StageManifest m;
  m.stage = "reduce";
  m.params = {{"unit_norm", unit_norm}, {"k", model.k}, {"zero_rows", red.zero_rows}};
  m.params["variance"] = sel.variance ? nlohmann::json(*sel.variance) : nlohmann::json();
  m.params["components"] = sel.components ? nlohmann::json(*sel.components) : nlohmann::json();
  m.inputs["embeddings"] = digest_bytes(read_file(emb_path));
  if (auto up = manifest_of(emb_path); !up.is_null()) m.upstream.push_back(up);
  nlohmann::json doc{{"model", to_json(model)}, {"reduced", to_json(red)}, {"manifest", m.to_json()}};
  write_file(out, dump_json(doc));
  return m.to_json();
}

inline nlohmann::json stage_cluster(const std::string& reduced_path, ClusterMode mode, const ClusteringParams& p,
                                    const std::string& out) {
  const auto doc = parse_json_file(reduced_path);
  const ReducedMatrix red = reduced_from_json(doc.at("reduced"));
  const FeatureClustering fc = cluster(red, mode, p);
  StageManifest m;
  m.stage = "cluster";
  nlohmann::json body = to_json(fc);
  m.params = body["params"];
  m.params["mode"] = to_string(mode);
  m.inputs["reduced"] = digest_bytes(read_file(reduced_path));
  if (auto up = manifest_of(reduced_path, &doc); !up.is_null()) m.upstream.push_back(up);
  body["manifest"] = m.to_json();
  write_file(out, dump_json(body));
  return m.to_json();
}

struct CorrelateOptions {
  double phi_threshold = 0.05;
  double alpha = 0.05;
  MatchMode match = MatchMode::kProvenance;
  std::vector<std::string> robustness_labels;
  unsigned threads = 1;
};

inline nlohmann::json stage_correlate(const std::string& clusters_path, const std::string& chunks_path,
                                      const std::string& corpus_path, const CorrelateOptions& opt,
                                      const std::string& out) {
  const auto cdoc = parse_json_file(clusters_path);
  const FeatureClustering fc = clustering_from_json(cdoc);
  const auto kdoc = parse_json_file(chunks_path);
  const ChunkSet cs = chunkset_from_json(kdoc);
  const Corpus corpus = load_ingested(corpus_path);
  if (cs.record_count() != corpus.size())
    throw InputError("chunks file covers " + std::to_string(cs.record_count()) + " records but corpus has " +
                     std::to_string(corpus.size()));
  const IndicatorMatrix im = build_indicators(fc, cs, corpus, opt.match);
  ReportDocument doc = make_report_document(corpus, fc, im, correlate_all(im, opt.phi_threshold, opt.alpha, opt.threads),
                                            opt.match);
  if (!opt.robustness_labels.empty()) doc.robustness = to_json(robustness_profile(im, corpus, opt.robustness_labels));

  StageManifest m;
  m.stage = "correlate";
  m.params = {{"phi_threshold", opt.phi_threshold}, {"alpha", opt.alpha}, {"match", to_string(opt.match)},
              {"F", fc.clusters.size()}, {"pairs", doc.correlations.entries.size()},
              {"retained", doc.correlations.retained.size()}};
  if (!opt.robustness_labels.empty()) m.params["robustness_labels"] = opt.robustness_labels;
  m.inputs["clusters"] = digest_bytes(read_file(clusters_path));
  m.inputs["chunks"] = digest_bytes(read_file(chunks_path));
  m.inputs["corpus"] = digest_bytes(read_file(corpus_path));
  for (const auto& [path, d] : {std::pair{clusters_path, &cdoc}, std::pair{chunks_path, &kdoc}})
    if (auto up = manifest_of(path, d); !up.is_null()) m.upstream.push_back(up);
  doc.manifest = m.to_json();
  write_file(out, dump_json(to_json(doc)));
  return m.to_json();
}

inline ReportDocument load_report(const std::string& path) { return report_from_json(parse_json_file(path)); }

inline std::vector<SelectionDecision> load_decisions(const std::string& path) {
  return decisions_from_json(parse_json_file(path));
}

inline std::string weights_jsonl(const ReportDocument& doc, const MitigationPlan& plan) {
  std::string out;
  for (std::size_t i = 0; i < doc.record_ids.size(); ++i) {
    out += nlohmann::json{{"id", doc.record_ids[i]}, {"weight", plan.weights[i]}}.dump();
    out += '\n';
  }
  return out;
}

inline nlohmann::json plan_summary(const MitigationPlan& plan) {
  nlohmann::json cells = nlohmann::json::array();
  for (int y = 0; y < 2; ++y)
    for (int s = 0; s < 2; ++s)
      cells.push_back({{"y", y}, {"s", s}, {"count", plan.group_counts[y][s]}, {"weight", plan.cell_weights[y][s]}});
  return {{"mode", to_string(plan.mode)}, {"active", to_json(plan.active)}, {"cells", cells}};
}

inline nlohmann::json stage_weights(const std::string& report_path, const std::string& decisions_path,
                                    WeightMode mode, const std::string& out) {
  const auto rdoc = parse_json_file(report_path);
  const ReportDocument report = report_from_json(rdoc);
  const auto decisions = load_decisions(decisions_path);
  const MitigationPlan plan = apply_selection(report.correlations, decisions, report.indicators(), mode);
  StageManifest m;
  m.stage = "weights";
  m.params = plan_summary(plan);
  m.inputs["report"] = digest_bytes(read_file(report_path));
  m.inputs["decisions"] = digest_bytes(read_file(decisions_path));
  if (auto up = manifest_of(report_path, &rdoc); !up.is_null()) m.upstream.push_back(up);
  write_with_sidecar(out, weights_jsonl(report, plan), m);
  return m.to_json();
}

struct RunAllOptions {
  std::string input;
  std::string out_dir;
  PipelineConfig config;
  std::optional<std::string> precomputed_chunks;
  std::optional<std::string> decisions;
  bool emit_weights = false;
  WeightMode weight_mode = WeightMode::kBalance;
};

struct RunAllPaths {
  std::string corpus, chunks, embeddings, reduced, clusters, report, weights;

  explicit RunAllPaths(const std::string& dir) {
    const std::filesystem::path d(dir);
    corpus = (d / "corpus.jsonl").string();
    chunks = (d / "chunks.json").string();
    embeddings = (d / "embeddings.jsonl").string();
    reduced = (d / "reduced.json").string();
    clusters = (d / "clusters.json").string();
    report = (d / "report.json").string();
    weights = (d / "weights.jsonl").string();
  }
};

/// Chains the file stages into out_dir. Stops after correlate unless a
/// decisions file is supplied (required with emit_weights).
inline nlohmann::json run_all(const RunAllOptions& o) {
  if (o.emit_weights && !o.decisions) throw InputError("decisions required: --emit-weights needs --decisions");
  std::filesystem::create_directories(o.out_dir);
  const RunAllPaths p(o.out_dir);
  const auto& c = o.config;
  nlohmann::json stages = nlohmann::json::array();
  stages.push_back(with_stage("ingest", [&] { return stage_ingest(o.input, c.caption_policy, c.selection_seed, p.corpus); }));
  stages.push_back(with_stage("chunk", [&] { return stage_chunk(p.corpus, o.precomputed_chunks, p.chunks, c.threads); }));
  stages.push_back(with_stage("embed", [&] { return stage_embed(p.chunks, c.backend, p.embeddings, c.threads); }));
  stages.push_back(with_stage("reduce", [&] { return stage_reduce(p.embeddings, c.selection, c.unit_norm, p.reduced, c.threads); }));
  stages.push_back(with_stage("cluster", [&] { return stage_cluster(p.reduced, c.mode, c.cluster, p.clusters); }));
  CorrelateOptions co{c.phi_threshold, c.alpha, c.match, c.robustness_labels, c.threads};
  stages.push_back(with_stage("correlate", [&] { return stage_correlate(p.clusters, p.chunks, p.corpus, co, p.report); }));
  if (o.decisions)
    stages.push_back(with_stage("weights", [&] { return stage_weights(p.report, *o.decisions, o.weight_mode, p.weights); }));
  return stages;
}

}  // namespace biaslens
