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

// biaslens command line. Exit codes: 0 ok, 2 input error, 3 infeasible
// configuration, 4 experiment failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "biaslens/biaslens.hpp"
#include "biaslens/review_service.hpp"

namespace {

using namespace biaslens;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitExperiment = 4;

struct Globals {
  std::uint64_t seed = 7;
  unsigned threads = 1;
  std::string manifest_out;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct ReduceFlags {
  std::optional<double> variance;
  std::optional<std::size_t> components;
  bool no_unit_norm = false;

  ComponentSelection selection() const {
    if (components) return ComponentSelection::fixed(*components);
    return ComponentSelection::by_variance(variance.value_or(0.90));
  }
};

struct ClusterFlags {
  std::string mode = "two-stage";
  std::size_t categories = 8;
  double sigma_max = 0.15;
  double z_dist = 1.0;
  std::string variance_norm = "mean";
  std::size_t restarts = 5;

  ClusteringParams params(std::uint64_t seed) const {
    ClusteringParams p;
    p.categories = categories;
    p.sigma_max = sigma_max;
    p.z_dist = z_dist;
    p.variance_norm = parse_variance_norm(variance_norm);
    p.seed = seed;
    p.restarts = restarts;
    return p;
  }
};

struct CorrelateFlags {
  double phi_threshold = 0.05;
  double alpha = 0.05;
  std::string match = "provenance";
  std::string robustness_labels;
};

void add_reduce_flags(CLI::App* cmd, ReduceFlags& f) {
  auto* v = cmd->add_option("--variance", f.variance, "cumulative explained-variance threshold (default 0.90)")
                ->check(CLI::Range(0.0, 1.0));
  auto* c = cmd->add_option("--components", f.components, "fixed number of components");
  v->excludes(c);
  auto* on = cmd->add_flag("--unit-norm", "rescale reduced rows to unit length (default)");
  cmd->add_flag("--no-unit-norm", f.no_unit_norm, "keep reduced vectors unscaled")->excludes(on);
}

void add_cluster_flags(CLI::App* cmd, ClusterFlags& f) {
  cmd->add_option("--mode", f.mode, "two-stage|agglomerative")->capture_default_str();
  cmd->add_option("--categories", f.categories, "stage-1 category count")->capture_default_str();
  cmd->add_option("--sigma-max", f.sigma_max, "stage-2 mean within-cluster variance bound")->capture_default_str();
  cmd->add_option("--z-dist,--linkage-threshold", f.z_dist, "agglomerative complete-linkage cut distance")->capture_default_str();
  cmd->add_option("--variance-norm", f.variance_norm, "mean|sum")->capture_default_str();
  cmd->add_option("--restarts", f.restarts, "k-means restarts")->capture_default_str();
}

void add_correlate_flags(CLI::App* cmd, CorrelateFlags& f) {
  cmd->add_option("--phi-threshold", f.phi_threshold, "retain pairs with |phi| above this")->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "chi-square significance level")->capture_default_str();
  cmd->add_option("--match", f.match, "provenance|substring")->capture_default_str();
  cmd->add_option("--robustness-labels", f.robustness_labels, "comma-separated corpus labels to compare against");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biaslens: discover spurious feature correlations in captioned corpora"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
  app.add_option("--manifest-out", g.manifest_out, "write the run manifest (with timestamps) here");
  app.set_version_flag("--version", std::string(kToolVersion));

  // ingest
  std::string ingest_input, ingest_out, caption_policy = "first";
  auto* ingest = app.add_subcommand("ingest", "validate a corpus and fix one caption per record");
  ingest->add_option("--input", ingest_input)->required();
  ingest->add_option("--caption-policy", caption_policy, "first|random")->capture_default_str();
  ingest->add_option("--out", ingest_out)->required();

  // chunk
  std::string chunk_corpus_path, chunk_out;
  std::optional<std::string> chunk_pre;
  auto* chunk = app.add_subcommand("chunk", "extract noun chunks");
  chunk->add_option("--corpus", chunk_corpus_path)->required();
  chunk->add_option("--precomputed", chunk_pre, "JSONL of {id, chunks}");
  chunk->add_option("--out", chunk_out)->required();

  // embed
  std::string embed_chunks, embed_out, backend = "hash:512";
  auto* embed = app.add_subcommand("embed", "embed unique chunk texts");
  embed->add_option("--chunks", embed_chunks)->required();
  embed->add_option("--backend", backend, "hash:<d> or file:<path>")->capture_default_str();
  embed->add_option("--out", embed_out)->required();

  // reduce
  std::string reduce_in, reduce_out;
  ReduceFlags rf;
  auto* reduce = app.add_subcommand("reduce", "PCA reduction");
  reduce->add_option("--embeddings,--emb", reduce_in)->required();
  add_reduce_flags(reduce, rf);
  reduce->add_option("--out", reduce_out)->required();

  // cluster
  std::string cluster_in, cluster_out;
  ClusterFlags cf;
  auto* clus = app.add_subcommand("cluster", "group reduced chunks into features");
  clus->add_option("--reduced", cluster_in)->required();
  add_cluster_flags(clus, cf);
  clus->add_option("--out", cluster_out)->required();

  // correlate
  std::string corr_clusters, corr_chunks, corr_corpus, corr_out;
  CorrelateFlags kf;
  auto* corr = app.add_subcommand("correlate", "pairwise phi and chi-square over feature presence");
  corr->add_option("--clusters", corr_clusters)->required();
  corr->add_option("--chunks", corr_chunks)->required();
  corr->add_option("--corpus", corr_corpus)->required();
  add_correlate_flags(corr, kf);
  corr->add_option("--out", corr_out)->required();

  // weights
  std::string w_report, w_decisions, w_out, w_mode = "balance";
  auto* weights = app.add_subcommand("weights", "sampling weights from reviewed decisions");
  weights->add_option("--report", w_report)->required();
  weights->add_option("--decisions", w_decisions)->required();
  weights->add_option("--mode", w_mode, "balance|decorrelate")->capture_default_str();
  weights->add_option("--out", w_out)->required();

  // simulate
  std::string sim_config, sim_out;
  std::size_t sim_seeds = 3;
  bool sim_resample = false;
  auto* sim = app.add_subcommand("simulate", "synthetic worst-group experiment");
  sim->add_option("--config", sim_config, "JSON config (fields default when absent)");
  sim->add_option("--seeds", sim_seeds, "number of seeds, starting at --seed")->capture_default_str();
  sim->add_flag("--resample", sim_resample, "consume weights by resampling instead of loss weighting");
  sim->add_option("--out", sim_out)->required();

  // serve
  std::string srv_report, srv_decisions, srv_ui, srv_host = "127.0.0.1";
  int srv_port = 8787;
  auto* serve = app.add_subcommand("serve", "local review service");
  serve->add_option("--report", srv_report)->required();
  serve->add_option("--decisions", srv_decisions)->required();
  serve->add_option("--ui", srv_ui, "static UI directory served at /");
  serve->add_option("--host", srv_host)->capture_default_str();
  serve->add_option("--port", srv_port)->capture_default_str();

  // run
  RunAllOptions ro;
  std::string run_policy = "first", run_match = "provenance", run_wmode = "balance";
  std::optional<std::string> run_pre, run_decisions;
  ReduceFlags rrf;
  ClusterFlags rcf;
  CorrelateFlags rkf;
  auto* run = app.add_subcommand("run", "ingest through correlate (and weights with --decisions)");
  run->add_option("--input", ro.input)->required();
  run->add_option("--out-dir", ro.out_dir)->required();
  run->add_option("--caption-policy", run_policy)->capture_default_str();
  run->add_option("--precomputed", run_pre);
  run->add_option("--backend", ro.config.backend)->capture_default_str();
  add_reduce_flags(run, rrf);
  add_cluster_flags(run, rcf);
  add_correlate_flags(run, rkf);
  run->add_option("--decisions", run_decisions);
  run->add_flag("--emit-weights", ro.emit_weights, "also write weights.jsonl (needs --decisions)");
  run->add_option("--weight-mode", run_wmode, "balance|decorrelate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  RunManifest rm;
  rm.command = app.get_subcommands().front()->get_name();
  rm.started_at = utc_now_iso8601();
  rm.global = {{"seed", g.seed}, {"threads", g.threads}};
  int rc = kExitOk;

  try {
    if (*ingest) {
      rm.stages.push_back(stage_ingest(ingest_input, parse_caption_policy(caption_policy), g.seed, ingest_out));
    } else if (*chunk) {
      rm.stages.push_back(stage_chunk(chunk_corpus_path, chunk_pre, chunk_out, g.threads));
    } else if (*embed) {
      rm.stages.push_back(stage_embed(embed_chunks, backend, embed_out, g.threads));
    } else if (*reduce) {
      rm.stages.push_back(stage_reduce(reduce_in, rf.selection(), !rf.no_unit_norm, reduce_out, g.threads));
    } else if (*clus) {
      rm.stages.push_back(stage_cluster(cluster_in, parse_cluster_mode(cf.mode), cf.params(g.seed), cluster_out));
    } else if (*corr) {
      CorrelateOptions co{kf.phi_threshold, kf.alpha, parse_match_mode(kf.match), split_list(kf.robustness_labels),
                          g.threads};
      rm.stages.push_back(stage_correlate(corr_clusters, corr_chunks, corr_corpus, co, corr_out));
    } else if (*weights) {
      rm.stages.push_back(stage_weights(w_report, w_decisions, parse_weight_mode(w_mode), w_out));
    } else if (*sim) {
      ExperimentConfig cfg =
          sim_config.empty() ? ExperimentConfig{} : experiment_config_from_json(parse_json_file(sim_config));
      cfg.resample = cfg.resample || sim_resample;
      cfg.pipeline.threads = g.threads;
      const auto seeds = seed_range(g.seed, sim_seeds);
      const ExperimentSummary summary = run_experiments(cfg, seeds);
      StageManifest m;
      m.stage = "simulate";
      m.params = to_json(cfg);
      m.params["seeds"] = seeds;
      if (!sim_config.empty()) m.inputs["config"] = digest_bytes(read_file(sim_config));
      nlohmann::json out = to_json(summary);
      out["manifest"] = m.to_json();
      write_file(sim_out, dump_json(out));
      rm.stages.push_back(m.to_json());
      for (const auto& r : summary.runs)
        if (!r.recovered) {
          std::cerr << "biaslens: seed " << r.seed << ": " << r.failure << "\n";
          rc = kExitExperiment;
        }
    } else if (*serve) {
      ReviewSession session(load_report(srv_report), srv_decisions);
      auto server = make_server(session, srv_ui);
      std::cerr << "biaslens: serving on http://" << srv_host << ":" << srv_port << "\n";
      if (!server->listen(srv_host, srv_port)) throw InputError("could not bind " + srv_host + ":" + std::to_string(srv_port));
    } else if (*run) {
      auto& c = ro.config;
      c.caption_policy = parse_caption_policy(run_policy);
      c.selection_seed = g.seed;
      c.selection = rrf.selection();
      c.unit_norm = !rrf.no_unit_norm;
      c.mode = parse_cluster_mode(rcf.mode);
      c.cluster = rcf.params(g.seed);
      c.phi_threshold = rkf.phi_threshold;
      c.alpha = rkf.alpha;
      c.match = parse_match_mode(rkf.match);
      c.robustness_labels = split_list(rkf.robustness_labels);
      c.threads = g.threads;
      ro.precomputed_chunks = run_pre;
      ro.decisions = run_decisions;
      ro.weight_mode = parse_weight_mode(run_wmode);
      for (auto& s : run_all(ro)) rm.stages.push_back(s);
    }
  } catch (const InfeasibleConfig& e) {
    std::cerr << "biaslens: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InputError& e) {
    std::cerr << "biaslens: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "biaslens: " << e.what() << "\n";
    return kExitInput;
  }

  if (!g.manifest_out.empty()) {
    rm.finished_at = utc_now_iso8601();
    try {
      write_file(g.manifest_out, dump_json(rm.to_json()));
    } catch (const Error& e) {
      std::cerr << "biaslens: " << e.what() << "\n";
      return kExitInput;
    }
  }
  return rc;
}
