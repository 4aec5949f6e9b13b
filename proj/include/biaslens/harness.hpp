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

// Synthetic evaluation harness: a caption corpus with a planted correlation
// between two feature families, a weighted logistic classifier, and the
// worst-group / average-group protocol.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/corpus.hpp"
#include "biaslens/mitigator.hpp"
#include "biaslens/pipeline.hpp"

namespace biaslens {

struct SyntheticConfig {
  std::size_t n = 5000;
  double p_target = 0.5;
  double p_spurious = 0.5;
  double phi_star = 0.3;
  std::vector<std::string> target_pool{"a big smile", "a big happy smile", "a big toothy smile"};
  std::vector<std::string> spurious_pool{"a bearded man", "a bearded guy", "a bearded gentleman"};
  // Subject phrase: one per caption. Scene and object phrases are optional.
  std::vector<std::string> subject_fillers{"a person", "a child", "a tourist", "a student", "a player", "a cyclist"};
  std::vector<std::string> scene_fillers{"the park",   "the street", "the beach",   "the kitchen",
                                         "the office", "the garden", "the station", "the market"};
  std::vector<std::string> object_fillers{"a red car",   "a blue umbrella", "a wooden table", "a small dog",
                                          "a yellow kite", "a green bottle", "a paper bag",   "a tall lamp"};
  double p_scene = 0.5;
  double p_object = 0.3;
  std::size_t feature_dim = 8;
  double signal_coeff = 1.0;
  double spurious_coeff = 2.0;
};

struct CellProbabilities {
  double p11 = 0, p10 = 0, p01 = 0, p00 = 0;  // (y, s)
};

/// Inverts the phi formula for given marginals; throws when a cell would be
/// negative.
inline CellProbabilities planted_cells(double p_t, double p_s, double phi_star) {
  if (!(p_t > 0.0 && p_t < 1.0) || !(p_s > 0.0 && p_s < 1.0))
    throw InfeasibleConfig("marginal probabilities must lie in (0,1)");
  if (!(phi_star >= -1.0 && phi_star <= 1.0)) throw InfeasibleConfig("phi_star must lie in [-1,1]");
  CellProbabilities c;
  c.p11 = p_t * p_s + phi_star * std::sqrt(p_t * (1 - p_t) * p_s * (1 - p_s));
  c.p10 = p_t - c.p11;
  c.p01 = p_s - c.p11;
  c.p00 = 1.0 - p_t - p_s + c.p11;
  constexpr double kSlack = 1e-12;
  for (double* v : {&c.p11, &c.p10, &c.p01, &c.p00}) {
    if (*v < -kSlack)
      throw InfeasibleConfig("phi_star=" + std::to_string(phi_star) + " is infeasible for p_target=" +
                             std::to_string(p_t) + ", p_spurious=" + std::to_string(p_s) +
                             " (a planted cell probability is negative)");
    *v = std::max(*v, 0.0);
  }
  return c;
}

inline void validate(const SyntheticConfig& c) {
  if (c.n < 4) throw InputError("synthetic corpus needs n >= 4");
  if (c.target_pool.empty() || c.spurious_pool.empty() || c.subject_fillers.empty())
    throw InputError("synonym pools and subject fillers must be non-empty");
  if (c.feature_dim < 2) throw InputError("feature_dim must be >= 2");
  planted_cells(c.p_target, c.p_spurious, c.phi_star);
}

struct SyntheticData {
  Corpus corpus;                    // labels: target, spurious
  std::vector<std::uint8_t> target;  // y
  std::vector<std::uint8_t> spurious;  // s
  Matrix features;                  // classifier design matrix, n x feature_dim
};

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const CellProbabilities cells = planted_cells(cfg.p_target, cfg.p_spurious, cfg.phi_star);
  Rng rng(seed);
  SyntheticData out;
  out.target.resize(cfg.n);
  out.spurious.resize(cfg.n);
  out.features.resize(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.feature_dim));
  std::vector<ImageRecord> records;
  records.reserve(cfg.n);
  const int width = static_cast<int>(std::to_string(cfg.n).size());
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double u = rng.uniform();
    int y = 0, s = 0;
    if (u < cells.p11) y = 1, s = 1;
    else if (u < cells.p11 + cells.p10) y = 1;
    else if (u < cells.p11 + cells.p10 + cells.p01) s = 1;
    out.target[i] = static_cast<std::uint8_t>(y);
    out.spurious[i] = static_cast<std::uint8_t>(s);

    std::string caption = cfg.subject_fillers[rng.below(cfg.subject_fillers.size())];
    if (y) caption += " with " + cfg.target_pool[rng.below(cfg.target_pool.size())];
    if (s) caption += " near " + cfg.spurious_pool[rng.below(cfg.spurious_pool.size())];
    if (!cfg.object_fillers.empty() && rng.uniform() < cfg.p_object)
      caption += " beside " + cfg.object_fillers[rng.below(cfg.object_fillers.size())];
    if (!cfg.scene_fillers.empty() && rng.uniform() < cfg.p_scene)
      caption += " in " + cfg.scene_fillers[rng.below(cfg.scene_fillers.size())];

    std::string id = std::to_string(i);
    id = "syn-" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    records.push_back({std::move(id), {std::move(caption)}, {{"target", y}, {"spurious", s}}});

    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < out.features.cols(); ++d) out.features(r, d) = rng.normal();
    out.features(r, 0) += cfg.signal_coeff * y;
    out.features(r, 1) += cfg.spurious_coeff * s;
  }
  out.corpus = Corpus(std::move(records), std::vector<std::size_t>(cfg.n, 0), CaptionPolicy::kFirst, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Toy classifier

struct TrainOptions {
  double step = 0.1;
  std::size_t max_steps = 2000;
  double grad_tol = 1e-6;
};

/// theta = [bias, w_1..w_d].
struct LinearModel {
  Vector theta;
  std::vector<double> loss_history;  // loss before each step, then the final loss
  std::size_t steps = 0;

  double decision(const Matrix& x, Eigen::Index row) const {
    return theta(0) + x.row(row).dot(theta.tail(theta.size() - 1));
  }
};

namespace detail {

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_training_inputs(const Matrix& x, std::span<const std::uint8_t> y, std::span<const double> w) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw InputError("design matrix has " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                     " labels");
  if (!w.empty() && w.size() != y.size()) throw InputError("weight count does not match label count");
  if (!x.allFinite()) throw InputError("design matrix contains non-finite values");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] > 1) throw InputError("label at row " + std::to_string(i) + " is not binary");
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!std::isfinite(w[i]) || !(w[i] > 0.0))
      throw InputError("weight at row " + std::to_string(i) + " must be positive and finite");
}

}  // namespace detail

/// Weighted mean cross-entropy; empty weights mean uniform.
inline double logistic_loss(const Matrix& x, std::span<const std::uint8_t> y, std::span<const double> w,
                            const Vector& theta) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z = theta(0) + x.row(i).dot(theta.tail(theta.size() - 1));
    const double l = detail::softplus(z) - (y[static_cast<std::size_t>(i)] ? z : 0.0);
    s += (w.empty() ? 1.0 : w[static_cast<std::size_t>(i)]) * l;
  }
  return s / static_cast<double>(x.rows());
}

inline Vector logistic_gradient(const Matrix& x, std::span<const std::uint8_t> y, std::span<const double> w,
                                const Vector& theta) {
  Vector g = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z = theta(0) + x.row(i).dot(theta.tail(theta.size() - 1));
    const double r = (detail::sigmoid(z) - (y[static_cast<std::size_t>(i)] ? 1.0 : 0.0)) *
                     (w.empty() ? 1.0 : w[static_cast<std::size_t>(i)]);
    g(0) += r;
    g.tail(g.size() - 1) += r * x.row(i).transpose();
  }
  return g / static_cast<double>(x.rows());
}

/// Mean-normalized copy; exactly 1.0 everywhere when all weights are equal,
/// so equal weights reproduce the unweighted trajectory bit for bit.
inline std::vector<double> training_weights(std::span<const double> w) {
  if (w.empty()) return {};
  if (std::all_of(w.begin(), w.end(), [&](double v) { return v == w[0]; })) return std::vector<double>(w.size(), 1.0);
  return mean_normalized(std::vector<double>(w.begin(), w.end()));
}

/// Full-batch gradient descent from zero.
inline LinearModel train_toy_classifier(const Matrix& x, std::span<const std::uint8_t> y,
                                        std::span<const double> weights = {}, const TrainOptions& opt = {}) {
  detail::check_training_inputs(x, y, weights);
  const std::vector<double> w = training_weights(weights);
  LinearModel m;
  m.theta = Vector::Zero(x.cols() + 1);
  for (m.steps = 0; m.steps < opt.max_steps; ++m.steps) {
    m.loss_history.push_back(logistic_loss(x, y, w, m.theta));
    const Vector g = logistic_gradient(x, y, w, m.theta);
    if (g.norm() < opt.grad_tol) break;
    m.theta -= opt.step * g;
  }
  m.loss_history.push_back(logistic_loss(x, y, w, m.theta));
  return m;
}

/// Alternative consumption of weights: draw n rows with probability
/// proportional to weight, then train unweighted.
inline LinearModel train_resampled(const Matrix& x, std::span<const std::uint8_t> y, std::span<const double> weights,
                                   std::uint64_t seed, const TrainOptions& opt = {}) {
  detail::check_training_inputs(x, y, weights);
  if (weights.empty()) return train_toy_classifier(x, y, {}, opt);
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) cdf[i] = (acc += weights[i]);
  Rng rng(seed);
  Matrix xs(x.rows(), x.cols());
  std::vector<std::uint8_t> ys(y.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double u = rng.uniform() * acc;
    auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, cdf.size() - 1);
    xs.row(i) = x.row(static_cast<Eigen::Index>(k));
    ys[static_cast<std::size_t>(i)] = y[k];
  }
  return train_toy_classifier(xs, ys, {}, opt);
}

inline std::vector<std::uint8_t> predict(const LinearModel& m, const Matrix& x) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = m.decision(x, i) > 0.0 ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct GroupMetrics {
  std::array<std::array<double, 2>, 2> accuracy{};  // [y][s]
  std::array<std::array<std::size_t, 2>, 2> sizes{};
  double worst = 0.0;
  double avg = 0.0;
};

inline GroupMetrics group_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> y,
                                  std::span<const std::uint8_t> s) {
  if (pred.size() != y.size() || y.size() != s.size()) throw InputError("group_metrics: length mismatch");
  std::array<std::array<std::size_t, 2>, 2> correct{};
  GroupMetrics g;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 1 || s[i] > 1 || pred[i] > 1) throw InputError("group_metrics: non-binary value at " + std::to_string(i));
    ++g.sizes[y[i]][s[i]];
    if (pred[i] == y[i]) ++correct[y[i]][s[i]];
  }
  g.worst = 1.0;
  double sum = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      if (g.sizes[a][b] == 0)
        throw InputError("empty group (y=" + std::to_string(a) + ", s=" + std::to_string(b) + ")");
      g.accuracy[a][b] = static_cast<double>(correct[a][b]) / static_cast<double>(g.sizes[a][b]);
      g.worst = std::min(g.worst, g.accuracy[a][b]);
      sum += g.accuracy[a][b];
    }
  g.avg = sum / 4.0;
  return g;
}

struct ExperimentConfig {
  SyntheticConfig synthetic;
  PipelineConfig pipeline;
  WeightMode weight_mode = WeightMode::kBalance;
  // Rescale mitigation weights so each target label carries half the total
  // weight, as the training splits hold 50% of each target label.
  bool balance_target = true;
  bool resample = false;
  TrainOptions train;
};

/// Scales weights within each target group so both groups carry equal total
/// weight. Ratios inside a group are unchanged, so P'(s | y) is too.
inline std::vector<double> balance_target_groups(std::vector<double> w, std::span<const std::uint8_t> y) {
  if (w.size() != y.size()) throw InputError("weight count does not match label count");
  double total[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < w.size(); ++i) total[y[i] ? 1 : 0] += w[i];
  if (total[0] == 0.0 || total[1] == 0.0) throw InfeasibleConfig("a target group is empty");
  const double half = static_cast<double>(w.size()) / 2.0;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= half / total[y[i] ? 1 : 0];
  return w;
}

struct ExperimentResult {
  std::uint64_t seed = 0;
  bool recovered = false;
  std::string failure;
  std::optional<std::size_t> target_feature;
  std::optional<std::size_t> spurious_feature;
  std::optional<double> recovered_phi;
  std::optional<double> recovered_p;
  double empirical_phi = 0.0;  // between planted y and s
  std::size_t retained_pairs = 0;
  GroupMetrics unweighted;
  std::optional<GroupMetrics> mitigated;
};

namespace detail {

inline bool members_within(const std::vector<std::string>& members, const std::vector<std::string>& pool) {
  for (const auto& m : members)
    if (std::none_of(pool.begin(), pool.end(), [&](const std::string& p) { return normalize_chunk(p) == m; }))
      return false;
  return true;
}

}  // namespace detail

/// The first retained pair (in |phi| order) whose two clusters lie entirely
/// inside the target and spurious families. Returns (target id, spurious id).
inline std::optional<std::pair<std::size_t, std::size_t>> find_planted_pair(const FeatureClustering& fc,
                                                                            const CorrelationReport& report,
                                                                            const SyntheticConfig& cfg) {
  for (auto k : report.retained) {
    const auto& e = report.entries[k];
    const auto* a = fc.find(e.f);
    const auto* b = fc.find(e.g);
    if (!a || !b) continue;
    if (detail::members_within(a->members, cfg.target_pool) && detail::members_within(b->members, cfg.spurious_pool))
      return std::pair{e.f, e.g};
    if (detail::members_within(b->members, cfg.target_pool) && detail::members_within(a->members, cfg.spurious_pool))
      return std::pair{e.g, e.f};
  }
  return std::nullopt;
}

inline std::uint64_t test_split_seed(std::uint64_t seed) { return mix_seed(seed, 0x7e57u); }

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentResult res;
  res.seed = seed;
  const SyntheticData train = generate_synthetic(cfg.synthetic, seed);
  SyntheticConfig test_cfg = cfg.synthetic;
  test_cfg.phi_star = 0.0;
  const SyntheticData test = generate_synthetic(test_cfg, test_split_seed(seed));
  res.empirical_phi = phi(contingency(std::span<const std::uint8_t>(train.target),
                                      std::span<const std::uint8_t>(train.spurious)))
                          .value_or(0.0);

  const LinearModel base = train_toy_classifier(train.features, train.target, {}, cfg.train);
  res.unweighted = group_metrics(predict(base, test.features), test.target, test.spurious);

  PipelineConfig pc = cfg.pipeline;
  pc.cluster.seed = seed;
  const Discovery d = discover(train.corpus, pc);
  res.retained_pairs = d.report.retained.size();
  const auto pair = find_planted_pair(d.clustering, d.report, cfg.synthetic);
  if (!pair) {
    res.failure = "planted pair not recovered above phi_threshold=" + std::to_string(pc.phi_threshold);
    return res;
  }
  res.recovered = true;
  res.target_feature = pair->first;
  res.spurious_feature = pair->second;
  const auto* e = d.report.find(pair->first, pair->second);
  res.recovered_phi = e->phi;
  res.recovered_p = e->p_value;

  const Weights w = compute_weights(d.indicators, pair->first, pair->second, cfg.weight_mode);
  const std::vector<double> norm =
      mean_normalized(cfg.balance_target ? balance_target_groups(w.per_record, train.target) : w.per_record);
  const LinearModel mit = cfg.resample
                              ? train_resampled(train.features, train.target, norm, mix_seed(seed, 0x5eedu), cfg.train)
                              : train_toy_classifier(train.features, train.target, norm, cfg.train);
  res.mitigated = group_metrics(predict(mit, test.features), test.target, test.spurious);
  return res;
}

struct ExperimentSummary {
  std::vector<ExperimentResult> runs;
  bool all_recovered = false;
  double unweighted_worst = 0.0, unweighted_avg = 0.0;
  double mitigated_worst = 0.0, mitigated_avg = 0.0;  // over recovered runs

  double worst_gain() const { return mitigated_worst - unweighted_worst; }
  double avg_drop() const { return unweighted_avg - mitigated_avg; }
};

inline ExperimentSummary run_experiments(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  ExperimentSummary s;
  s.all_recovered = !seeds.empty();
  std::size_t mitigated = 0;
  for (auto seed : seeds) {
    s.runs.push_back(run_experiment(cfg, seed));
    const auto& r = s.runs.back();
    s.unweighted_worst += r.unweighted.worst;
    s.unweighted_avg += r.unweighted.avg;
    if (r.mitigated) {
      ++mitigated;
      s.mitigated_worst += r.mitigated->worst;
      s.mitigated_avg += r.mitigated->avg;
    } else {
      s.all_recovered = false;
    }
  }
  if (!seeds.empty()) {
    s.unweighted_worst /= static_cast<double>(seeds.size());
    s.unweighted_avg /= static_cast<double>(seeds.size());
  }
  if (mitigated > 0) {
    s.mitigated_worst /= static_cast<double>(mitigated);
    s.mitigated_avg /= static_cast<double>(mitigated);
  }
  return s;
}

/// Default seed list for `--seeds n`: seed, seed+1, ...
inline std::vector<std::uint64_t> seed_range(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = base + i;
  return v;
}

// ---------------------------------------------------------------------------
// JSON

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    auto& s = c.synthetic;
    s.n = j.value("n", s.n);
    s.p_target = j.value("p_target", s.p_target);
    s.p_spurious = j.value("p_spurious", s.p_spurious);
    s.phi_star = j.value("phi_star", s.phi_star);
    s.target_pool = j.value("target_pool", s.target_pool);
    s.spurious_pool = j.value("spurious_pool", s.spurious_pool);
    s.subject_fillers = j.value("subject_fillers", s.subject_fillers);
    s.scene_fillers = j.value("scene_fillers", s.scene_fillers);
    s.object_fillers = j.value("object_fillers", s.object_fillers);
    s.p_scene = j.value("p_scene", s.p_scene);
    s.p_object = j.value("p_object", s.p_object);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.signal_coeff = j.value("signal_coeff", s.signal_coeff);
    s.spurious_coeff = j.value("spurious_coeff", s.spurious_coeff);

    auto& p = c.pipeline;
    p.backend = j.value("backend", p.backend);
    p.selection.variance = j.value("variance", *p.selection.variance);
    p.mode = parse_cluster_mode(j.value("cluster_mode", to_string(p.mode)));
    p.cluster.categories = j.value("categories", p.cluster.categories);
    p.cluster.sigma_max = j.value("sigma_max", p.cluster.sigma_max);
    p.cluster.z_dist = j.value("z_dist", p.cluster.z_dist);
    p.phi_threshold = j.value("phi_threshold", p.phi_threshold);
    p.alpha = j.value("alpha", p.alpha);

    c.weight_mode = parse_weight_mode(j.value("weight_mode", to_string(c.weight_mode)));
    c.balance_target = j.value("balance_target", c.balance_target);
    c.resample = j.value("resample", c.resample);
    c.train.step = j.value("step", c.train.step);
    c.train.max_steps = j.value("max_steps", c.train.max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed simulate config: ") + e.what());
  }
  validate(c.synthetic);
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& s = c.synthetic;
  const auto& p = c.pipeline;
  return {{"n", s.n},
          {"p_target", s.p_target},
          {"p_spurious", s.p_spurious},
          {"phi_star", s.phi_star},
          {"target_pool", s.target_pool},
          {"spurious_pool", s.spurious_pool},
          {"subject_fillers", s.subject_fillers},
          {"scene_fillers", s.scene_fillers},
          {"object_fillers", s.object_fillers},
          {"p_scene", s.p_scene},
          {"p_object", s.p_object},
          {"feature_dim", s.feature_dim},
          {"signal_coeff", s.signal_coeff},
          {"spurious_coeff", s.spurious_coeff},
          {"backend", p.backend},
          {"variance", p.selection.variance.value_or(0.0)},
          {"cluster_mode", to_string(p.mode)},
          {"categories", p.cluster.categories},
          {"sigma_max", p.cluster.sigma_max},
          {"z_dist", p.cluster.z_dist},
          {"phi_threshold", p.phi_threshold},
          {"alpha", p.alpha},
          {"weight_mode", to_string(c.weight_mode)},
          {"balance_target", c.balance_target},
          {"resample", c.resample},
          {"step", c.train.step},
          {"max_steps", c.train.max_steps}};
}

inline nlohmann::json to_json(const GroupMetrics& g) {
  nlohmann::json groups = nlohmann::json::array();
  for (int y = 0; y < 2; ++y)
    for (int s = 0; s < 2; ++s)
      groups.push_back({{"y", y}, {"s", s}, {"accuracy", g.accuracy[y][s]}, {"size", g.sizes[y][s]}});
  return {{"groups", groups}, {"worst", g.worst}, {"avg", g.avg}};
}

inline nlohmann::json to_json(const ExperimentResult& r) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"seed", r.seed},
          {"recovered", r.recovered},
          {"failure", r.failure.empty() ? nlohmann::json() : nlohmann::json(r.failure)},
          {"target_feature", opt(r.target_feature)},
          {"spurious_feature", opt(r.spurious_feature)},
          {"recovered_phi", opt(r.recovered_phi)},
          {"recovered_p", opt(r.recovered_p)},
          {"empirical_phi", r.empirical_phi},
          {"retained_pairs", r.retained_pairs},
          {"unweighted", to_json(r.unweighted)},
          {"mitigated", r.mitigated ? to_json(*r.mitigated) : nlohmann::json()}};
}

inline nlohmann::json to_json(const ExperimentSummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) runs.push_back(to_json(r));
  return {{"runs", runs},
          {"all_recovered", s.all_recovered},
          {"unweighted", {{"worst", s.unweighted_worst}, {"avg", s.unweighted_avg}}},
          {"mitigated", {{"worst", s.mitigated_worst}, {"avg", s.mitigated_avg}}},
          {"worst_gain", s.worst_gain()},
          {"avg_drop", s.avg_drop()}};
}

}  // namespace biaslens
