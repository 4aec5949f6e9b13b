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

// Re-weighting that makes a spurious feature s statistically independent of
// a target feature y.
//
// balance:      within each target group y, records with s=1 get weight
//               c(y,0)/c(y,1) and records with s=0 keep weight 1, so the
//               weighted P'(s=1 | y) is 1/2 for both groups.
// decorrelate:  a record in cell (y,s) gets c(y,.) c(.,s) / (N c(y,s)), so
//               the weighted joint factorizes while both marginals stay put.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/correlator.hpp"

namespace biaslens {

enum class WeightMode { kBalance, kDecorrelate };

inline WeightMode parse_weight_mode(std::string_view s) {
  if (s == "balance") return WeightMode::kBalance;
  if (s == "decorrelate") return WeightMode::kDecorrelate;
  throw InputError("unknown weight mode '" + std::string(s) + "' (expected balance|decorrelate)");
}

inline std::string to_string(WeightMode m) {
  return m == WeightMode::kBalance ? "balance" : "decorrelate";
}

using CellCounts = std::array<std::array<std::uint64_t, 2>, 2>;  // [y][s]
using CellWeights = std::array<std::array<double, 2>, 2>;        // [y][s]

struct Weights {
  std::vector<double> per_record;  // raw, one per record
  CellWeights cell_weights{};
  CellCounts group_counts{};
};

inline CellCounts cell_counts(const BitVector& target, const BitVector& spurious) {
  if (target.size() != spurious.size()) throw InputError("indicator length mismatch");
  const ContingencyTable t = contingency(target, spurious);
  CellCounts c{};
  c[1][1] = t.x11;
  c[1][0] = t.x10;
  c[0][1] = t.x01;
  c[0][0] = t.x00;
  return c;
}

inline CellWeights cell_weights(const CellCounts& c, WeightMode mode) {
  for (int y = 0; y < 2; ++y)
    for (int s = 0; s < 2; ++s)
      if (c[y][s] == 0)
        throw InfeasibleConfig("empty group (y=" + std::to_string(y) + ", s=" + std::to_string(s) +
                               "): sampling weight is undefined");
  CellWeights w{};
  if (mode == WeightMode::kBalance) {
    for (int y = 0; y < 2; ++y) {
      w[y][0] = 1.0;
      w[y][1] = static_cast<double>(c[y][0]) / static_cast<double>(c[y][1]);
    }
  } else {
    const double n = static_cast<double>(c[0][0] + c[0][1] + c[1][0] + c[1][1]);
    for (int y = 0; y < 2; ++y) {
      const double row = static_cast<double>(c[y][0] + c[y][1]);
      for (int s = 0; s < 2; ++s) {
        const double col = static_cast<double>(c[0][s] + c[1][s]);
        w[y][s] = (row * col) / (n * static_cast<double>(c[y][s]));
      }
    }
  }
  return w;
}

inline Weights compute_weights(const BitVector& target, const BitVector& spurious, WeightMode mode) {
  Weights out;
  out.group_counts = cell_counts(target, spurious);
  out.cell_weights = cell_weights(out.group_counts, mode);
  out.per_record.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    out.per_record[i] = out.cell_weights[target[i] ? 1 : 0][spurious[i] ? 1 : 0];
  return out;
}

inline Weights compute_weights(const IndicatorMatrix& im, std::size_t target_f, std::size_t spurious_f,
                               WeightMode mode) {
  if (target_f == spurious_f)
    throw InputError("target and spurious feature must differ (both " + std::to_string(target_f) + ")");
  return compute_weights(im.of(target_f), im.of(spurious_f), mode);
}

/// Weight-summed cells in place of counts.
struct WeightedTable {
  double x11 = 0, x10 = 0, x01 = 0, x00 = 0;
};

inline WeightedTable weighted_contingency(const BitVector& f, const BitVector& g,
                                          std::span<const double> w) {
  if (f.size() != g.size() || f.size() != w.size())
    throw InputError("weights and indicators must have equal length");
  WeightedTable t;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(w[i] > 0.0)) throw InputError("weights must be positive (record " + std::to_string(i) + ")");
    if (f[i] && g[i]) t.x11 += w[i];
    else if (f[i]) t.x10 += w[i];
    else if (g[i]) t.x01 += w[i];
    else t.x00 += w[i];
  }
  return t;
}

inline std::optional<double> phi(const WeightedTable& t) {
  const double r1 = t.x11 + t.x10, r0 = t.x01 + t.x00, c1 = t.x11 + t.x01, c0 = t.x10 + t.x00;
  if (r1 == 0 || r0 == 0 || c1 == 0 || c0 == 0) return std::nullopt;
  return (t.x11 * t.x00 - t.x10 * t.x01) / (std::sqrt(r1 * r0) * std::sqrt(c1 * c0));
}

inline std::optional<double> weighted_phi(const BitVector& f, const BitVector& g, std::span<const double> w) {
  return phi(weighted_contingency(f, g, w));
}

inline std::optional<double> weighted_phi(const IndicatorMatrix& im, std::span<const double> w,
                                          std::size_t f, std::size_t g) {
  return weighted_phi(im.of(f), im.of(g), w);
}

/// Rescales so the mean weight is 1.
inline std::vector<double> mean_normalized(std::vector<double> w) {
  if (w.empty()) return w;
  double s = 0;
  for (double v : w) s += v;
  const double mean = s / static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

enum class Verdict { kSpurious, kBenign };

inline Verdict parse_verdict(std::string_view s) {
  if (s == "spurious") return Verdict::kSpurious;
  if (s == "benign") return Verdict::kBenign;
  throw InputError("unknown verdict '" + std::string(s) + "' (expected spurious|benign)");
}

inline std::string to_string(Verdict v) { return v == Verdict::kSpurious ? "spurious" : "benign"; }

struct SelectionDecision {
  std::size_t f = 0;
  std::size_t g = 0;
  Verdict verdict = Verdict::kBenign;
  std::optional<std::size_t> target_feature;
  std::optional<std::size_t> spurious_feature;
  std::string reviewer;
  std::string timestamp;

  std::pair<std::size_t, std::size_t> pair() const { return {std::min(f, g), std::max(f, g)}; }
};

/// Role consistency: a spurious verdict names both members of the pair as
/// target and spurious; a benign verdict names no roles.
inline void validate_roles(const SelectionDecision& d) {
  const std::string p = "(" + std::to_string(d.f) + ", " + std::to_string(d.g) + ")";
  if (d.f == d.g) throw InputError("decision pair " + p + " names the same feature twice");
  if (d.verdict == Verdict::kBenign) {
    if (d.target_feature || d.spurious_feature)
      throw InputError("benign decision on " + p + " must not assign target/spurious roles");
    return;
  }
  if (!d.target_feature || !d.spurious_feature)
    throw InputError("spurious decision on " + p + " needs target_feature and spurious_feature");
  const auto t = *d.target_feature, s = *d.spurious_feature;
  const bool ok = (t == d.f && s == d.g) || (t == d.g && s == d.f);
  if (!ok)
    throw InputError("spurious decision on " + p + ": roles (" + std::to_string(t) + ", " +
                     std::to_string(s) + ") must be the pair's two features");
}

inline nlohmann::json to_json(const SelectionDecision& d) {
  nlohmann::json j{{"f", d.f}, {"f'", d.g}, {"verdict", to_string(d.verdict)}};
  j["target_feature"] = d.target_feature ? nlohmann::json(*d.target_feature) : nlohmann::json();
  j["spurious_feature"] = d.spurious_feature ? nlohmann::json(*d.spurious_feature) : nlohmann::json();
  if (!d.reviewer.empty()) j["reviewer"] = d.reviewer;
  if (!d.timestamp.empty()) j["timestamp"] = d.timestamp;
  return j;
}

inline SelectionDecision decision_from_json(const nlohmann::json& j) {
  try {
    SelectionDecision d;
    d.f = j.at("f").get<std::size_t>();
    d.g = j.at("f'").get<std::size_t>();
    d.verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (j.contains("target_feature") && !j["target_feature"].is_null())
      d.target_feature = j["target_feature"].get<std::size_t>();
    if (j.contains("spurious_feature") && !j["spurious_feature"].is_null())
      d.spurious_feature = j["spurious_feature"].get<std::size_t>();
    if (j.contains("reviewer")) d.reviewer = j["reviewer"].get<std::string>();
    if (j.contains("timestamp")) d.timestamp = j["timestamp"].get<std::string>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed decision: ") + e.what());
  }
}

inline std::vector<SelectionDecision> decisions_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("decisions file must hold a JSON array");
  std::vector<SelectionDecision> out;
  for (const auto& d : j) out.push_back(decision_from_json(d));
  return out;
}

inline nlohmann::json to_json(const std::vector<SelectionDecision>& ds) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& d : ds) a.push_back(to_json(d));
  return a;
}

struct MitigationPlan {
  std::vector<SelectionDecision> decisions;
  SelectionDecision active;
  WeightMode mode = WeightMode::kBalance;
  std::vector<double> weights;  // mean 1
  CellWeights cell_weights{};   // raw
  CellCounts group_counts{};
};

/// Exactly one spurious decision drives the plan; benign ones are recorded.
inline MitigationPlan apply_selection(const CorrelationReport& report,
                                      const std::vector<SelectionDecision>& decisions,
                                      const IndicatorMatrix& im, WeightMode mode) {
  std::optional<SelectionDecision> active;
  for (const auto& d : decisions) {
    validate_roles(d);
    if (!report.find(d.f, d.g))
      throw InputError("decision references pair (" + std::to_string(d.f) + ", " + std::to_string(d.g) +
                       ") which is not in the report");
    if (d.verdict == Verdict::kSpurious) {
      if (active)
        throw InputError("more than one active spurious decision: (" + std::to_string(active->f) + ", " +
                         std::to_string(active->g) + ") and (" + std::to_string(d.f) + ", " +
                         std::to_string(d.g) + "); one feature is treated per plan");
      active = d;
    }
  }
  if (!active) throw InputError("no active spurious decision");
  const Weights w = compute_weights(im, *active->target_feature, *active->spurious_feature, mode);
  MitigationPlan plan;
  plan.decisions = decisions;
  plan.active = *active;
  plan.mode = mode;
  plan.weights = mean_normalized(w.per_record);
  plan.cell_weights = w.cell_weights;
  plan.group_counts = w.group_counts;
  return plan;
}

}  // namespace biaslens
