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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "biaslens/chunker.hpp"
#include "biaslens/clusterer.hpp"
#include "biaslens/common.hpp"
#include "biaslens/corpus.hpp"

namespace biaslens {

/// One presence vector per feature cluster over the N corpus records.
struct IndicatorMatrix {
  std::vector<BitVector> indicators;
  std::vector<std::size_t> feature_ids;
  std::size_t n = 0;

  std::size_t features() const { return indicators.size(); }
  const BitVector& of(std::size_t feature_id) const {
    for (std::size_t k = 0; k < feature_ids.size(); ++k)
      if (feature_ids[k] == feature_id) return indicators[k];
    throw InputError("feature " + std::to_string(feature_id) + " is not in the indicator matrix");
  }
  bool contains(std::size_t feature_id) const {
    return std::find(feature_ids.begin(), feature_ids.end(), feature_id) != feature_ids.end();
  }
};

enum class MatchMode { kProvenance, kSubstring };

inline MatchMode parse_match_mode(std::string_view s) {
  if (s == "provenance") return MatchMode::kProvenance;
  if (s == "substring") return MatchMode::kSubstring;
  throw InputError("unknown match mode '" + std::string(s) + "' (expected provenance|substring)");
}

inline std::string to_string(MatchMode m) {
  return m == MatchMode::kProvenance ? "provenance" : "substring";
}

/// t_f[i] = 1 iff some member text of cluster f was extracted from record i.
inline IndicatorMatrix build_indicators(const FeatureClustering& fc, const ChunkSet& chunks) {
  IndicatorMatrix im;
  im.n = chunks.record_count();
  for (const auto& c : fc.clusters) {
    BitVector t(im.n);
    for (const auto& m : c.members) {
      const auto u = chunks.index_of(m);
      if (!u) throw InputError("cluster " + std::to_string(c.id) + " member '" + m +
                               "' has no provenance in the chunk set");
      for (std::size_t rec : chunks.provenance(*u)) t.set(rec);
    }
    im.indicators.push_back(std::move(t));
    im.feature_ids.push_back(c.id);
  }
  return im;
}

/// Literal reading: t_f[i] = 1 iff a member text occurs as a substring of
/// the normalized caption of record i. Fires on accidental containments.
inline IndicatorMatrix build_indicators_substring(const FeatureClustering& fc, const Corpus& corpus) {
  IndicatorMatrix im;
  im.n = corpus.size();
  std::vector<std::string> captions;
  captions.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) captions.push_back(normalize_chunk(corpus.caption(i)));
  for (const auto& c : fc.clusters) {
    BitVector t(im.n);
    for (std::size_t i = 0; i < im.n; ++i)
      for (const auto& m : c.members)
        if (captions[i].find(m) != std::string::npos) {
          t.set(i);
          break;
        }
    im.indicators.push_back(std::move(t));
    im.feature_ids.push_back(c.id);
  }
  return im;
}

struct ContingencyTable {
  std::uint64_t x11 = 0;
  std::uint64_t x10 = 0;
  std::uint64_t x01 = 0;
  std::uint64_t x00 = 0;

  std::uint64_t n() const { return x11 + x10 + x01 + x00; }
  std::uint64_t row1() const { return x11 + x10; }  // x1*
  std::uint64_t row0() const { return x01 + x00; }  // x0*
  std::uint64_t col1() const { return x11 + x01; }  // x*1
  std::uint64_t col0() const { return x10 + x00; }  // x*0
  bool operator==(const ContingencyTable&) const = default;
};

inline ContingencyTable contingency(const BitVector& f, const BitVector& g) {
  if (f.size() != g.size())
    throw InputError("indicator length mismatch (" + std::to_string(f.size()) + " vs " +
                     std::to_string(g.size()) + ")");
  ContingencyTable t;
  const std::uint64_t n = f.size();
  const std::uint64_t nf = f.count();
  const std::uint64_t ng = g.count();
  t.x11 = f.count_and(g);
  t.x10 = nf - t.x11;
  t.x01 = ng - t.x11;
  t.x00 = n - t.x11 - t.x10 - t.x01;
  return t;
}

inline ContingencyTable contingency(std::span<const std::uint8_t> f, std::span<const std::uint8_t> g) {
  if (f.size() != g.size())
    throw InputError("indicator length mismatch (" + std::to_string(f.size()) + " vs " +
                     std::to_string(g.size()) + ")");
  ContingencyTable t;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] > 1 || g[i] > 1) throw InputError("non-binary indicator value at position " + std::to_string(i));
    if (f[i] && g[i]) ++t.x11;
    else if (f[i]) ++t.x10;
    else if (g[i]) ++t.x01;
    else ++t.x00;
  }
  return t;
}

/// (x11 x00 - x10 x01) / sqrt(x1* x0* x*0 x*1); nullopt when a marginal is 0.
inline std::optional<double> phi(const ContingencyTable& t) {
  const std::uint64_t r1 = t.row1(), r0 = t.row0(), c1 = t.col1(), c0 = t.col0();
  if (r1 == 0 || r0 == 0 || c1 == 0 || c0 == 0) return std::nullopt;
  const double num = static_cast<double>(static_cast<__int128>(t.x11) * t.x00 -
                                         static_cast<__int128>(t.x10) * t.x01);
  const double den = std::sqrt(static_cast<double>(r1) * static_cast<double>(r0)) *
                     std::sqrt(static_cast<double>(c1) * static_cast<double>(c0));
  return std::clamp(num / den, -1.0, 1.0);
}

struct ChiSquare {
  double chi2 = 0.0;
  double p_value = 1.0;
};

/// Upper tail of the chi-square distribution with one degree of freedom.
inline double chi2_df1_sf(double chi2) { return std::erfc(std::sqrt(chi2 / 2.0)); }

/// Uncorrected Pearson chi-square, df = 1; equal to N phi^2.
inline ChiSquare chi_square(const ContingencyTable& t) {
  const auto p = phi(t);
  if (!p) return {};
  const double chi2 = static_cast<double>(t.n()) * (*p) * (*p);
  return {chi2, chi2_df1_sf(chi2)};
}

/// Product-moment correlation; nullopt when either input is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("pearson: length mismatch");
  if (x.size() < 2) throw InputError("pearson: need at least 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::vector<double> to_doubles(const BitVector& b) {
  std::vector<double> v(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) v[i] = b[i] ? 1.0 : 0.0;
  return v;
}

struct CorrelationEntry {
  std::size_t f = 0;  // f < g
  std::size_t g = 0;
  std::optional<double> phi;
  double chi2 = 0.0;
  double p_value = 1.0;
  bool significant = false;
  ContingencyTable table;
};

struct CorrelationReport {
  std::vector<CorrelationEntry> entries;  // canonical (f, g) order
  std::vector<std::size_t> retained;      // indices into entries, |phi| descending
  double phi_threshold = 0.05;
  double alpha = 0.05;

  const CorrelationEntry* find(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    for (const auto& e : entries)
      if (e.f == a && e.g == b) return &e;
    return nullptr;
  }
  bool is_retained(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    for (auto k : retained)
      if (entries[k].f == a && entries[k].g == b) return true;
    return false;
  }
};

inline CorrelationEntry correlate_pair(std::size_t id_a, const BitVector& a, std::size_t id_b,
                                       const BitVector& b, double alpha) {
  CorrelationEntry e;
  const bool swap = id_b < id_a;
  e.f = swap ? id_b : id_a;
  e.g = swap ? id_a : id_b;
  e.table = swap ? contingency(b, a) : contingency(a, b);
  e.phi = phi(e.table);
  const auto cs = chi_square(e.table);
  e.chi2 = cs.chi2;
  e.p_value = cs.p_value;
  e.significant = e.phi.has_value() && cs.p_value < alpha;
  return e;
}

/// Evaluates all F(F-1)/2 pairs and retains significant pairs with
/// |phi| > phi_threshold.
inline CorrelationReport correlate_all(const IndicatorMatrix& im, double phi_threshold = 0.05,
                                       double alpha = 0.05, unsigned threads = 1) {
  const std::size_t f = im.features();
  if (f < 2) throw InputError("correlation needs at least 2 features (got " + std::to_string(f) + ")");
  // Canonical order by feature id regardless of input order.
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return im.feature_ids[x] < im.feature_ids[y]; });

  CorrelationReport rep;
  rep.phi_threshold = phi_threshold;
  rep.alpha = alpha;
  rep.entries.resize(f * (f - 1) / 2);
  parallel_for(f, threads, [&](std::size_t i) {
    std::size_t k = i * f - i * (i + 1) / 2;
    for (std::size_t j = i + 1; j < f; ++j, ++k) {
      const std::size_t a = order[i], b = order[j];
      rep.entries[k] = correlate_pair(im.feature_ids[a], im.indicators[a], im.feature_ids[b],
                                      im.indicators[b], alpha);
    }
  });
  for (std::size_t k = 0; k < rep.entries.size(); ++k) {
    const auto& e = rep.entries[k];
    if (e.phi && e.significant && std::abs(*e.phi) > phi_threshold) rep.retained.push_back(k);
  }
  std::stable_sort(rep.retained.begin(), rep.retained.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(*rep.entries[x].phi) > std::abs(*rep.entries[y].phi);
  });
  return rep;
}

struct PresenceRow {
  std::size_t feature = 0;
  std::string label;
  std::optional<double> pearson;
};

struct RobustnessProfile {
  std::vector<PresenceRow> rows;  // every (feature, label)
  // For each label, the feature whose presence correlates best with it.
  std::vector<std::pair<std::string, std::size_t>> best_match;
  std::vector<double> best_pearson;
  // Mean of best_pearson over labels.
  std::optional<double> presence_agreement;
  // Pairwise phi between labels and between their matched features, over
  // label pairs a < b, plus the Pearson correlation of the two vectors.
  std::vector<double> label_phis;
  std::vector<double> feature_phis;
  std::optional<double> pairwise_agreement;
};

/// Compares discovered feature presence against ground-truth labels.
inline RobustnessProfile robustness_profile(const IndicatorMatrix& im, const Corpus& corpus,
                                            const std::vector<std::string>& label_names) {
  if (corpus.size() != im.n) throw InputError("corpus size does not match indicator length");
  RobustnessProfile prof;
  std::vector<BitVector> labels;
  for (const auto& name : label_names) labels.push_back(BitVector::from_bytes(label_vector(corpus, name)));
  std::vector<std::vector<double>> feat_d;
  for (const auto& t : im.indicators) feat_d.push_back(to_doubles(t));

  std::vector<std::size_t> matched;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    const auto ld = to_doubles(labels[l]);
    std::optional<std::size_t> best;
    double best_v = -2.0;
    for (std::size_t k = 0; k < im.features(); ++k) {
      const auto r = corpus.size() >= 2 ? pearson(feat_d[k], ld) : std::nullopt;
      prof.rows.push_back({im.feature_ids[k], label_names[l], r});
      if (r && *r > best_v) {
        best_v = *r;
        best = k;
      }
    }
    if (best) {
      prof.best_match.emplace_back(label_names[l], im.feature_ids[*best]);
      prof.best_pearson.push_back(best_v);
      matched.push_back(*best);
    } else {
      matched.push_back(im.features());
    }
  }
  if (!prof.best_pearson.empty()) {
    double s = 0;
    for (double v : prof.best_pearson) s += v;
    prof.presence_agreement = s / static_cast<double>(prof.best_pearson.size());
  }
  for (std::size_t a = 0; a < labels.size(); ++a) {
    for (std::size_t b = a + 1; b < labels.size(); ++b) {
      if (matched[a] == im.features() || matched[b] == im.features()) continue;
      const auto lp = phi(contingency(labels[a], labels[b]));
      const auto fp = phi(contingency(im.indicators[matched[a]], im.indicators[matched[b]]));
      if (!lp || !fp) continue;
      prof.label_phis.push_back(*lp);
      prof.feature_phis.push_back(*fp);
    }
  }
  if (prof.label_phis.size() >= 2) prof.pairwise_agreement = pearson(prof.label_phis, prof.feature_phis);
  return prof;
}

}  // namespace biaslens
