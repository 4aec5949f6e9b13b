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
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/encoder.hpp"
#include "biaslens/reducer.hpp"

namespace biaslens {

enum class VarianceNorm { kMean, kSum };

inline VarianceNorm parse_variance_norm(std::string_view s) {
  if (s == "mean") return VarianceNorm::kMean;
  if (s == "sum") return VarianceNorm::kSum;
  throw InputError("unknown variance norm '" + std::string(s) + "' (expected sum|mean)");
}

inline std::string to_string(VarianceNorm n) { return n == VarianceNorm::kMean ? "mean" : "sum"; }

inline double squared_distance(const Matrix& x, Eigen::Index row, const Vector& c) {
  return (x.row(row).transpose() - c).squaredNorm();
}

/// Spread of points around a centroid: mean (default) or sum of squared
/// Euclidean distances.
inline double cluster_variance(const Matrix& points, const Vector& centroid,
                               VarianceNorm norm = VarianceNorm::kMean) {
  if (points.rows() == 0) throw InputError("cluster_variance of an empty point set");
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += squared_distance(points, i, centroid);
  return norm == VarianceNorm::kMean ? s / static_cast<double>(points.rows()) : s;
}

inline Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Matrix centroids;  // k x dim
  double objective = 0.0;
  std::size_t iterations = 0;
  // Objective after each Lloyd iteration; non-increasing.
  std::vector<double> objective_history;

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
};

inline constexpr std::size_t kKMeansMaxIterations = 300;

namespace detail {

inline std::vector<std::size_t> kmeanspp_seeds(const Matrix& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> seeds{rng.below(n)};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(n, 0);
  taken[seeds[0]] = 1;
  while (seeds.size() < k) {
    const Vector c = x.row(static_cast<Eigen::Index>(seeds.back())).transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x, static_cast<Eigen::Index>(i), c));
      if (!taken[i]) total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (!taken[i] && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick == n) {
      // Remaining points coincide with existing seeds.
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          pick = i;
          break;
        }
      }
    }
    taken[pick] = 1;
    seeds.push_back(pick);
  }
  return seeds;
}

inline double objective(const Matrix& x, const std::vector<std::size_t>& assign, const Matrix& c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - c.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)]))).squaredNorm();
  return s;
}

}  // namespace detail

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// assignment stops changing (at most 300 iterations). Empty clusters take
/// the point farthest from its centroid.
inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 1 || k > n)
    throw InputError("k-means: k=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  Rng rng(seed);
  KMeansResult res;
  res.centroids = Matrix(static_cast<Eigen::Index>(k), x.cols());
  const auto seeds = detail::kmeanspp_seeds(x, k, rng);
  for (std::size_t c = 0; c < k; ++c)
    res.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(seeds[c]));

  res.assignment.assign(n, k);  // sentinel: nothing assigned yet
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < kKMeansMaxIterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (x.row(static_cast<Eigen::Index>(i)) - res.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    res.iterations = it + 1;

    // Update step.
    res.centroids.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      res.centroids.row(static_cast<Eigen::Index>(res.assignment[i])) += x.row(static_cast<Eigen::Index>(i));
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) res.centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);

    // Repair empty clusters.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] < 2) continue;
        const double d = (x.row(static_cast<Eigen::Index>(i)) -
                          res.centroids.row(static_cast<Eigen::Index>(res.assignment[i]))).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const std::size_t donor = res.assignment[far];
      res.assignment[far] = c;
      counts[c] = 1;
      --counts[donor];
      res.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(far));
      Vector sum = Vector::Zero(x.cols());
      for (std::size_t i = 0; i < n; ++i)
        if (res.assignment[i] == donor) sum += x.row(static_cast<Eigen::Index>(i)).transpose();
      res.centroids.row(static_cast<Eigen::Index>(donor)) = (sum / static_cast<double>(counts[donor])).transpose();
    }
    res.objective_history.push_back(detail::objective(x, res.assignment, res.centroids));
  }
  res.objective = detail::objective(x, res.assignment, res.centroids);
  return res;
}

/// Best objective over `restarts` seeded runs.
inline KMeansResult kmeans_best(const Matrix& x, std::size_t k, std::uint64_t seed,
                                std::size_t restarts = 5) {
  std::optional<KMeansResult> best;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansResult cur = kmeans(x, k, mix_seed(seed, r));
    if (!best || cur.objective < best->objective) best = std::move(cur);
  }
  return std::move(*best);
}

/// Per-cluster variances of a k-means result.
inline std::vector<double> cluster_variances(const Matrix& x, const KMeansResult& km,
                                             VarianceNorm norm = VarianceNorm::kMean) {
  std::vector<std::vector<std::size_t>> members(km.k());
  for (std::size_t i = 0; i < km.assignment.size(); ++i) members[km.assignment[i]].push_back(i);
  std::vector<double> out;
  for (std::size_t c = 0; c < km.k(); ++c)
    out.push_back(cluster_variance(select_rows(x, members[c]),
                                   km.centroids.row(static_cast<Eigen::Index>(c)).transpose(), norm));
  return out;
}

enum class ClusterMode { kTwoStage, kAgglomerative };

inline std::string to_string(ClusterMode m) {
  return m == ClusterMode::kTwoStage ? "two-stage" : "agglomerative";
}

inline ClusterMode parse_cluster_mode(std::string_view s) {
  if (s == "two-stage" || s == "two_stage") return ClusterMode::kTwoStage;
  if (s == "agglomerative") return ClusterMode::kAgglomerative;
  throw InputError("unknown cluster mode '" + std::string(s) + "' (expected two-stage|agglomerative)");
}

inline constexpr int kNoCategory = -1;

struct FeatureCluster {
  std::size_t id = 0;
  std::string label;
  std::vector<std::string> members;
  std::vector<std::size_t> member_rows;  // rows of the reduced matrix
  Vector centroid;
  int category_id = kNoCategory;
  double within_variance = 0.0;
};

struct ClusteringParams {
  std::size_t categories = 8;
  double sigma_max = 0.15;
  double z_dist = 1.0;
  VarianceNorm variance_norm = VarianceNorm::kMean;
  std::uint64_t seed = 7;
  std::size_t restarts = 5;
};

struct FeatureClustering {
  std::vector<FeatureCluster> clusters;
  ClusterMode mode = ClusterMode::kTwoStage;
  ClusteringParams params;
  std::vector<std::size_t> per_category_counts;  // features per category, two-stage only

  std::size_t size() const { return clusters.size(); }
  const FeatureCluster* find(std::size_t id) const {
    for (const auto& c : clusters)
      if (c.id == id) return &c;
    return nullptr;
  }
};

namespace detail {

/// Builds a cluster from member rows: centroid, spread and display label
/// (the member closest to the centroid, first on ties).
inline FeatureCluster make_cluster(const ReducedMatrix& r, std::vector<std::size_t> rows,
                                   int category, VarianceNorm norm) {
  std::sort(rows.begin(), rows.end());
  FeatureCluster fc;
  fc.member_rows = rows;
  fc.category_id = category;
  const Matrix pts = select_rows(r.rows, rows);
  fc.centroid = pts.colwise().mean().transpose();
  fc.within_variance = cluster_variance(pts, fc.centroid, norm);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    fc.members.push_back(r.texts[rows[i]]);
    const double d = squared_distance(pts, static_cast<Eigen::Index>(i), fc.centroid);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  fc.label = fc.members[best];
  return fc;
}

}  // namespace detail

/// Stage 1 splits all points into `categories` groups; stage 2 splits each
/// category into the smallest number of clusters whose mean cluster
/// variance is at most sigma_max.
inline FeatureClustering two_stage_cluster(const ReducedMatrix& r, const ClusteringParams& p) {
  const auto n = static_cast<std::size_t>(r.rows.rows());
  if (p.categories < 1 || p.categories > n)
    throw InputError("category count " + std::to_string(p.categories) + " out of range [1, " +
                     std::to_string(n) + "]");
  if (!(p.sigma_max >= 0.0)) throw InputError("sigma_max must be non-negative");

  FeatureClustering out;
  out.mode = ClusterMode::kTwoStage;
  out.params = p;
  const KMeansResult stage1 = kmeans_best(r.rows, p.categories, p.seed, p.restarts);

  std::vector<std::vector<std::size_t>> categories(p.categories);
  for (std::size_t i = 0; i < n; ++i) categories[stage1.assignment[i]].push_back(i);

  for (std::size_t c = 0; c < p.categories; ++c) {
    const auto& rows = categories[c];
    const Matrix sub = select_rows(r.rows, rows);
    KMeansResult chosen;
    for (std::size_t k = 1; k <= rows.size(); ++k) {
      chosen = kmeans_best(sub, k, mix_seed(p.seed, c, k), p.restarts);
      const auto vars = cluster_variances(sub, chosen, p.variance_norm);
      const double mean_var = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(k);
      if (mean_var <= p.sigma_max) break;
    }
    std::vector<std::vector<std::size_t>> groups(chosen.k());
    for (std::size_t i = 0; i < rows.size(); ++i) groups[chosen.assignment[i]].push_back(rows[i]);
    std::sort(groups.begin(), groups.end());  // by smallest member row
    out.per_category_counts.push_back(groups.size());
    for (auto& g : groups)
      out.clusters.push_back(detail::make_cluster(r, std::move(g), static_cast<int>(c), p.variance_norm));
  }
  for (std::size_t i = 0; i < out.clusters.size(); ++i) out.clusters[i].id = i;
  return out;
}

struct Merge {
  std::size_t a = 0;  // representative point of one side
  std::size_t b = 0;
  double height = 0.0;
  double child_height = 0.0;  // max height of the merges that built a and b
};

struct AgglomerativeResult {
  FeatureClustering clustering;
  std::vector<Merge> merges;  // full dendrogram, by non-decreasing height
};

inline constexpr std::size_t kAgglomerativeMaxPoints = 50000;

/// Complete-linkage hierarchical clustering via the nearest-neighbour chain
/// algorithm, cut where the smallest inter-cluster distance reaches z_dist.
inline AgglomerativeResult agglomerative_full(const ReducedMatrix& r, const ClusteringParams& p) {
  const auto n = static_cast<std::size_t>(r.rows.rows());
  if (n < 1) throw InputError("agglomerative clustering needs at least one point");
  if (!(p.z_dist > 0.0)) throw InputError("distance threshold z_dist must be positive");
  if (n > kAgglomerativeMaxPoints)
    throw InputError("agglomerative mode supports at most " + std::to_string(kAgglomerativeMaxPoints) +
                     " points (got " + std::to_string(n) + ")");

  // Condensed upper-triangular distance matrix.
  auto idx = [n](std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i + 1) / 2 + (j - i - 1);
  };
  std::vector<double> dist(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[idx(i, j)] = (r.rows.row(static_cast<Eigen::Index>(i)) - r.rows.row(static_cast<Eigen::Index>(j))).norm();

  std::vector<std::uint8_t> active(n, 1);
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  std::size_t next_start = 0;
  while (remaining > 1) {
    if (chain.empty()) {
      while (!active[next_start]) ++next_start;
      chain.push_back(next_start);
    }
    const std::size_t a = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t b = prev;
    double best = prev < n ? dist[idx(a, prev)] : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a) continue;
      const double d = dist[idx(a, k)];
      if (d < best || (d == best && k != prev && b != prev && k < b)) {
        best = d;
        b = k;
      }
    }
    if (b == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, b);
      const std::size_t drop = std::max(a, b);
      merges.push_back({keep, drop, best, 0.0});
      for (std::size_t k = 0; k < n; ++k) {
        if (!active[k] || k == keep || k == drop) continue;
        dist[idx(keep, k)] = std::max(dist[idx(keep, k)], dist[idx(drop, k)]);
      }
      active[drop] = 0;
      --remaining;
    } else {
      chain.push_back(b);
    }
  }

  std::stable_sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) {
    if (x.height != y.height) return x.height < y.height;
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });

  // Replay bottom-up with union-find; record child heights for the
  // monotonicity check and cut at z_dist.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<double> top_height(n, 0.0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::size_t> cut_parent(n);
  std::iota(cut_parent.begin(), cut_parent.end(), 0);
  auto cut_find = [&cut_parent](std::size_t x) {
    while (cut_parent[x] != x) x = cut_parent[x] = cut_parent[cut_parent[x]];
    return x;
  };
  for (auto& m : merges) {
    const std::size_t ra = find(m.a);
    const std::size_t rb = find(m.b);
    m.child_height = std::max(top_height[ra], top_height[rb]);
    const std::size_t root = std::min(ra, rb);
    parent[std::max(ra, rb)] = root;
    top_height[root] = m.height;
    if (m.height < p.z_dist) {
      const std::size_t ca = cut_find(m.a);
      const std::size_t cb = cut_find(m.b);
      cut_parent[std::max(ca, cb)] = std::min(ca, cb);
    }
  }

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> group_of(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = cut_find(i);
    if (group_of[root] == n) {
      group_of[root] = groups.size();
      groups.emplace_back();
    }
    groups[group_of[root]].push_back(i);
  }

  AgglomerativeResult res;
  res.clustering.mode = ClusterMode::kAgglomerative;
  res.clustering.params = p;
  for (auto& g : groups)
    res.clustering.clusters.push_back(detail::make_cluster(r, std::move(g), kNoCategory, p.variance_norm));
  for (std::size_t i = 0; i < res.clustering.clusters.size(); ++i) res.clustering.clusters[i].id = i;
  res.merges = std::move(merges);
  return res;
}

inline FeatureClustering agglomerative(const ReducedMatrix& r, const ClusteringParams& p) {
  return agglomerative_full(r, p).clustering;
}

/// Unweighted mean of per-cluster variances.
inline double mean_within_variance(const FeatureClustering& fc) {
  if (fc.clusters.empty()) throw InputError("mean_within_variance of an empty clustering");
  double s = 0.0;
  for (const auto& c : fc.clusters) s += c.within_variance;
  return s / static_cast<double>(fc.clusters.size());
}

inline FeatureClustering cluster(const ReducedMatrix& r, ClusterMode mode, const ClusteringParams& p) {
  return mode == ClusterMode::kTwoStage ? two_stage_cluster(r, p) : agglomerative(r, p);
}

inline nlohmann::json to_json(const FeatureClustering& fc) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : fc.clusters) {
    std::vector<double> centroid(c.centroid.data(), c.centroid.data() + c.centroid.size());
    clusters.push_back({{"id", c.id},
                        {"label", c.label},
                        {"members", c.members},
                        {"centroid", centroid},
                        {"within_variance", c.within_variance},
                        {"category_id", c.category_id}});
  }
  nlohmann::json params{{"variance_norm", to_string(fc.params.variance_norm)}};
  if (fc.mode == ClusterMode::kTwoStage) {
    params["categories"] = fc.params.categories;
    params["sigma_max"] = fc.params.sigma_max;
    params["seed"] = fc.params.seed;
    params["restarts"] = fc.params.restarts;
  } else {
    params["z_dist"] = fc.params.z_dist;
  }
  nlohmann::json j{{"mode", to_string(fc.mode)},
                   {"params", params},
                   {"F", fc.clusters.size()},
                   {"mean_within_variance", fc.clusters.empty() ? 0.0 : mean_within_variance(fc)},
                   {"clusters", clusters}};
  if (fc.mode == ClusterMode::kTwoStage) j["per_category_counts"] = fc.per_category_counts;
  return j;
}

inline FeatureClustering clustering_from_json(const nlohmann::json& j) {
  try {
    FeatureClustering fc;
    fc.mode = parse_cluster_mode(j.at("mode").get<std::string>());
    const auto& p = j.at("params");
    fc.params.variance_norm = parse_variance_norm(p.at("variance_norm").get<std::string>());
    if (fc.mode == ClusterMode::kTwoStage) {
      fc.params.categories = p.at("categories").get<std::size_t>();
      fc.params.sigma_max = p.at("sigma_max").get<double>();
      fc.params.seed = p.at("seed").get<std::uint64_t>();
      fc.params.restarts = p.at("restarts").get<std::size_t>();
      fc.per_category_counts = j.at("per_category_counts").get<std::vector<std::size_t>>();
    } else {
      fc.params.z_dist = p.at("z_dist").get<double>();
    }
    for (const auto& c : j.at("clusters")) {
      FeatureCluster cl;
      cl.id = c.at("id").get<std::size_t>();
      cl.label = c.at("label").get<std::string>();
      cl.members = c.at("members").get<std::vector<std::string>>();
      const auto centroid = c.at("centroid").get<std::vector<double>>();
      cl.centroid = Eigen::Map<const Eigen::VectorXd>(centroid.data(), static_cast<Eigen::Index>(centroid.size()));
      cl.within_variance = c.at("within_variance").get<double>();
      cl.category_id = c.at("category_id").get<int>();
      if (cl.members.empty()) throw InputError("cluster " + std::to_string(cl.id) + " has no members");
      fc.clusters.push_back(std::move(cl));
    }
    return fc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed clusters file: ") + e.what());
  }
}

}  // namespace biaslens
