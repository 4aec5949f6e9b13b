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

// PCA, clustering, correlation statistics and re-weighting.

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biaslens/clusterer.hpp"
#include "biaslens/correlator.hpp"
#include "biaslens/harness.hpp"
#include "biaslens/mitigator.hpp"
#include "biaslens/reducer.hpp"
#include "oracles.hpp"

namespace biaslens {
namespace {

using ::testing::HasSubstr;

template <typename Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

Matrix rows_of(const std::vector<std::vector<double>>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v[0].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j];
  return m;
}

ReducedMatrix reduced_of(const std::vector<std::vector<double>>& v) {
  ReducedMatrix r;
  r.rows = rows_of(v);
  for (std::size_t i = 0; i < v.size(); ++i) r.texts.push_back("p" + std::to_string(i));
  return r;
}

std::set<std::set<std::size_t>> partition_of(const FeatureClustering& fc) {
  std::set<std::set<std::size_t>> out;
  for (const auto& c : fc.clusters) out.insert(std::set<std::size_t>(c.member_rows.begin(), c.member_rows.end()));
  return out;
}

std::vector<std::vector<double>> random_points(std::mt19937_64& gen, std::size_t n, std::size_t d) {
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (auto& r : x)
    for (auto& v : r) v = nd(gen);
  return x;
}

BitVector bits(const std::vector<int>& v) {
  BitVector b(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) b.set(i);
  return b;
}

std::vector<int> random_binary(std::mt19937_64& gen, std::size_t n, double p) {
  std::bernoulli_distribution bd(p);
  std::vector<int> v(n);
  for (auto& x : v) x = bd(gen);
  return v;
}

// ---------------------------------------------------------------------------
// reducer

TEST(Reducer, PointsOnALine) {
  const PcaModel m = fit_pca(rows_of({{0, 0, 0}, {1, 2, 3}, {2, 4, 6}, {-1, -2, -3}}), ComponentSelection::by_variance(0.9));
  EXPECT_EQ(m.k, 1u);
  ASSERT_EQ(m.explained_variance_ratio.size(), 1u);
  EXPECT_NEAR(m.explained_variance_ratio[0], 1.0, 1e-12);
}

TEST(Reducer, FourAxisPointsNeedTwoComponents) {
  // Covariance is diag(2/3, 2/3): equal eigenvalues, ratios 0.5 each.
  const PcaModel m = fit_pca(rows_of({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}), ComponentSelection::by_variance(0.9));
  EXPECT_EQ(m.k, 2u);
  EXPECT_NEAR(m.explained_variance_ratio[0], 0.5, 1e-12);
  EXPECT_NEAR(m.explained_variance_ratio[1], 0.5, 1e-12);
}

TEST(Reducer, FullThresholdKeepsRank) {
  std::mt19937_64 gen(1);
  const PcaModel m = fit_pca(rows_of(random_points(gen, 10, 4)), ComponentSelection::by_variance(1.0));
  EXPECT_EQ(m.k, 4u);
  EXPECT_EQ(m.rank, 4u);
}

TEST(Reducer, Errors) {
  EXPECT_THROW(fit_pca(rows_of({{1, 2}})), InputError);
  EXPECT_THAT(error_of([] { fit_pca(rows_of({{1, 2}, {1, 2}, {1, 2}})); }), HasSubstr("degenerate data"));
}

TEST(Reducer, ReconstructionAtFullRank) {
  std::mt19937_64 gen(2);
  const Matrix x = rows_of(random_points(gen, 12, 5));
  const PcaModel m = fit_pca(x, ComponentSelection::by_variance(1.0));
  const Matrix z = project(m, x, false);
  EXPECT_LE((reconstruct(m, z) - x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reducer, UnitNormRowsAndMeanMapsToZero) {
  std::mt19937_64 gen(3);
  const Matrix x = rows_of(random_points(gen, 15, 6));
  const PcaModel m = fit_pca(x, ComponentSelection::by_variance(0.8));
  const Matrix z = project(m, x, true);
  for (Eigen::Index i = 0; i < z.rows(); ++i) EXPECT_NEAR(z.row(i).norm(), 1.0, 1e-9);
  std::size_t zeros = 0;
  const Matrix mz = project(m, m.mean.transpose(), true, &zeros);
  EXPECT_LE(mz.norm(), 1e-12);
  EXPECT_EQ(zeros, 1u);
}

TEST(Reducer, ResidualIsOrthogonalToComponents) {
  std::mt19937_64 gen(4);
  const Matrix x = rows_of(random_points(gen, 20, 8));
  const PcaModel m = fit_pca(x, ComponentSelection::by_variance(0.7));
  const Matrix rec = reconstruct(m, project(m, x, false));
  const Matrix resid = x - rec;
  EXPECT_LE((resid * m.components.transpose()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Reducer, RatiosMatchPowerIterationOracle) {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 10; ++t) {
    const auto pts = random_points(gen, 20, 8);
    const PcaModel m = fit_pca(rows_of(pts), ComponentSelection::by_variance(1.0));
    const auto cov = oracle::covariance(pts);
    const auto ev = oracle::power_iteration_eigenvalues(cov, 3);
    double trace = 0;
    for (std::size_t i = 0; i < cov.size(); ++i) trace += cov[i][i];
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m.explained_variance_ratio[i], ev[i] / trace, 1e-6 * ev[i] / trace);
  }
}

TEST(Reducer, DeterministicComponents) {
  std::mt19937_64 gen(6);
  const Matrix x = rows_of(random_points(gen, 20, 8));
  const PcaModel a = fit_pca(x), b = fit_pca(x);
  EXPECT_TRUE(a.components == b.components);
  for (Eigen::Index i = 0; i < a.components.rows(); ++i) {
    Eigen::Index arg;
    a.components.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(a.components(i, arg), 0.0);
  }
}

TEST(Reducer, ComponentsOptionIsExclusive) {
  EXPECT_THROW(fit_pca(rows_of({{0, 1}, {1, 0}, {2, 2}}), ComponentSelection{0.9, 2}), InputError);
  EXPECT_EQ(fit_pca(rows_of({{0, 1}, {1, 0}, {2, 2}}), ComponentSelection::fixed(1)).k, 1u);
}

TEST(Reducer, DimensionMismatch) {
  const PcaModel m = fit_pca(rows_of({{0, 1}, {1, 0}, {2, 2}}));
  EXPECT_THROW(project(m, rows_of({{1, 2, 3}}), false), InputError);
}

// ---------------------------------------------------------------------------
// clusterer

TEST(Clusterer, TwoTightPairsMatchExhaustiveOracle) {
  const std::vector<std::vector<double>> pts{{0, 0}, {0.1, 0}, {5, 5}, {5.1, 5}};
  const KMeansResult km = kmeans(rows_of(pts), 2, 3);
  std::set<std::set<std::size_t>> got;
  std::set<std::size_t> a, b;
  for (std::size_t i = 0; i < 4; ++i) (km.assignment[i] == 0 ? a : b).insert(i);
  got = {a, b};
  EXPECT_EQ(got, oracle::best_two_partition(pts));
}

TEST(Clusterer, SingleClusterCentroidIsMean) {
  std::mt19937_64 gen(7);
  const Matrix x = rows_of(random_points(gen, 9, 3));
  const KMeansResult km = kmeans(x, 1, 1);
  EXPECT_LE((km.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Clusterer, EveryPointItsOwnCluster) {
  std::mt19937_64 gen(8);
  const Matrix x = rows_of(random_points(gen, 6, 2));
  const KMeansResult km = kmeans(x, 6, 1);
  EXPECT_EQ(std::set<std::size_t>(km.assignment.begin(), km.assignment.end()).size(), 6u);
  EXPECT_NEAR(km.objective, 0.0, 1e-12);
}

TEST(Clusterer, KOutOfRange) {
  const Matrix x = rows_of({{0}, {1}});
  EXPECT_THROW(kmeans(x, 0, 1), InputError);
  EXPECT_THROW(kmeans(x, 3, 1), InputError);
}

TEST(Clusterer, LloydObjectiveNeverIncreases) {
  std::mt19937_64 gen(9);
  for (int run = 0; run < 100; ++run) {
    const Matrix x = rows_of(random_points(gen, 40, 3));
    const KMeansResult km = kmeans(x, 5, static_cast<std::uint64_t>(run));
    for (std::size_t i = 1; i < km.objective_history.size(); ++i)
      EXPECT_LE(km.objective_history[i], km.objective_history[i - 1] + 1e-12);
  }
}

TEST(Clusterer, VarianceExamples) {
  Vector single(2);
  single << 3.0, 4.0;
  EXPECT_EQ(cluster_variance(rows_of({{3, 4}}), single), 0.0);
  Vector c(1);
  c << 1.0;
  EXPECT_DOUBLE_EQ(cluster_variance(rows_of({{0}, {2}}), c), 1.0);
  std::mt19937_64 gen(10);
  const Matrix x = rows_of(random_points(gen, 7, 3));
  const Vector m = x.colwise().mean().transpose();
  Vector shift(3);
  shift << 4.0, -2.5, 10.0;
  const Matrix moved = x.rowwise() + shift.transpose();
  EXPECT_NEAR(cluster_variance(x, m), cluster_variance(moved, m + shift), 1e-12);
  EXPECT_THROW(cluster_variance(Matrix(0, 2), Vector::Zero(2)), InputError);
}

TEST(Clusterer, TightBlobsGiveOneClusterPerCategory) {
  std::vector<std::vector<double>> pts;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 4; ++i) pts.push_back({10.0 * b + 0.01 * i, 0.01 * (i % 2)});
  ClusteringParams p;
  p.categories = 3;
  p.sigma_max = 0.15;
  const FeatureClustering fc = two_stage_cluster(reduced_of(pts), p);
  EXPECT_EQ(fc.per_category_counts, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(Clusterer, ZeroSigmaGivesSingletons) {
  std::mt19937_64 gen(11);
  ClusteringParams p;
  p.categories = 2;
  p.sigma_max = 0.0;
  const FeatureClustering fc = two_stage_cluster(reduced_of(random_points(gen, 9, 2)), p);
  EXPECT_EQ(fc.size(), 9u);
}

TEST(Clusterer, DefaultParamsEchoedInOutput) {
  std::mt19937_64 gen(12);
  const FeatureClustering fc = two_stage_cluster(reduced_of(random_points(gen, 30, 4)), ClusteringParams{});
  const auto j = to_json(fc);
  EXPECT_EQ(j["params"]["categories"], 8);
  EXPECT_DOUBLE_EQ(j["params"]["sigma_max"].get<double>(), 0.15);
}

TEST(Clusterer, TwoStagePostconditionAndPartition) {
  std::mt19937_64 gen(13);
  for (int run = 0; run < 10; ++run) {
    const auto pts = random_points(gen, 40, 3);
    ClusteringParams p;
    p.categories = 4;
    p.sigma_max = 0.5;
    p.seed = static_cast<std::uint64_t>(run);
    const ReducedMatrix r = reduced_of(pts);
    const FeatureClustering fc = two_stage_cluster(r, p);
    std::map<int, std::vector<double>> per_cat;
    std::map<int, std::size_t> cat_size;
    std::multiset<std::size_t> rows;
    for (const auto& c : fc.clusters) {
      per_cat[c.category_id].push_back(c.within_variance);
      cat_size[c.category_id] += c.members.size();
      rows.insert(c.member_rows.begin(), c.member_rows.end());
      const Vector mean = select_rows(r.rows, c.member_rows).colwise().mean().transpose();
      EXPECT_LE((mean - c.centroid).cwiseAbs().maxCoeff(), 1e-9);
    }
    for (auto& [cat, vars] : per_cat) {
      const double mean = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(vars.size());
      EXPECT_TRUE(mean <= p.sigma_max || vars.size() == cat_size[cat]);
    }
    EXPECT_EQ(rows.size(), pts.size());
    EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), pts.size());
    std::size_t sum = 0;
    for (auto f : fc.per_category_counts) sum += f;
    EXPECT_EQ(sum, fc.size());
  }
}

TEST(Clusterer, AgglomerativeHandDendrogram) {
  ClusteringParams p;
  p.z_dist = 1.0;
  const FeatureClustering fc = agglomerative(reduced_of({{0}, {0.5}, {10}}), p);
  EXPECT_EQ(partition_of(fc), (std::set<std::set<std::size_t>>{{0, 1}, {2}}));
}

TEST(Clusterer, AgglomerativeExtremes) {
  const ReducedMatrix r = reduced_of({{0, 0}, {1, 0}, {0, 3}, {4, 4}});
  ClusteringParams p;
  p.z_dist = 0.5;
  EXPECT_EQ(agglomerative(r, p).size(), 4u);
  p.z_dist = 100.0;
  EXPECT_EQ(agglomerative(r, p).size(), 1u);
  p.z_dist = 0.0;
  EXPECT_THROW(agglomerative(r, p), InputError);
}

TEST(Clusterer, AgglomerativeMatchesGreedyOracle) {
  std::mt19937_64 gen(14);
  for (int run = 0; run < 30; ++run) {
    const auto pts = random_points(gen, 12, 2);
    for (double z : {0.5, 1.0, 2.0}) {
      ClusteringParams p;
      p.z_dist = z;
      const auto res = agglomerative_full(reduced_of(pts), p);
      EXPECT_EQ(partition_of(res.clustering), oracle::greedy_complete_linkage(pts, z));
      for (std::size_t i = 1; i < res.merges.size(); ++i) EXPECT_GE(res.merges[i].height, res.merges[i - 1].height);
      for (const auto& m : res.merges) EXPECT_GE(m.height, m.child_height);
    }
  }
}

TEST(Clusterer, MeanWithinVarianceExamples) {
  FeatureClustering fc;
  fc.clusters.resize(2);
  fc.clusters[0].within_variance = 0.2;
  fc.clusters[1].within_variance = 0.4;
  EXPECT_NEAR(mean_within_variance(fc), 0.3, 1e-15);
  ClusteringParams p;
  p.z_dist = 1e-6;
  EXPECT_EQ(mean_within_variance(agglomerative(reduced_of({{0}, {1}, {2}}), p)), 0.0);
}

TEST(Clusterer, MoreClustersNeverRaiseBestObjective) {
  std::mt19937_64 gen(15);
  const auto pts = random_points(gen, 8, 2);
  const Matrix x = rows_of(pts);
  for (int k = 1; k < 5; ++k) {
    const double at_k = kmeans_best(x, static_cast<std::size_t>(k), 1, 5).objective;
    const double at_k1 = kmeans_best(x, static_cast<std::size_t>(k + 1), 1, 5).objective;
    EXPECT_LE(at_k1, at_k + 1e-9);
    // Lloyd with restarts is a local method; it should not beat the optimum.
    EXPECT_GE(at_k + 1e-9, oracle::best_objective(pts, k));
  }
}

TEST(Clusterer, JsonRoundTrip) {
  std::mt19937_64 gen(16);
  const FeatureClustering fc = two_stage_cluster(reduced_of(random_points(gen, 20, 3)), ClusteringParams{});
  const FeatureClustering back = clustering_from_json(to_json(fc));
  EXPECT_EQ(to_json(back).dump(), to_json(fc).dump());
}

// ---------------------------------------------------------------------------
// correlator

TEST(Correlator, IndicatorsFromProvenance) {
  ChunkSet cs(3, {{"a cat", 0, std::nullopt}, {"a dog", 1, std::nullopt}, {"a dog", 2, std::nullopt}});
  FeatureClustering fc;
  fc.clusters.push_back({0, "a cat", {"a cat"}, {}, Vector(), kNoCategory, 0});
  fc.clusters.push_back({1, "a dog", {"a dog"}, {}, Vector(), kNoCategory, 0});
  fc.clusters.push_back({2, "all", {"a cat", "a dog"}, {}, Vector(), kNoCategory, 0});
  const IndicatorMatrix im = build_indicators(fc, cs);
  EXPECT_EQ(im.of(0).to_bytes(), (std::vector<std::uint8_t>{1, 0, 0}));
  EXPECT_EQ(im.of(2).count(), 3u);
  EXPECT_EQ(im.of(0).count_and(im.of(1)), 0u);
  fc.clusters.push_back({3, "x", {"a bird"}, {}, Vector(), kNoCategory, 0});
  EXPECT_THROW(build_indicators(fc, cs), InputError);
}

TEST(Correlator, SubstringModeFiresOnContainment) {
  std::istringstream in(R"({"id":"a","captions":["a catalog"]}
{"id":"b","captions":["a cat"]})");
  const Corpus corpus = parse_corpus(in, CaptionPolicy::kFirst, 0);
  FeatureClustering fc;
  fc.clusters.push_back({0, "a cat", {"a cat"}, {}, Vector(), kNoCategory, 0});
  EXPECT_EQ(build_indicators_substring(fc, corpus).of(0).count(), 2u);
  EXPECT_EQ(build_indicators(fc, chunk_corpus(corpus)).of(0).count(), 1u);
}

TEST(Correlator, ContingencyExamples) {
  const std::vector<std::uint8_t> f{1, 1, 0, 0}, g{1, 0, 1, 0};
  EXPECT_EQ(contingency(f, g), (ContingencyTable{1, 1, 1, 1}));
  const auto self = contingency(f, f);
  EXPECT_EQ(self.x10, 0u);
  EXPECT_EQ(self.x01, 0u);
  const std::vector<std::uint8_t> nf{0, 0, 1, 1};
  const auto comp = contingency(f, nf);
  EXPECT_EQ(comp.x11, 0u);
  EXPECT_EQ(comp.x00, 0u);
  EXPECT_THROW(contingency(std::vector<std::uint8_t>{1, 0}, std::vector<std::uint8_t>{1}), InputError);
  EXPECT_THROW(contingency(std::vector<std::uint8_t>{1, 2}, std::vector<std::uint8_t>{1, 0}), InputError);
}

TEST(Correlator, PhiExamples) {
  EXPECT_DOUBLE_EQ(*phi(ContingencyTable{3, 0, 0, 2}), 1.0);
  EXPECT_DOUBLE_EQ(*phi(ContingencyTable{0, 3, 2, 0}), -1.0);
  // (1*1 - 2*0) / sqrt(3*1*3*1)
  EXPECT_NEAR(*phi(ContingencyTable{1, 2, 0, 1}), 1.0 / 3.0, 1e-15);
  EXPECT_FALSE(phi(ContingencyTable{2, 3, 0, 0}).has_value());
}

TEST(Correlator, ChiSquareExamples) {
  const auto zero = chi_square(ContingencyTable{1, 1, 1, 1});
  EXPECT_EQ(zero.chi2, 0.0);
  EXPECT_EQ(zero.p_value, 1.0);
  EXPECT_NEAR(chi2_df1_sf(9.0), oracle::chi2_df1_upper_tail(9.0), 1e-6);
  EXPECT_NEAR(chi2_df1_sf(9.0), 0.0027, 1e-4);
  EXPECT_NEAR(chi2_df1_sf(3.841), 0.050, 5e-4);
  EXPECT_NEAR(chi2_df1_sf(3.841), oracle::chi2_df1_upper_tail(3.841), 1e-6);
  // N=100 with phi = 0.3: cells (40,10,25,25) give 0.3 up to rounding.
  const ContingencyTable t{39, 11, 24, 26};
  const auto cs = chi_square(t);
  EXPECT_NEAR(cs.chi2, 100.0 * *phi(t) * *phi(t), 1e-9);
}

TEST(Correlator, PhiPropertiesOnRandomPairs) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> len(2, 200);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = static_cast<std::size_t>(len(gen));
    const auto a = random_binary(gen, n, prob(gen)), b = random_binary(gen, n, prob(gen));
    const BitVector fa = bits(a), fb = bits(b);
    const auto p = phi(contingency(fa, fb));
    const double ref = oracle::pearson(a, b);
    ASSERT_EQ(p.has_value(), !std::isnan(ref));
    if (!p) continue;
    EXPECT_NEAR(*p, ref, 1e-12);
    EXPECT_EQ(*p, *phi(contingency(fb, fa)));
    EXPECT_EQ(*phi(contingency(fa.negated(), fb)), -*p);
    EXPECT_LE(std::abs(*p), 1.0);
    const auto cs = chi_square(contingency(fa, fb));
    EXPECT_NEAR(cs.chi2, static_cast<double>(n) * *p * *p, 1e-9);
  }
}

TEST(Correlator, CorrelateAllExamples) {
  IndicatorMatrix im;
  im.n = 6;
  const std::vector<std::vector<int>> cols{{1, 1, 0, 0, 1, 0}, {1, 1, 0, 0, 1, 0}, {0, 1, 0, 1, 0, 1},
                                           {1, 0, 1, 0, 1, 1}, {0, 0, 1, 1, 1, 0}};
  for (std::size_t k = 0; k < cols.size(); ++k) {
    im.indicators.push_back(bits(cols[k]));
    im.feature_ids.push_back(k);
  }
  const auto rep = correlate_all(im);
  EXPECT_EQ(rep.entries.size(), 10u);
  ASSERT_FALSE(rep.retained.empty());
  EXPECT_EQ(rep.entries[rep.retained[0]].f, 0u);
  EXPECT_EQ(rep.entries[rep.retained[0]].g, 1u);
  EXPECT_DOUBLE_EQ(*rep.entries[rep.retained[0]].phi, 1.0);
  const auto none = correlate_all(im, 1.1);
  EXPECT_TRUE(none.retained.empty());
  EXPECT_EQ(none.entries.size(), 10u);
}

TEST(Correlator, RetainedSetIgnoresFeatureOrder) {
  std::mt19937_64 gen(18);
  IndicatorMatrix im;
  im.n = 300;
  const auto base = random_binary(gen, 300, 0.5);
  for (std::size_t k = 0; k < 8; ++k) {
    auto v = random_binary(gen, 300, 0.4);
    if (k % 2 == 0)
      for (std::size_t i = 0; i < 300; ++i) v[i] = (i % 3 == 0) ? v[i] : base[i];
    im.indicators.push_back(bits(v));
    im.feature_ids.push_back(k * 10);
  }
  const auto a = correlate_all(im, 0.05, 0.05, 3);
  IndicatorMatrix shuffled = im;
  std::reverse(shuffled.indicators.begin(), shuffled.indicators.end());
  std::reverse(shuffled.feature_ids.begin(), shuffled.feature_ids.end());
  const auto b = correlate_all(shuffled);
  ASSERT_EQ(a.retained.size(), b.retained.size());
  for (std::size_t i = 0; i < a.retained.size(); ++i) {
    EXPECT_EQ(a.entries[a.retained[i]].f, b.entries[b.retained[i]].f);
    EXPECT_EQ(a.entries[a.retained[i]].g, b.entries[b.retained[i]].g);
  }
  for (std::size_t i = 1; i < a.retained.size(); ++i)
    EXPECT_GE(std::abs(*a.entries[a.retained[i - 1]].phi), std::abs(*a.entries[a.retained[i]].phi));
}

TEST(Correlator, PearsonExamples) {
  const std::vector<double> x{1, 2, 3, 5}, neg{-1, -2, -3, -5};
  EXPECT_NEAR(*pearson(x, x), 1.0, 1e-15);
  EXPECT_NEAR(*pearson(x, neg), -1.0, 1e-15);
  EXPECT_FALSE(pearson(x, std::vector<double>{2, 2, 2, 2}).has_value());
  std::mt19937_64 gen(19);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_binary(gen, 50, 0.3), b = random_binary(gen, 50, 0.6);
    const auto p = phi(contingency(bits(a), bits(b)));
    const auto r = pearson(to_doubles(bits(a)), to_doubles(bits(b)));
    ASSERT_EQ(p.has_value(), r.has_value());
    if (p) EXPECT_NEAR(*r, *p, 1e-12);
  }
}

Corpus labelled_corpus(const std::vector<std::vector<int>>& labels, const std::vector<std::string>& names) {
  std::vector<ImageRecord> recs;
  for (std::size_t i = 0; i < labels[0].size(); ++i) {
    ImageRecord r{"r" + std::to_string(i), {"x"}, {}};
    for (std::size_t l = 0; l < names.size(); ++l) r.labels[names[l]] = labels[l][i];
    recs.push_back(std::move(r));
  }
  return Corpus(std::move(recs), std::vector<std::size_t>(labels[0].size(), 0), CaptionPolicy::kFirst, 0);
}

TEST(Correlator, RobustnessIdenticalPresence) {
  std::mt19937_64 gen(20);
  std::vector<std::vector<int>> labels;
  for (int l = 0; l < 3; ++l) labels.push_back(random_binary(gen, 200, 0.3 + 0.1 * l));
  IndicatorMatrix im;
  im.n = 200;
  for (std::size_t l = 0; l < 3; ++l) {
    im.indicators.push_back(bits(labels[l]));
    im.feature_ids.push_back(l);
  }
  const auto prof = robustness_profile(im, labelled_corpus(labels, {"a", "b", "c"}), {"a", "b", "c"});
  EXPECT_NEAR(*prof.presence_agreement, 1.0, 1e-12);
  ASSERT_TRUE(prof.pairwise_agreement.has_value());
  EXPECT_NEAR(*prof.pairwise_agreement, 1.0, 1e-12);
}

TEST(Correlator, RobustnessIndependentPresence) {
  SyntheticConfig sc;
  sc.phi_star = 0.0;
  const SyntheticData d = generate_synthetic(sc, 21);
  IndicatorMatrix im;
  im.n = sc.n;
  Rng rng(22);
  BitVector noise(sc.n);
  for (std::size_t i = 0; i < sc.n; ++i)
    if (rng.uniform() < 0.5) noise.set(i);
  im.indicators.push_back(noise);
  im.feature_ids.push_back(0);
  const auto prof = robustness_profile(im, d.corpus, {"target"});
  ASSERT_TRUE(prof.rows[0].pearson.has_value());
  EXPECT_LT(std::abs(*prof.rows[0].pearson), 0.05);
}

// ---------------------------------------------------------------------------
// mitigator

TEST(Mitigator, IndependentCountsDecorrelateToOne) {
  // c(y,s) = 20,30 / 40,60 is exactly a product table.
  std::vector<int> y, s;
  auto add = [&](int yy, int ss, int n) {
    for (int i = 0; i < n; ++i) y.push_back(yy), s.push_back(ss);
  };
  add(0, 0, 20), add(0, 1, 30), add(1, 0, 40), add(1, 1, 60);
  const Weights w = compute_weights(bits(y), bits(s), WeightMode::kDecorrelate);
  for (double v : w.per_record) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Mitigator, BalanceHandExample) {
  std::vector<int> y, s;
  for (int i = 0; i < 80; ++i) y.push_back(1), s.push_back(1);
  for (int i = 0; i < 20; ++i) y.push_back(1), s.push_back(0);
  for (int i = 0; i < 50; ++i) y.push_back(0), s.push_back(i % 2);
  const Weights w = compute_weights(bits(y), bits(s), WeightMode::kBalance);
  EXPECT_DOUBLE_EQ(w.per_record[0], 0.25);
  EXPECT_DOUBLE_EQ(w.per_record[85], 1.0);
  const double frac = oracle::resampled_conditional(y, s, w.per_record, 1, 20000, 23);
  EXPECT_NEAR(frac, 0.5, 0.02);
}

TEST(Mitigator, EmptyCellIsNamed) {
  const std::vector<int> y{1, 1, 0, 0}, s{1, 0, 0, 0};
  EXPECT_THAT(error_of([&] { compute_weights(bits(y), bits(s), WeightMode::kBalance); }), HasSubstr("(y=0, s=1)"));
  EXPECT_THROW(compute_weights(bits(y), bits(s), WeightMode::kBalance), InfeasibleConfig);
}

TEST(Mitigator, SameFeatureRejected) {
  IndicatorMatrix im;
  im.n = 2;
  im.indicators.push_back(bits({1, 0}));
  im.feature_ids.push_back(4);
  EXPECT_THROW(compute_weights(im, 4, 4, WeightMode::kBalance), InputError);
}

TEST(Mitigator, WeightedPhiExamples) {
  std::mt19937_64 gen(24);
  const auto a = random_binary(gen, 100, 0.4), b = random_binary(gen, 100, 0.5);
  const std::vector<double> ones(100, 1.0);
  EXPECT_EQ(*weighted_phi(bits(a), bits(b), ones), *phi(contingency(bits(a), bits(b))));
  std::vector<double> w(100);
  std::uniform_real_distribution<double> ud(0.1, 3.0);
  for (auto& v : w) v = ud(gen);
  std::vector<double> w7 = w;
  for (auto& v : w7) v *= 7.0;
  EXPECT_NEAR(*weighted_phi(bits(a), bits(b), w), *weighted_phi(bits(a), bits(b), w7), 1e-12);
}

TEST(Mitigator, LawsOnRandomPairs) {
  std::mt19937_64 gen(25);
  std::uniform_int_distribution<int> len(8, 400);
  std::uniform_real_distribution<double> prob(0.1, 0.9);
  int tested = 0;
  while (tested < 500) {
    const std::size_t n = static_cast<std::size_t>(len(gen));
    const auto y = random_binary(gen, n, prob(gen)), s = random_binary(gen, n, prob(gen));
    const auto counts = cell_counts(bits(y), bits(s));
    if (counts[0][0] == 0 || counts[0][1] == 0 || counts[1][0] == 0 || counts[1][1] == 0) continue;
    ++tested;
    for (auto mode : {WeightMode::kBalance, WeightMode::kDecorrelate}) {
      const Weights w = compute_weights(bits(y), bits(s), mode);
      const WeightedTable t = weighted_contingency(bits(y), bits(s), w.per_record);
      EXPECT_NEAR(*phi(t), 0.0, 1e-9);
      if (mode == WeightMode::kBalance) {
        EXPECT_NEAR(t.x11 / (t.x11 + t.x10), 0.5, 1e-12);
        EXPECT_NEAR(t.x01 / (t.x01 + t.x00), 0.5, 1e-12);
      } else {
        const double total = t.x11 + t.x10 + t.x01 + t.x00;
        const double nn = static_cast<double>(n);
        EXPECT_NEAR((t.x11 + t.x10) / total, static_cast<double>(counts[1][0] + counts[1][1]) / nn, 1e-12);
        EXPECT_NEAR((t.x11 + t.x01) / total, static_cast<double>(counts[0][1] + counts[1][1]) / nn, 1e-12);
      }
      for (double v : w.per_record) EXPECT_GT(v, 0.0);
    }
  }
}

TEST(Mitigator, AlreadyBalancedGivesUnitWeights) {
  std::vector<int> y, s;
  for (int i = 0; i < 40; ++i) y.push_back(1), s.push_back(i % 2);
  for (int i = 0; i < 60; ++i) y.push_back(0), s.push_back(i % 2);
  const Weights w = compute_weights(bits(y), bits(s), WeightMode::kBalance);
  for (double v : w.per_record) EXPECT_EQ(v, 1.0);
}

CorrelationReport report_for(const IndicatorMatrix& im) { return correlate_all(im, 0.0, 1.0); }

IndicatorMatrix three_features() {
  std::mt19937_64 gen(26);
  IndicatorMatrix im;
  im.n = 200;
  for (std::size_t k = 0; k < 3; ++k) {
    im.indicators.push_back(bits(random_binary(gen, 200, 0.5)));
    im.feature_ids.push_back(k);
  }
  return im;
}

TEST(Mitigator, ApplySelection) {
  const IndicatorMatrix im = three_features();
  const auto rep = report_for(im);
  SelectionDecision spur{0, 1, Verdict::kSpurious, 0, 1, "r", ""};
  SelectionDecision benign{1, 2, Verdict::kBenign, std::nullopt, std::nullopt, "r", ""};
  const MitigationPlan plan = apply_selection(rep, {spur, benign}, im, WeightMode::kBalance);
  EXPECT_EQ(plan.weights.size(), 200u);
  const double mean = std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0) / 200.0;
  EXPECT_NEAR(mean, 1.0, 1e-12);

  SelectionDecision spur2{0, 2, Verdict::kSpurious, 2, 0, "r", ""};
  EXPECT_THROW(apply_selection(rep, {spur, spur2}, im, WeightMode::kBalance), InputError);
  SelectionDecision unknown{99, 100, Verdict::kSpurious, 99, 100, "r", ""};
  EXPECT_THAT(error_of([&] { apply_selection(rep, {unknown}, im, WeightMode::kBalance); }), HasSubstr("(99, 100)"));
  EXPECT_THROW(apply_selection(rep, {benign}, im, WeightMode::kBalance), InputError);
}

TEST(Mitigator, RoleConsistency) {
  EXPECT_NO_THROW(validate_roles({0, 1, Verdict::kSpurious, 1, 0, "", ""}));
  EXPECT_THROW(validate_roles({0, 1, Verdict::kSpurious, 0, 2, "", ""}), InputError);
  EXPECT_THROW(validate_roles({0, 1, Verdict::kSpurious, 0, 0, "", ""}), InputError);
  EXPECT_THROW(validate_roles({0, 1, Verdict::kBenign, 0, 1, "", ""}), InputError);
}

TEST(Mitigator, DecisionJsonRoundTrip) {
  const std::vector<SelectionDecision> ds{{0, 1, Verdict::kSpurious, 0, 1, "ana", "2026-01-01T00:00:00Z"},
                                          {2, 3, Verdict::kBenign, std::nullopt, std::nullopt, "", ""}};
  const auto back = decisions_from_json(to_json(ds));
  EXPECT_EQ(to_json(back).dump(), to_json(ds).dump());
}

}  // namespace
}  // namespace biaslens
