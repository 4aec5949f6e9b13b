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

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/encoder.hpp"

namespace biaslens {

/// How many principal components to keep: either the smallest count whose
/// cumulative explained-variance ratio reaches `variance`, or a fixed count.
struct ComponentSelection {
  std::optional<double> variance = 0.90;
  std::optional<std::size_t> components;

  static ComponentSelection by_variance(double v) { return {v, std::nullopt}; }
  static ComponentSelection fixed(std::size_t k) { return {std::nullopt, k}; }
};

struct PcaModel {
  Vector mean;
  Matrix components;  // k x d, orthonormal rows
  std::vector<double> explained_variance_ratio;  // retained, non-increasing
  std::vector<double> all_ratios;                // every nonzero direction
  std::size_t k = 0;
  std::size_t rank = 0;
  std::optional<double> variance_threshold;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  double cumulative_ratio() const {
    double s = 0;
    for (double r : explained_variance_ratio) s += r;
    return s;
  }
};

/// Centered thin SVD. Sample covariance eigenvalues are s_i^2 / (M - 1).
inline PcaModel fit_pca(const Matrix& x, ComponentSelection sel = {}) {
  const auto m = x.rows();
  const auto d = x.cols();
  if (m < 2) throw InputError("PCA needs at least 2 rows (got " + std::to_string(m) + ")");
  if (sel.variance && sel.components)
    throw InputError("variance threshold and fixed component count are mutually exclusive");
  if (sel.variance && !(*sel.variance > 0.0 && *sel.variance <= 1.0))
    throw InputError("variance threshold must lie in (0, 1]");
  if (sel.components && *sel.components < 1) throw InputError("component count must be >= 1");
  if (!sel.variance && !sel.components) sel.variance = 0.90;

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = (s.size() > 0 ? s[0] : 0.0) * static_cast<double>(std::max(m, d)) *
                     std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > tol && s[i] > 0.0) ++rank;
  if (rank == 0) throw InputError("degenerate data: all rows are identical");
  model.rank = rank;

  double total = 0.0;
  for (std::size_t i = 0; i < rank; ++i) total += s[static_cast<Eigen::Index>(i)] * s[static_cast<Eigen::Index>(i)];
  for (std::size_t i = 0; i < rank; ++i) {
    const double si = s[static_cast<Eigen::Index>(i)];
    model.all_ratios.push_back(si * si / total);
  }

  std::size_t k = rank;
  if (sel.components) {
    k = std::min(*sel.components, rank);
  } else {
    model.variance_threshold = sel.variance;
    double cum = 0.0;
    for (std::size_t i = 0; i < rank; ++i) {
      cum += model.all_ratios[i];
      if (cum >= *sel.variance) {
        k = i + 1;
        break;
      }
    }
  }
  model.k = k;
  model.explained_variance_ratio.assign(model.all_ratios.begin(),
                                        model.all_ratios.begin() + static_cast<std::ptrdiff_t>(k));

  model.components = Matrix(static_cast<Eigen::Index>(k), d);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (std::size_t i = 0; i < k; ++i) {
    Eigen::VectorXd c = v.col(static_cast<Eigen::Index>(i));
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < c.size(); ++j)
      if (std::abs(c[j]) > std::abs(c[arg])) arg = j;
    if (c[arg] < 0) c = -c;
    model.components.row(static_cast<Eigen::Index>(i)) = c.transpose();
  }
  return model;
}

inline PcaModel fit_pca(const EmbeddingMatrix& m, ComponentSelection sel = {}) {
  return fit_pca(m.vectors, sel);
}

struct ReducedMatrix {
  std::vector<std::string> texts;
  Matrix rows;  // M x k
  std::size_t zero_rows = 0;
  bool unit_norm = false;
};

/// Projects rows onto the retained components; with unit_norm each nonzero
/// row is rescaled to length 1 and zero rows are counted and left alone.
inline Matrix project(const PcaModel& model, const Matrix& x, bool unit_norm,
                      std::size_t* zero_rows = nullptr, unsigned threads = 1) {
  if (static_cast<std::size_t>(x.cols()) != model.dim())
    throw InputError("dimension mismatch: model expects " + std::to_string(model.dim()) +
                     ", got " + std::to_string(x.cols()));
  Matrix out(x.rows(), static_cast<Eigen::Index>(model.k));
  std::vector<std::uint8_t> zero(static_cast<std::size_t>(x.rows()), 0);
  parallel_for(static_cast<std::size_t>(x.rows()), threads, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::VectorXd z = model.components * (x.row(r).transpose() - model.mean);
    if (unit_norm) {
      const double n = z.norm();
      if (n > 0.0) {
        z /= n;
      } else {
        zero[i] = 1;
      }
    }
    out.row(r) = z.transpose();
  });
  if (zero_rows != nullptr) {
    *zero_rows = 0;
    for (auto f : zero) *zero_rows += f;
  }
  return out;
}

inline ReducedMatrix transform(const PcaModel& model, const EmbeddingMatrix& m, bool unit_norm,
                               unsigned threads = 1) {
  ReducedMatrix r;
  r.texts = m.texts;
  r.unit_norm = unit_norm;
  r.rows = project(model, m.vectors, unit_norm, &r.zero_rows, threads);
  return r;
}

/// mean + components^T z for every row of z (inverse of an unnormalized
/// projection).
inline Matrix reconstruct(const PcaModel& model, const Matrix& z) {
  Matrix out = z * model.components;
  out.rowwise() += model.mean.transpose();
  return out;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t expected_cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(expected_cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    if (r.size() != expected_cols) throw InputError("matrix row has wrong dimension");
    for (std::size_t k = 0; k < expected_cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r[k].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const PcaModel& m) {
  std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
  nlohmann::json j{{"d", m.dim()},
                   {"k", m.k},
                   {"rank", m.rank},
                   {"mean", mean},
                   {"components", detail::matrix_to_json(m.components)},
                   {"explained_variance_ratio", m.explained_variance_ratio}};
  j["variance_threshold"] = m.variance_threshold ? nlohmann::json(*m.variance_threshold) : nlohmann::json();
  return j;
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
  PcaModel m;
  const auto d = j.at("d").get<std::size_t>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  m.components = detail::matrix_from_json(j.at("components"), d);
  m.explained_variance_ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
  m.k = j.at("k").get<std::size_t>();
  m.rank = j.at("rank").get<std::size_t>();
  if (!j.at("variance_threshold").is_null()) m.variance_threshold = j["variance_threshold"].get<double>();
  return m;
}

inline nlohmann::json to_json(const ReducedMatrix& r) {
  return {{"texts", r.texts},
          {"k", r.rows.cols()},
          {"unit_norm", r.unit_norm},
          {"zero_rows", r.zero_rows},
          {"rows", detail::matrix_to_json(r.rows)}};
}

inline ReducedMatrix reduced_from_json(const nlohmann::json& j) {
  try {
    ReducedMatrix r;
    r.texts = j.at("texts").get<std::vector<std::string>>();
    r.unit_norm = j.at("unit_norm").get<bool>();
    r.zero_rows = j.at("zero_rows").get<std::size_t>();
    r.rows = detail::matrix_from_json(j.at("rows"), j.at("k").get<std::size_t>());
    if (static_cast<std::size_t>(r.rows.rows()) != r.texts.size())
      throw InputError("reduced matrix row count does not match text count");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed reduced file: ") + e.what());
  }
}

}  // namespace biaslens
