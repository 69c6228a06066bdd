// emovar/covariance.hpp

// Copyright 2026 The emovar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Within-class covariance estimation and the WCCN projection.
//
// Given feature vectors w_i with class labels c, the within-class covariance
// of a batch is the unweighted class average of the per-class population
// covariances,
//
//   S_w = 1/|K| sum_{c in K} 1/N_c sum_i (w_i - mean_c)(w_i - mean_c)^T,
//
// where K is the set of classes with at least two samples in the batch.
// Mini-batch estimates are combined with a running arithmetic mean over
// batches, regularised towards the identity, and factored as
// A A^T = (S_w')^{-1}.  Features are mapped by w -> A^T w.
//
// All arithmetic is double precision.  Everything here is a pure function.

#ifndef EMOVAR_COVARIANCE_HPP_
#define EMOVAR_COVARIANCE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "emovar/error.hpp"

namespace emovar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Feature vectors stored one per row, with a class index per row.
/// Class indices are 0-based.
struct LabeledBatch {
  Matrix vectors;
  std::vector<int> labels;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

/// A with A A^T = S^{-1} for the matrix S it was computed from.
struct ProjectionFactor {
  Matrix a;

  Eigen::Index dim() const { return a.rows(); }
  static ProjectionFactor Identity(Eigen::Index d) {
    return {Matrix::Identity(d, d)};
  }
};

struct WithinClassCov {
  std::map<int, Matrix> per_class;
  Matrix averaged;
  std::set<int> classes_used;
};

inline Matrix Symmetrized(const Matrix &m) { return 0.5 * (m + m.transpose()); }

inline void ValidateBatch(const LabeledBatch &batch) {
  Require(batch.size() > 0, Errc::kEmptyBatch, "batch has no vectors");
  Require(static_cast<std::size_t>(batch.size()) == batch.labels.size(),
          Errc::kDimensionMismatch,
          "batch has " + std::to_string(batch.size()) + " vectors but " +
              std::to_string(batch.labels.size()) + " labels");
  for (int label : batch.labels)
    Require(label >= 0, Errc::kDimensionMismatch,
            "negative class label " + std::to_string(label));
}

/// Population covariance of the given rows about their own mean.
inline Matrix PopulationCovariance(const Matrix &rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  Matrix cov = centered.transpose() * centered;
  cov /= static_cast<double>(rows.rows());
  return Symmetrized(cov);
}

namespace detail {

inline std::map<int, std::vector<Eigen::Index>> RowsByClass(
    const LabeledBatch &batch) {
  std::map<int, std::vector<Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    rows[batch.labels[static_cast<std::size_t>(i)]].push_back(i);
  return rows;
}

}  // namespace detail

/// Per-class covariances of one batch and their unweighted class average.
/// Classes with fewer than two samples in the batch are left out.
inline WithinClassCov BatchWithinClassCov(const LabeledBatch &batch) {
  ValidateBatch(batch);
  WithinClassCov out;
  for (const auto &[label, idx] : detail::RowsByClass(batch)) {
    if (idx.size() < 2) continue;
    out.per_class.emplace(label, PopulationCovariance(batch.vectors(idx, Eigen::all)));
    out.classes_used.insert(label);
  }
  Require(!out.classes_used.empty(), Errc::kNoEstimableClass,
          "no class has two or more samples in the batch");
  out.averaged = Matrix::Zero(batch.dim(), batch.dim());
  for (const auto &[label, cov] : out.per_class) out.averaged += cov;
  out.averaged /= static_cast<double>(out.classes_used.size());
  out.averaged = Symmetrized(out.averaged);
  return out;
}

/// Running arithmetic mean over batches: folds batch_cov into a mean of
/// n_tot previous batches.
inline std::pair<Matrix, std::uint64_t> CumulativeUpdate(
    const Matrix &state_mean, std::uint64_t n_tot, const Matrix &batch_cov) {
  Require(state_mean.rows() == batch_cov.rows() &&
              state_mean.cols() == batch_cov.cols(),
          Errc::kDimensionMismatch, "running mean and batch covariance differ in shape");
  const double n = static_cast<double>(n_tot);
  Matrix next = (n / (n + 1.0)) * state_mean + (1.0 / (n + 1.0)) * batch_cov;
  return {Symmetrized(next), n_tot + 1};
}

inline void RequireBeta(double beta) {
  Require(beta >= 0.0 && beta <= 1.0, Errc::kBetaOutOfRange,
          "beta must lie in [0, 1], got " + std::to_string(beta));
}

/// (1 - beta) M + beta I.
inline Matrix Smooth(const Matrix &mean_cov, double beta) {
  RequireBeta(beta);
  Matrix out = (1.0 - beta) * mean_cov;
  out.diagonal().array() += beta;
  return out;
}

/// A = L^{-T} where L is the lower Cholesky factor of the symmetrised input,
/// so that A A^T = S^{-1}.  Obtained by a triangular solve; S is never
/// inverted explicitly.
inline ProjectionFactor WccnFactor(const Matrix &smoothed) {
  Require(smoothed.rows() == smoothed.cols() && smoothed.rows() > 0,
          Errc::kDimensionMismatch, "covariance must be square and non-empty");
  Require(smoothed.allFinite(), Errc::kNotPositiveDefinite,
          "covariance has non-finite entries");
  const Matrix sym = Symmetrized(smoothed);
  Eigen::LLT<Matrix> llt(sym);
  Require(llt.info() == Eigen::Success, Errc::kNotPositiveDefinite,
          "Cholesky factorisation failed");
  const Eigen::Index d = sym.rows();
  Matrix a = llt.matrixU().solve(Matrix::Identity(d, d));
  Require(a.allFinite(), Errc::kNotPositiveDefinite,
          "triangular inverse is not finite");
  return {std::move(a)};
}

/// A^T w.
inline Vector Project(const ProjectionFactor &factor, const Vector &w) {
  Require(factor.dim() == w.size(), Errc::kDimensionMismatch,
          "factor is " + std::to_string(factor.dim()) + "-dimensional, vector is " +
              std::to_string(w.size()));
  return factor.a.transpose() * w;
}

/// Row-wise A^T w for a matrix holding one vector per row.
inline Matrix ProjectRows(const ProjectionFactor &factor, const Matrix &rows) {
  Require(factor.dim() == rows.cols(), Errc::kDimensionMismatch,
          "factor is " + std::to_string(factor.dim()) + "-dimensional, rows are " +
              std::to_string(rows.cols()));
  return rows * factor.a;
}

/// Conventional WCCN: statistics pooled over the whole data set in one pass.
/// Every class present must have at least two samples.
inline ProjectionFactor ClassicWccn(const LabeledBatch &dataset, double beta) {
  RequireBeta(beta);
  ValidateBatch(dataset);
  for (const auto &[label, idx] : detail::RowsByClass(dataset))
    Require(idx.size() >= 2, Errc::kNoEstimableClass,
            "class " + std::to_string(label) + " has fewer than two samples");
  return WccnFactor(Smooth(BatchWithinClassCov(dataset).averaged, beta));
}

}  // namespace emovar

#endif  // EMOVAR_COVARIANCE_HPP_
