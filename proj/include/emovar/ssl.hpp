// emovar/ssl.hpp

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

// Self-supervised objectives of wav2vec 2.0 style pre-training, evaluated on
// caller-supplied context vectors, quantised targets and codebook usage.
// Natural logarithms throughout.

#ifndef EMOVAR_SSL_HPP_
#define EMOVAR_SSL_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "emovar/error.hpp"

namespace emovar::ssl {

using Vector = Eigen::VectorXd;

struct ContextQuantizedPair {
  Vector context;
  Vector true_quantized;
  std::vector<Vector> distractors;
};

struct SslConfig {
  double kappa = 0.1;
  double alpha = 0.1;
};

inline double CosineSim(const Vector &a, const Vector &b) {
  Require(a.size() == b.size(), Errc::kDimensionMismatch,
          "cosine similarity of vectors with different sizes");
  const double na = a.norm();
  const double nb = b.norm();
  Require(na > 0.0 && nb > 0.0, Errc::kZeroVector,
          "cosine similarity of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Softmax cross-entropy over similarities / kappa, true target first.
/// Evaluated as log-sum-exp minus the true logit.
inline double ContrastiveLoss(const ContextQuantizedPair &pair, double kappa) {
  Require(kappa > 0.0, Errc::kInvalidConfig, "temperature must be positive");
  Require(!pair.distractors.empty(), Errc::kNotEnoughCandidates,
          "at least one distractor is required");
  std::vector<double> logits;
  logits.reserve(pair.distractors.size() + 1);
  logits.push_back(CosineSim(pair.context, pair.true_quantized) / kappa);
  for (const Vector &q : pair.distractors)
    logits.push_back(CosineSim(pair.context, q) / kappa);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return std::max(0.0, std::log(sum) + (top - logits.front()));
}

/// Arithmetic mean over masked time steps.
inline double MeanContrastiveLoss(std::span<const ContextQuantizedPair> pairs,
                                  double kappa) {
  Require(!pairs.empty(), Errc::kEmptyBatch, "no masked time steps");
  double total = 0.0;
  for (const auto &p : pairs) total += ContrastiveLoss(p, kappa);
  return total / static_cast<double>(pairs.size());
}

/// Mean of p log p over a G x V matrix of averaged codebook probabilities,
/// i.e. negative entropy per codebook divided by G V.  0 log 0 = 0.
inline double DiversityLoss(const Eigen::MatrixXd &probs) {
  Require(probs.rows() > 0 && probs.cols() > 0, Errc::kInvalidDistribution,
          "empty codebook distribution");
  double acc = 0.0;
  for (Eigen::Index g = 0; g < probs.rows(); ++g) {
    double row_sum = 0.0;
    for (Eigen::Index v = 0; v < probs.cols(); ++v) {
      const double p = probs(g, v);
      Require(p >= 0.0 && std::isfinite(p), Errc::kInvalidDistribution,
              "negative or non-finite probability in codebook " + std::to_string(g));
      row_sum += p;
      if (p > 0.0) acc += p * std::log(p);
    }
    Require(std::abs(row_sum - 1.0) <= 1e-6, Errc::kInvalidDistribution,
            "codebook " + std::to_string(g) + " sums to " + std::to_string(row_sum));
  }
  return acc / static_cast<double>(probs.rows() * probs.cols());
}

inline double SslLoss(double mean_contrastive, double diversity, double alpha) {
  return mean_contrastive + alpha * diversity;
}

/// K indices drawn uniformly without replacement from masked_indices with
/// true_index removed.  Deterministic in seed.
inline std::vector<std::int64_t> SampleDistractors(
    std::span<const std::int64_t> masked_indices, std::int64_t true_index,
    std::size_t k, std::uint64_t seed) {
  std::vector<std::int64_t> pool;
  pool.reserve(masked_indices.size());
  for (auto idx : masked_indices)
    if (idx != true_index) pool.push_back(idx);
  Require(k <= pool.size(), Errc::kNotEnoughCandidates,
          "need " + std::to_string(k) + " distractors, only " +
              std::to_string(pool.size()) + " candidates");
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace emovar::ssl

#endif  // EMOVAR_SSL_HPP_
