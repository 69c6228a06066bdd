// emovar/deep_wccn.hpp

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

#ifndef EMOVAR_DEEP_WCCN_HPP_
#define EMOVAR_DEEP_WCCN_HPP_

#include <cstdint>
#include <istream>
#include <ostream>
#include <string_view>

#include "emovar/binary_io.hpp"
#include "emovar/covariance.hpp"
#include "emovar/error.hpp"

namespace emovar {

enum class Mode : std::uint8_t { kTraining = 0, kInference = 1 };

/// Mini-batch WCCN layer.  It has no trainable parameters: every training
/// batch folds its within-class covariance into a running mean over batches,
/// and the projection factor is recomputed from the smoothed mean.  In
/// inference mode the last factor is applied unchanged.
///
/// For differentiation the factor is a constant, so the backward pass is the
/// transpose of the linear map and no gradient reaches the statistics.
///
/// One writer at a time; const members are safe for concurrent readers.
class DeepWccn {
 public:
  static constexpr std::string_view kMagic = "DWCCN01";
  static constexpr std::uint8_t kVersion = 1;

  DeepWccn() = default;

  /// Statistics start at the identity, so a fresh layer is the identity map.
  DeepWccn(Eigen::Index dim, double beta)
      : mean_cov_(Matrix::Identity(dim, dim)),
        factor_(ProjectionFactor::Identity(dim)),
        beta_(beta) {
    Require(dim >= 1, Errc::kDimensionMismatch, "layer dimension must be >= 1");
    RequireBeta(beta);
    factor_ = WccnFactor(Smooth(mean_cov_, beta_));
  }

  struct TrainResult {
    Matrix projected;
    bool statistics_updated = false;
  };

  /// Updates the running statistics from the batch (read-only here; the
  /// caller's values never feed a gradient), recomputes the factor, and
  /// projects with the new factor.  A batch without any class of two or more
  /// samples leaves the statistics and n_tot untouched and is projected with
  /// the existing factor.
  TrainResult ForwardTrain(const LabeledBatch &batch) {
    Require(mode_ == Mode::kTraining, Errc::kFrozenLayer,
            "forward_train on a layer in inference mode");
    CheckDim(batch.dim());
    TrainResult out;
    WithinClassCov stats;
    try {
      stats = BatchWithinClassCov(batch);
    } catch (const Error &e) {
      if (e.code() != Errc::kNoEstimableClass) throw;
      out.projected = ProjectRows(factor_, batch.vectors);
      return out;
    }
    auto [next_mean, next_count] = CumulativeUpdate(mean_cov_, n_tot_, stats.averaged);
    ProjectionFactor next_factor = WccnFactor(Smooth(next_mean, beta_));
    mean_cov_ = std::move(next_mean);
    n_tot_ = next_count;
    factor_ = std::move(next_factor);
    out.projected = ProjectRows(factor_, batch.vectors);
    out.statistics_updated = true;
    return out;
  }

  /// A^T w per row with the stored factor.
  Matrix ForwardInfer(const Matrix &rows) const {
    CheckDim(rows.cols());
    return ProjectRows(factor_, rows);
  }

  /// Input gradient A g per row, given upstream gradients g (one per row).
  Matrix Backward(const Matrix &upstream) const {
    CheckDim(upstream.cols());
    return upstream * factor_.a.transpose();
  }

  void SetMode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }
  const Matrix &mean_cov() const { return mean_cov_; }
  std::uint64_t n_tot() const { return n_tot_; }
  const ProjectionFactor &factor() const { return factor_; }
  double beta() const { return beta_; }
  Eigen::Index dim() const { return mean_cov_.rows(); }

  /// magic, version byte, u64 dim, u64 n_tot, f64 beta, u8 mode, then the
  /// running mean and the factor as row-major f64 matrices.  All
  /// little-endian.
  void Save(std::ostream &os) const {
    io::WriteMagic(os, kMagic);
    io::WriteLe<std::uint8_t>(os, kVersion);
    io::WriteLe<std::uint64_t>(os, static_cast<std::uint64_t>(dim()));
    io::WriteLe<std::uint64_t>(os, n_tot_);
    io::WriteF64(os, beta_);
    io::WriteLe<std::uint8_t>(os, static_cast<std::uint8_t>(mode_));
    io::WriteMatrix(os, mean_cov_);
    io::WriteMatrix(os, factor_.a);
  }

  static DeepWccn Load(std::istream &is) {
    constexpr Errc kBad = Errc::kCorruptState;
    io::ExpectMagic(is, kMagic, kBad);
    const auto version = io::ReadLe<std::uint8_t>(is, kBad);
    Require(version == kVersion, kBad,
            "unsupported state version " + std::to_string(version));
    const auto dim = io::ReadLe<std::uint64_t>(is, kBad);
    Require(dim >= 1 && dim <= (1u << 14), kBad, "implausible dimension");
    DeepWccn layer;
    layer.n_tot_ = io::ReadLe<std::uint64_t>(is, kBad);
    layer.beta_ = io::ReadF64(is, kBad);
    Require(layer.beta_ >= 0.0 && layer.beta_ <= 1.0, kBad, "beta out of range");
    const auto mode = io::ReadLe<std::uint8_t>(is, kBad);
    Require(mode <= 1, kBad, "unknown mode byte");
    layer.mode_ = static_cast<Mode>(mode);
    const auto d = static_cast<Eigen::Index>(dim);
    layer.mean_cov_ = io::ReadMatrix(is, d, d, kBad);
    layer.factor_.a = io::ReadMatrix(is, d, d, kBad);
    return layer;
  }

 private:
  void CheckDim(Eigen::Index d) const {
    Require(d == dim(), Errc::kDimensionMismatch,
            "layer is " + std::to_string(dim()) + "-dimensional, input is " +
                std::to_string(d));
  }

  Matrix mean_cov_;
  std::uint64_t n_tot_ = 0;
  ProjectionFactor factor_;
  double beta_ = 0.0;
  Mode mode_ = Mode::kTraining;
};

}  // namespace emovar

#endif  // EMOVAR_DEEP_WCCN_HPP_
