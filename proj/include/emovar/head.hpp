// emovar/head.hpp

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

// Emotion classification head on top of frame-level embeddings:
//
//   frames (T x d_z) -> [mean; std] (2 d_z) -> dense (d_h) -> ReLU -> dropout
//     -> Deep-WCCN (d_h) -> unit norm -> linear classifier (C)
//
// trained with softmax cross-entropy plus gamma times an externally supplied
// self-supervised loss value.  Gradients are computed analytically.

#ifndef EMOVAR_HEAD_HPP_
#define EMOVAR_HEAD_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "emovar/binary_io.hpp"
#include "emovar/covariance.hpp"
#include "emovar/deep_wccn.hpp"
#include "emovar/error.hpp"

namespace emovar {

inline constexpr double kUnitNormEpsilon = 1e-12;

/// Per-dimension temporal mean followed by per-dimension population standard
/// deviation.  Accumulates in double whatever the frame precision.
template <typename Derived>
Vector StatPool(const Eigen::MatrixBase<Derived> &frames) {
  Require(frames.rows() >= 1, Errc::kEmptySequence, "sequence has no frames");
  const Matrix x = frames.template cast<double>();
  const Eigen::Index d = x.cols();
  Vector u(2 * d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var =
      centered.array().square().colwise().sum() / static_cast<double>(x.rows());
  u.head(d) = mean.transpose();
  u.tail(d) = var.transpose().array().sqrt();
  return u;
}

struct HeadParameters {
  Matrix dense_weights;       // d_h x 2 d_z
  Vector dense_bias;          // d_h
  Matrix classifier_weights;  // C x d_h
  Vector classifier_bias;     // C

  Eigen::Index input_dim() const { return dense_weights.cols(); }
  Eigen::Index hidden_dim() const { return dense_weights.rows(); }
  Eigen::Index num_classes() const { return classifier_weights.rows(); }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
  static HeadParameters Initialized(Eigen::Index d_z, Eigen::Index d_h,
                                    Eigen::Index num_classes, std::uint64_t seed) {
    Require(d_z >= 1 && d_h >= 1 && num_classes >= 2, Errc::kDimensionMismatch,
            "head needs d_z >= 1, d_h >= 1 and at least two classes");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
      return m;
    };
    HeadParameters p;
    p.dense_weights = uniform(d_h, 2 * d_z);
    p.dense_bias = Vector::Zero(d_h);
    p.classifier_weights = uniform(num_classes, d_h);
    p.classifier_bias = Vector::Zero(num_classes);
    return p;
  }
};

struct HeadGradients {
  Matrix dense_weights;
  Vector dense_bias;
  Matrix classifier_weights;
  Vector classifier_bias;
  Matrix inputs;  // d loss / d pooled input, one row per item
};

struct HeadConfig {
  double dropout_rate = 0.0;
  double gamma = 0.0;
  double beta = 0.2;
  std::uint64_t rng_seed = 0;
  bool use_wccn = true;

  void Validate() const {
    Require(dropout_rate >= 0.0 && dropout_rate < 1.0, Errc::kInvalidConfig,
            "dropout rate must lie in [0, 1)");
    Require(gamma >= 0.0, Errc::kInvalidConfig, "gamma must be non-negative");
    RequireBeta(beta);
  }
};

/// Everything head_backward needs, captured by a forward pass.  Rows index
/// batch items.
struct HeadIntermediates {
  Matrix inputs;      // B x 2 d_z
  Matrix pre_relu;    // B x d_h
  Matrix mask;        // B x d_h, 0 or 1/(1-p); all ones at inference
  Matrix dropped;     // B x d_h, input to the WCCN map
  Matrix projected;   // B x d_h, WCCN output
  Vector norms;       // B, ||projected row||
  Matrix normalized;  // B x d_h
  Matrix logits;      // B x C
  Matrix factor;      // d_h x d_h, A used for this pass
  std::uint64_t params_version = 0;
};

/// Softmax cross-entropy of one logit vector against a class index.
inline double CrossEntropy(const Eigen::Ref<const Vector> &logits, int label) {
  Require(label >= 0 && label < logits.size(), Errc::kDimensionMismatch,
          "label out of range");
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return lse - logits(label);
}

/// Cross-entropy plus gamma times the self-supervised loss value.
inline double TotalLoss(const Eigen::Ref<const Vector> &logits, int label,
                        double gamma, double ssl_value) {
  return CrossEntropy(logits, label) + gamma * ssl_value;
}

/// Mean cross-entropy over the rows of a logit matrix.
inline double MeanCrossEntropy(const Matrix &logits, std::span<const int> labels) {
  Require(static_cast<std::size_t>(logits.rows()) == labels.size(),
          Errc::kDimensionMismatch, "logit rows and labels differ in count");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    total += CrossEntropy(logits.row(i).transpose(), labels[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(logits.rows());
}

/// Forward pass with an explicit dropout mask and WCCN factor.  This is the
/// deterministic core of EmotionHead::Forward and is used as-is by gradient
/// checks.
inline HeadIntermediates EvaluateHead(const HeadParameters &params,
                                      const Matrix &factor, const Matrix &mask,
                                      const Matrix &pooled) {
  const Eigen::Index h = params.hidden_dim();
  Require(pooled.cols() == params.input_dim(), Errc::kDimensionMismatch,
          "pooled inputs are " + std::to_string(pooled.cols()) +
              "-dimensional, head expects " + std::to_string(params.input_dim()));
  Require(mask.rows() == pooled.rows() && mask.cols() == h, Errc::kDimensionMismatch,
          "dropout mask shape mismatch");
  Require(factor.rows() == h && factor.cols() == h, Errc::kDimensionMismatch,
          "WCCN factor shape mismatch");
  HeadIntermediates it;
  it.inputs = pooled;
  it.pre_relu = (pooled * params.dense_weights.transpose()).rowwise() +
                params.dense_bias.transpose();
  it.mask = mask;
  it.dropped = it.pre_relu.cwiseMax(0.0).cwiseProduct(mask);
  it.projected = it.dropped * factor;
  it.norms = it.projected.rowwise().norm();
  it.normalized = it.projected.array().colwise() / (it.norms.array() + kUnitNormEpsilon);
  it.logits = (it.normalized * params.classifier_weights.transpose()).rowwise() +
              params.classifier_bias.transpose();
  it.factor = factor;
  return it;
}

/// Gradients of the mean cross-entropy over the batch.  The self-supervised
/// term is an additive constant here and contributes nothing.
inline HeadGradients BackwardHead(const HeadParameters &params,
                                  const HeadIntermediates &it,
                                  std::span<const int> labels) {
  const Eigen::Index batch = it.logits.rows();
  Require(static_cast<std::size_t>(batch) == labels.size(), Errc::kDimensionMismatch,
          "intermediates and labels differ in count");
  Require(batch > 0, Errc::kEmptyBatch, "empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch);

  // softmax - onehot
  Matrix d_logits(batch, it.logits.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto row = it.logits.row(i);
    const Eigen::RowVectorXd e = (row.array() - row.maxCoeff()).exp();
    d_logits.row(i) = e / e.sum();
    const int label = labels[static_cast<std::size_t>(i)];
    Require(label >= 0 && label < it.logits.cols(), Errc::kDimensionMismatch,
            "label out of range");
    d_logits(i, label) -= 1.0;
  }
  d_logits *= inv_b;

  HeadGradients g;
  g.classifier_weights = d_logits.transpose() * it.normalized;
  g.classifier_bias = d_logits.colwise().sum().transpose();
  const Matrix d_normalized = d_logits * params.classifier_weights;

  // n = w / (r + eps):  dn/dw = I/(r+eps) - w w^T / (r (r+eps)^2)
  Matrix d_projected(batch, it.projected.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double r = it.norms(i);
    const double s = r + kUnitNormEpsilon;
    const auto w = it.projected.row(i);
    const auto gn = d_normalized.row(i);
    d_projected.row(i) = gn / s;
    if (r > 0.0) d_projected.row(i) -= w * (w.dot(gn) / (r * s * s));
  }

  // Deep-WCCN: the factor is a constant, so the input gradient is A g.
  const Matrix d_dropped = d_projected * it.factor.transpose();
  const Matrix d_pre = d_dropped.cwiseProduct(it.mask).cwiseProduct(
      (it.pre_relu.array() > 0.0).cast<double>().matrix());

  g.dense_weights = d_pre.transpose() * it.inputs;
  g.dense_bias = d_pre.colwise().sum().transpose();
  g.inputs = d_pre * params.dense_weights;
  return g;
}

inline std::vector<int> ArgmaxRows(const Matrix &logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

/// Head parameters, the Deep-WCCN layer and the dropout stream of one model.
/// Training-mode forwards advance the layer statistics and the dropout
/// stream; inference forwards are const and reentrant.
class EmotionHead {
 public:
  static constexpr std::string_view kMagic = "EMOHEAD1";
  static constexpr std::uint8_t kVersion = 1;

  EmotionHead() = default;

  EmotionHead(Eigen::Index d_z, Eigen::Index d_h, Eigen::Index num_classes,
              const HeadConfig &config)
      : config_(config),
        params_(HeadParameters::Initialized(d_z, d_h, num_classes, config.rng_seed)),
        wccn_(d_h, config.beta),
        dropout_rng_(config.rng_seed ^ 0x9e3779b97f4a7c15ULL) {
    config_.Validate();
  }

  /// d_h defaults to a quarter of d_z.
  static EmotionHead WithDefaultHidden(Eigen::Index d_z, Eigen::Index num_classes,
                                       const HeadConfig &config) {
    return EmotionHead(d_z, std::max<Eigen::Index>(1, d_z / 4), num_classes, config);
  }

  /// Training mode draws a fresh inverted-dropout mask and advances the
  /// Deep-WCCN statistics with the batch labels; inference mode is
  /// deterministic and leaves the model untouched.
  HeadIntermediates Forward(const Matrix &pooled, std::span<const int> labels,
                            Mode mode) {
    if (mode == Mode::kInference) return Infer(pooled);
    Require(static_cast<std::size_t>(pooled.rows()) == labels.size(),
            Errc::kDimensionMismatch, "pooled rows and labels differ in count");
    Require(pooled.cols() == params_.input_dim(), Errc::kDimensionMismatch,
            "pooled input dimension mismatch");
    const Eigen::Index h = params_.hidden_dim();
    Matrix mask = Matrix::Ones(pooled.rows(), h);
    if (config_.dropout_rate > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double keep_scale = 1.0 / (1.0 - config_.dropout_rate);
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < h; ++j)
          mask(i, j) = unit(dropout_rng_) < config_.dropout_rate ? 0.0 : keep_scale;
    }
    Matrix factor = Matrix::Identity(h, h);
    if (config_.use_wccn) {
      const Matrix pre = (pooled * params_.dense_weights.transpose()).rowwise() +
                         params_.dense_bias.transpose();
      LabeledBatch detached{pre.cwiseMax(0.0).cwiseProduct(mask),
                            std::vector<int>(labels.begin(), labels.end())};
      wccn_.ForwardTrain(detached);
      factor = wccn_.factor().a;
    }
    HeadIntermediates it = EvaluateHead(params_, factor, mask, pooled);
    it.params_version = version_;
    return it;
  }

  HeadIntermediates Infer(const Matrix &pooled) const {
    const Eigen::Index h = params_.hidden_dim();
    const Matrix factor = config_.use_wccn ? wccn_.factor().a : Matrix::Identity(h, h);
    HeadIntermediates it =
        EvaluateHead(params_, factor, Matrix::Ones(pooled.rows(), h), pooled);
    it.params_version = version_;
    return it;
  }

  std::vector<int> Predict(const Matrix &pooled) const {
    return ArgmaxRows(Infer(pooled).logits);
  }

  HeadGradients Backward(const HeadIntermediates &it, std::span<const int> labels) const {
    Require(it.params_version == version_, Errc::kStaleIntermediates,
            "parameters changed since the forward pass");
    return BackwardHead(params_, it, labels);
  }

  const HeadParameters &params() const { return params_; }
  /// Mutable access invalidates outstanding intermediates.
  HeadParameters &mutable_params() {
    ++version_;
    return params_;
  }
  const DeepWccn &wccn() const { return wccn_; }
  DeepWccn &mutable_wccn() { return wccn_; }
  const HeadConfig &config() const { return config_; }

  /// magic, version byte, u64 d_z, u64 d_h, u64 C, f64 dropout, f64 gamma,
  /// u64 seed, u8 use_wccn, parameter blocks (row-major f64), then the
  /// embedded Deep-WCCN state.
  void Save(std::ostream &os) const {
    io::WriteMagic(os, kMagic);
    io::WriteLe<std::uint8_t>(os, kVersion);
    io::WriteLe<std::uint64_t>(os, static_cast<std::uint64_t>(params_.input_dim() / 2));
    io::WriteLe<std::uint64_t>(os, static_cast<std::uint64_t>(params_.hidden_dim()));
    io::WriteLe<std::uint64_t>(os, static_cast<std::uint64_t>(params_.num_classes()));
    io::WriteF64(os, config_.dropout_rate);
    io::WriteF64(os, config_.gamma);
    io::WriteLe<std::uint64_t>(os, config_.rng_seed);
    io::WriteLe<std::uint8_t>(os, config_.use_wccn ? 1 : 0);
    io::WriteMatrix(os, params_.dense_weights);
    io::WriteVector(os, params_.dense_bias);
    io::WriteMatrix(os, params_.classifier_weights);
    io::WriteVector(os, params_.classifier_bias);
    wccn_.Save(os);
  }

  static EmotionHead Load(std::istream &is) {
    constexpr Errc kBad = Errc::kCorruptState;
    io::ExpectMagic(is, kMagic, kBad);
    const auto version = io::ReadLe<std::uint8_t>(is, kBad);
    Require(version == kVersion, kBad, "unsupported model version " + std::to_string(version));
    const auto d_z = io::ReadLe<std::uint64_t>(is, kBad);
    const auto d_h = io::ReadLe<std::uint64_t>(is, kBad);
    const auto c = io::ReadLe<std::uint64_t>(is, kBad);
    Require(d_z >= 1 && d_z <= (1u << 16) && d_h >= 1 && d_h <= (1u << 14) && c >= 2 &&
                c <= 1024,
            kBad, "implausible model dimensions");
    EmotionHead m;
    m.config_.dropout_rate = io::ReadF64(is, kBad);
    m.config_.gamma = io::ReadF64(is, kBad);
    m.config_.rng_seed = io::ReadLe<std::uint64_t>(is, kBad);
    m.config_.use_wccn = io::ReadLe<std::uint8_t>(is, kBad) != 0;
    const auto in = static_cast<Eigen::Index>(2 * d_z);
    const auto h = static_cast<Eigen::Index>(d_h);
    const auto nc = static_cast<Eigen::Index>(c);
    m.params_.dense_weights = io::ReadMatrix(is, h, in, kBad);
    m.params_.dense_bias = io::ReadVector(is, h, kBad);
    m.params_.classifier_weights = io::ReadMatrix(is, nc, h, kBad);
    m.params_.classifier_bias = io::ReadVector(is, nc, kBad);
    m.wccn_ = DeepWccn::Load(is);
    Require(m.wccn_.dim() == h, kBad, "embedded layer dimension mismatch");
    m.config_.beta = m.wccn_.beta();
    m.dropout_rng_.seed(m.config_.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    return m;
  }

 private:
  HeadConfig config_;
  HeadParameters params_;
  DeepWccn wccn_;
  std::mt19937_64 dropout_rng_;
  std::uint64_t version_ = 0;
};

}  // namespace emovar

#endif  // EMOVAR_HEAD_HPP_
