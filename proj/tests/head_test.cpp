// tests/head_test.cpp

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


#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "emovar/head.hpp"
#include "test_util.hpp"

namespace emovar {
namespace {

using testing::ExpectErrc;
using testing::NumericGradient;
using testing::RandomLabeledBatch;
using testing::RandomMatrix;
using testing::RelativeError;

std::vector<int> RandomLabels(std::mt19937_64 &rng, int n, int classes) {
  std::vector<int> y;
  for (int i = 0; i < n; ++i) y.push_back(static_cast<int>(rng() % classes));
  return y;
}

std::string Bytes(const EmotionHead &head) {
  std::ostringstream os(std::ios::binary);
  head.Save(os);
  return os.str();
}

TEST(StatPool, HandExamples) {
  Eigen::MatrixXd seq(2, 1);
  seq << 0, 2;
  const Vector u = StatPool(seq);
  EXPECT_DOUBLE_EQ(u(0), 1.0);
  EXPECT_DOUBLE_EQ(u(1), 1.0);

  Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(5, 3, -1.5);
  const Vector c = StatPool(constant);
  EXPECT_TRUE(c.head(3).isApprox(Vector::Constant(3, -1.5)));
  EXPECT_EQ(c.tail(3).norm(), 0.0);

  ExpectErrc(Errc::kEmptySequence, [] { StatPool(Eigen::MatrixXd(0, 3)); });
}

TEST(StatPool, SingleFrameHasZeroSpread) {
  Eigen::MatrixXf one(1, 4);
  one << 1, 2, 3, 4;
  const Vector u = StatPool(one);
  EXPECT_EQ(u.size(), 8);
  EXPECT_EQ(u.tail(4).norm(), 0.0);
}

TEST(CrossEntropy, ClosedForms) {
  EXPECT_NEAR(CrossEntropy(Vector::Zero(4), 2), std::log(4.0), 1e-12);
  Vector l(4);
  l << 2, 0, 0, 0;
  EXPECT_NEAR(CrossEntropy(l, 0), std::log(std::exp(2.0) + 3.0) - 2.0, 1e-14);
  EXPECT_NEAR(CrossEntropy(l, 0), 0.3407530, 1e-6);
  EXPECT_NEAR(TotalLoss(l, 0, 0.0, 5.0), CrossEntropy(l, 0), 0.0);
  EXPECT_NEAR(TotalLoss(l, 0, 0.1, 2.0), CrossEntropy(l, 0) + 0.2, 1e-15);
}

TEST(CrossEntropy, LowerBound) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vector l = RandomMatrix(rng, 4, 1, 20.0);
    const int y = static_cast<int>(rng() % 4);
    EXPECT_GE(CrossEntropy(l, y), 0.0);
    EXPECT_GE(TotalLoss(l, y, 1e-3, 0.7), 1e-3 * 0.7);
  }
}

// Scalar-loop reimplementation of the inference path for d_z = 2, d_h = 2,
// C = 2, including the smoothed Cholesky factor of a 2 x 2 covariance.
std::vector<double> OracleLogits(const HeadParameters &p, const Matrix &mean_cov, double beta,
                                 const std::vector<double> &u) {
  double h[2];
  for (int j = 0; j < 2; ++j) {
    double s = p.dense_bias(j);
    for (int k = 0; k < 4; ++k) s += p.dense_weights(j, k) * u[static_cast<std::size_t>(k)];
    h[j] = s > 0 ? s : 0;
  }
  const double s00 = (1 - beta) * mean_cov(0, 0) + beta;
  const double s10 = (1 - beta) * 0.5 * (mean_cov(1, 0) + mean_cov(0, 1));
  const double s11 = (1 - beta) * mean_cov(1, 1) + beta;
  // S = L L^T, L = [[a, 0], [b, c]]
  const double a = std::sqrt(s00), b = s10 / a, c = std::sqrt(s11 - b * b);
  // A = L^{-T} = [[1/a, -b/(a c)], [0, 1/c]];  z = A^T h
  const double z0 = h[0] / a;
  const double z1 = -b / (a * c) * h[0] + h[1] / c;
  const double r = std::sqrt(z0 * z0 + z1 * z1) + kUnitNormEpsilon;
  std::vector<double> logits;
  for (int k = 0; k < 2; ++k)
    logits.push_back(p.classifier_weights(k, 0) * z0 / r + p.classifier_weights(k, 1) * z1 / r +
                     p.classifier_bias(k));
  return logits;
}

TEST(EmotionHead, MatchesIndependentReimplementation) {
  std::mt19937_64 rng(2);
  HeadConfig cfg{0.0, 0.0, 0.3, 11, true};
  EmotionHead head(2, 2, 2, cfg);
  head.mutable_params().dense_bias << 0.4, 0.3;
  head.mutable_params().classifier_bias << 0.1, -0.2;
  for (int i = 0; i < 3; ++i) {
    const Matrix x = RandomMatrix(rng, 6, 4);
    head.Forward(x, RandomLabels(rng, 6, 2), Mode::kTraining);
  }
  ASSERT_GT(head.wccn().n_tot(), 0u);
  const Matrix x = RandomMatrix(rng, 5, 4);
  const Matrix logits = head.Infer(x).logits;
  for (int i = 0; i < 5; ++i) {
    const auto oracle = OracleLogits(head.params(), head.wccn().mean_cov(), 0.3,
                                     {x(i, 0), x(i, 1), x(i, 2), x(i, 3)});
    EXPECT_NEAR(logits(i, 0), oracle[0], 1e-12);
    EXPECT_NEAR(logits(i, 1), oracle[1], 1e-12);
  }
}

struct GradientCase {
  HeadParameters params;
  Matrix factor;
  Matrix mask;
  Matrix inputs;
  std::vector<int> labels;
};

GradientCase MakeGradientCase(std::uint64_t seed, double dropout) {
  std::mt19937_64 rng(seed);
  GradientCase c;
  const Eigen::Index d_z = 6, d_h = 5, classes = 4, batch = 7;
  c.params = HeadParameters::Initialized(d_z, d_h, classes, seed);
  c.params.dense_bias = RandomMatrix(rng, d_h, 1, 0.1);
  c.params.classifier_bias = RandomMatrix(rng, classes, 1, 0.1);
  // A from a random within-class scatter, so the WCCN map is far from I.
  DeepWccn layer(d_h, 0.2);
  layer.ForwardTrain(RandomLabeledBatch(rng, d_h, 3, 6));
  c.factor = layer.factor().a;
  std::bernoulli_distribution drop(dropout);
  c.mask = Matrix::Constant(batch, d_h, 1.0 / (1.0 - dropout));
  for (Eigen::Index i = 0; i < batch; ++i)
    for (Eigen::Index j = 0; j < d_h; ++j)
      if (drop(rng)) c.mask(i, j) = 0.0;
  c.inputs = RandomMatrix(rng, batch, 2 * d_z);
  c.labels = RandomLabels(rng, static_cast<int>(batch), static_cast<int>(classes));
  return c;
}

double CaseLoss(const GradientCase &c, const HeadParameters &p, const Matrix &inputs) {
  return MeanCrossEntropy(EvaluateHead(p, c.factor, c.mask, inputs).logits, c.labels);
}

TEST(HeadBackward, AllBlocksMatchFiniteDifferences) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const GradientCase c = MakeGradientCase(seed, seed == 3u ? 0.0 : 0.3);
    const HeadIntermediates it = EvaluateHead(c.params, c.factor, c.mask, c.inputs);
    ASSERT_GT((it.pre_relu.array() > 0).count(), 0);
    ASSERT_GT((it.pre_relu.array() < 0).count(), 0);
    const HeadGradients g = BackwardHead(c.params, it, c.labels);

    auto wrt = [&](auto member) {
      return NumericGradient(
          [&](const Matrix &m) {
            HeadParameters p = c.params;
            p.*member = m;
            return CaseLoss(c, p, c.inputs);
          },
          c.params.*member);
    };
    EXPECT_LE(RelativeError(g.dense_weights, wrt(&HeadParameters::dense_weights)), 1e-4);
    EXPECT_LE(RelativeError(g.classifier_weights, wrt(&HeadParameters::classifier_weights)),
              1e-4);
    auto wrt_vec = [&](auto member) {
      return NumericGradient(
          [&](const Matrix &m) {
            HeadParameters p = c.params;
            p.*member = m.col(0);
            return CaseLoss(c, p, c.inputs);
          },
          Matrix(c.params.*member));
    };
    EXPECT_LE(RelativeError(g.dense_bias, wrt_vec(&HeadParameters::dense_bias)), 1e-4);
    EXPECT_LE(RelativeError(g.classifier_bias, wrt_vec(&HeadParameters::classifier_bias)),
              1e-4);
    const Matrix d_inputs =
        NumericGradient([&](const Matrix &x) { return CaseLoss(c, c.params, x); }, c.inputs);
    EXPECT_LE(RelativeError(g.inputs, d_inputs), 1e-4);
  }
}

TEST(HeadBackward, UnitNormGradientIsOrthogonalToInput) {
  std::mt19937_64 rng(6);
  HeadParameters p = HeadParameters::Initialized(3, 4, 4, 6);
  p.dense_bias = Vector::Constant(4, 50.0);  // every unit active
  const Matrix x = RandomMatrix(rng, 1, 6);
  const Matrix identity = Matrix::Identity(4, 4);
  const HeadIntermediates it = EvaluateHead(p, identity, Matrix::Ones(1, 4), x);
  ASSERT_TRUE((it.pre_relu.array() > 0).all());
  // With A = I, no dropout and all units active, the bias gradient equals
  // the gradient with respect to the unit-norm input.
  const std::vector<int> label{2};
  const Vector g = BackwardHead(p, it, label).dense_bias;
  const Vector w = it.projected.row(0).transpose();
  EXPECT_LE(std::abs(g.dot(w)), 1e-10 * g.norm() * w.norm());
  EXPECT_GT(g.norm(), 1e-6);
}

TEST(HeadBackward, SaturatedSoftmaxGivesZeroGradients) {
  std::mt19937_64 rng(7);
  HeadParameters p = HeadParameters::Initialized(3, 4, 4, 7);
  const Matrix x = RandomMatrix(rng, 6, 6);
  const Matrix ones = Matrix::Ones(6, 4), identity = Matrix::Identity(4, 4);
  const std::vector<int> predicted = ArgmaxRows(EvaluateHead(p, identity, ones, x).logits);
  p.classifier_weights *= 1e4;
  p.classifier_bias *= 1e4;
  const HeadIntermediates it = EvaluateHead(p, identity, ones, x);
  ASSERT_EQ(ArgmaxRows(it.logits), predicted);
  const HeadGradients g = BackwardHead(p, it, predicted);
  EXPECT_LE(g.dense_weights.norm() + g.dense_bias.norm() + g.classifier_weights.norm() +
                g.classifier_bias.norm(),
            1e-8);
}

TEST(EmotionHead, ShapeChain) {
  std::mt19937_64 rng(8);
  EmotionHead head = EmotionHead::WithDefaultHidden(64, 4, HeadConfig{0.3, 0.0, 0.2, 1, true});
  const Matrix x = RandomMatrix(rng, 14, 128);
  const HeadIntermediates it = head.Forward(x, RandomLabels(rng, 14, 4), Mode::kTraining);
  EXPECT_EQ(it.pre_relu.cols(), 16);
  EXPECT_EQ(it.dropped.cols(), 16);
  EXPECT_EQ(it.projected.cols(), 16);
  EXPECT_EQ(it.normalized.cols(), 16);
  EXPECT_EQ(it.logits.cols(), 4);
  EXPECT_EQ(it.logits.rows(), 14);
  ExpectErrc(Errc::kDimensionMismatch, [&] { head.Infer(RandomMatrix(rng, 2, 127)); });
}

TEST(EmotionHead, InferenceIsDeterministicAndPure) {
  std::mt19937_64 rng(9);
  EmotionHead head(4, 3, 4, HeadConfig{0.5, 0.0, 0.2, 3, true});
  head.Forward(RandomMatrix(rng, 8, 8), RandomLabels(rng, 8, 4), Mode::kTraining);
  const std::string before = Bytes(head);
  const Matrix x = RandomMatrix(rng, 5, 8);
  const Matrix a = head.Forward(x, {}, Mode::kInference).logits;
  const Matrix b = head.Infer(x).logits;
  EXPECT_EQ(a, b);
  EXPECT_EQ(Bytes(head), before);
}

TEST(EmotionHead, DropoutExpectationMatchesInference) {
  std::mt19937_64 rng(10);
  EmotionHead head(4, 6, 4, HeadConfig{0.45, 0.0, 0.2, 5, false});
  head.mutable_params().dense_bias = Vector::Constant(6, 0.5);
  const Matrix x = RandomMatrix(rng, 3, 8);
  const std::vector<int> labels{0, 1, 2};
  const Matrix expected = head.Infer(x).dropped;
  Matrix sum = Matrix::Zero(3, 6);
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += head.Forward(x, labels, Mode::kTraining).dropped;
  const Matrix mean = sum / n;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 6; ++j)
      if (expected(i, j) > 0.05)
        EXPECT_NEAR(mean(i, j) / expected(i, j), 1.0, 0.02) << i << "," << j;
      else
        EXPECT_NEAR(mean(i, j), expected(i, j), 0.002);
}

TEST(EmotionHead, StaleIntermediatesRejected) {
  std::mt19937_64 rng(11);
  EmotionHead head(4, 3, 4, HeadConfig{0.0, 0.0, 0.2, 3, true});
  const std::vector<int> labels{0, 1, 1, 0};
  const HeadIntermediates it = head.Forward(RandomMatrix(rng, 4, 8), labels, Mode::kTraining);
  EXPECT_NO_THROW(head.Backward(it, labels));
  head.mutable_params();
  ExpectErrc(Errc::kStaleIntermediates, [&] { head.Backward(it, labels); });
}

TEST(EmotionHead, SaveLoadRoundTrip) {
  std::mt19937_64 rng(12);
  EmotionHead head(4, 3, 4, HeadConfig{0.1, 1e-3, 0.4, 3, true});
  head.Forward(RandomMatrix(rng, 8, 8), RandomLabels(rng, 8, 4), Mode::kTraining);
  const std::string bytes = Bytes(head);
  std::istringstream is(bytes, std::ios::binary);
  const EmotionHead loaded = EmotionHead::Load(is);
  EXPECT_EQ(Bytes(loaded), bytes);
  const Matrix x = RandomMatrix(rng, 5, 8);
  EXPECT_EQ(loaded.Infer(x).logits, head.Infer(x).logits);
  for (std::size_t n = 0; n < bytes.size(); n += 7) {
    std::istringstream cut(bytes.substr(0, n), std::ios::binary);
    EXPECT_THROW(EmotionHead::Load(cut), Error);
  }
}

TEST(HeadParameters, InitialisationBounds) {
  const HeadParameters p = HeadParameters::Initialized(64, 16, 4, 9);
  EXPECT_LE(p.dense_weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(128.0));
  EXPECT_LE(p.classifier_weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(16.0));
  EXPECT_EQ(p.dense_bias.norm(), 0.0);
  EXPECT_EQ(p.classifier_bias.norm(), 0.0);
  const HeadParameters q = HeadParameters::Initialized(64, 16, 4, 9);
  EXPECT_EQ(p.dense_weights, q.dense_weights);
}

}  // namespace
}  // namespace emovar
