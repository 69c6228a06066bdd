// emovar/optim.hpp

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

#ifndef EMOVAR_OPTIM_HPP_
#define EMOVAR_OPTIM_HPP_

#include <Eigen/Dense>

#include <cstdint>

#include "emovar/error.hpp"
#include "emovar/head.hpp"

namespace emovar {

inline constexpr double kAdagradEpsilon = 1e-10;

/// One Adagrad update of a parameter block.  Weight decay is coupled as an
/// L2 term on the gradient:
///   g' = g + wd * theta;  acc += g'^2;  theta -= lr * g' / (sqrt(acc) + eps)
template <typename Param, typename Grad, typename Acc>
void AdagradStep(Eigen::MatrixBase<Param> &param, const Eigen::MatrixBase<Grad> &grad,
                 Eigen::MatrixBase<Acc> &acc, double lr, double weight_decay) {
  Require(param.rows() == grad.rows() && param.cols() == grad.cols() &&
              param.rows() == acc.rows() && param.cols() == acc.cols(),
          Errc::kShapeMismatch, "parameter, gradient and accumulator shapes differ");
  const auto effective = (grad + weight_decay * param).eval();
  acc.array() += effective.array().square();
  param.array() -= lr * effective.array() / (acc.array().sqrt() + kAdagradEpsilon);
}

/// Squared-gradient accumulators for every head parameter block.
struct OptimizerState {
  Matrix dense_weights;
  Vector dense_bias;
  Matrix classifier_weights;
  Vector classifier_bias;
  std::uint64_t steps = 0;

  static OptimizerState ZerosLike(const HeadParameters &p) {
    return {Matrix::Zero(p.dense_weights.rows(), p.dense_weights.cols()),
            Vector::Zero(p.dense_bias.size()),
            Matrix::Zero(p.classifier_weights.rows(), p.classifier_weights.cols()),
            Vector::Zero(p.classifier_bias.size()), 0};
  }
};

inline void AdagradStep(HeadParameters &params, const HeadGradients &grads,
                        OptimizerState &state, double lr, double weight_decay) {
  Require(lr > 0.0, Errc::kInvalidConfig, "learning rate must be positive");
  AdagradStep(params.dense_weights, grads.dense_weights, state.dense_weights, lr,
              weight_decay);
  AdagradStep(params.dense_bias, grads.dense_bias, state.dense_bias, lr, weight_decay);
  AdagradStep(params.classifier_weights, grads.classifier_weights,
              state.classifier_weights, lr, weight_decay);
  AdagradStep(params.classifier_bias, grads.classifier_bias, state.classifier_bias, lr,
              weight_decay);
  ++state.steps;
}

}  // namespace emovar

#endif  // EMOVAR_OPTIM_HPP_
