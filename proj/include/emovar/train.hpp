// emovar/train.hpp

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

#ifndef EMOVAR_TRAIN_HPP_
#define EMOVAR_TRAIN_HPP_

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "emovar/corpus.hpp"
#include "emovar/head.hpp"
#include "emovar/metrics.hpp"
#include "emovar/optim.hpp"

namespace emovar {

struct TrainingConfig {
  double learning_rate = 3e-4;
  double weight_decay = 5e-4;
  double dropout_rate = 0.3;
  double beta = 0.4;
  double gamma = 1.7e-3;
  int batch_size = 14;
  int max_epochs = 30;
  int patience = 10;
  Eigen::Index hidden_dim = 0;  // 0: a quarter of d_z
  bool use_wccn = true;
  std::uint64_t seed = 1;

  void Validate() const {
    Require(learning_rate > 0.0, Errc::kInvalidConfig, "learning_rate must be > 0");
    Require(weight_decay >= 0.0, Errc::kInvalidConfig, "weight_decay must be >= 0");
    Require(batch_size >= 2, Errc::kInvalidConfig, "batch_size must be >= 2");
    Require(max_epochs >= 1, Errc::kInvalidConfig, "max_epochs must be >= 1");
    Require(patience >= 0, Errc::kInvalidConfig, "patience must be >= 0");
    Require(hidden_dim >= 0, Errc::kInvalidConfig, "hidden_dim must be >= 0");
    HeadConfig{dropout_rate, gamma, beta, seed, use_wccn}.Validate();
  }

  HeadConfig head_config() const { return {dropout_rate, gamma, beta, seed, use_wccn}; }

  /// Tuned hyper-parameter sets named after the two training languages.
  static TrainingConfig Preset(std::string_view name) {
    TrainingConfig c;
    if (name == "DECH") {
      c.weight_decay = 4e-4;
      c.dropout_rate = 0.45;
      c.beta = 0.2;
      c.gamma = 8e-4;
    } else if (name == "DEEN") {
      c.weight_decay = 5e-4;
      c.dropout_rate = 0.05;
      c.beta = 0.5;
      c.gamma = 1.2e-3;
    } else if (name == "ENCH") {
      c.weight_decay = 5e-4;
      c.dropout_rate = 0.3;
      c.beta = 0.4;
      c.gamma = 1.7e-3;
    } else {
      throw Error(Errc::kInvalidConfig, "unknown preset '" + std::string(name) + "'");
    }
    c.learning_rate = 3e-4;
    c.batch_size = 14;
    return c;
  }
};

/// Utterance-level features for every record of a corpus, indexed like
/// corpus.records.
struct PooledData {
  Matrix features;  // N x 2 d_z
  std::vector<int> labels;

  Eigen::Index input_dim() const { return features.cols(); }
};

/// Frame normalisation (skipped when target_frames == 0) followed by
/// statistics pooling.
inline PooledData PoolCorpus(const Corpus &corpus, Eigen::Index target_frames,
                             std::uint64_t seed) {
  PooledData out;
  out.features.resize(static_cast<Eigen::Index>(corpus.records.size()), 2 * corpus.dim);
  out.labels.reserve(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto &r = corpus.records[i];
    const Vector u = target_frames > 0
                         ? StatPool(NormalizeFrames(r, target_frames, seed).embedding)
                         : StatPool(r.embedding);
    out.features.row(static_cast<Eigen::Index>(i)) = u.transpose();
    out.labels.push_back(r.label_index());
  }
  return out;
}

inline void Gather(const PooledData &data, const Subset &subset,
                   std::span<const std::size_t> positions, Matrix &rows,
                   std::vector<int> &labels) {
  rows.resize(static_cast<Eigen::Index>(positions.size()), data.input_dim());
  labels.resize(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const std::size_t rec = subset[positions[k]].record;
    rows.row(static_cast<Eigen::Index>(k)) = data.features.row(static_cast<Eigen::Index>(rec));
    labels[k] = data.labels[rec];
  }
}

/// Positions into a data set of size n, shuffled with seed ^ epoch and cut
/// into contiguous batches; the last batch may be short.
inline std::vector<std::vector<std::size_t>> MakeBatches(std::size_t n, int batch_size,
                                                         std::uint64_t seed,
                                                         std::uint64_t epoch) {
  Require(batch_size >= 1, Errc::kInvalidConfig, "batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
  return batches;
}

struct EvalResult {
  ConfusionMatrix confusion{kNumEmotions};
  double ua = 0.0;
  double wa = 0.0;
};

inline EvalResult Evaluate(const EmotionHead &model, const PooledData &data,
                           const Subset &subset) {
  Require(!subset.empty(), Errc::kEmptyDataset, "evaluation set is empty");
  std::vector<std::size_t> all(subset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Matrix rows;
  std::vector<int> labels;
  Gather(data, subset, all, rows, labels);
  const auto predicted = model.Predict(rows);
  EvalResult r;
  r.confusion = Confusion(labels, predicted, static_cast<int>(model.params().num_classes()));
  r.ua = UnweightedAccuracy(r.confusion);
  r.wa = WeightedAccuracy(r.confusion);
  return r;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_ua = 0.0;
  double valid_wa = 0.0;
  std::uint64_t n_tot = 0;
};

struct TrainResult {
  EmotionHead best;
  int best_epoch = 0;
  double best_valid_ua = 0.0;
  std::vector<EpochLog> log;
};

inline EmotionHead MakeModel(Eigen::Index input_dim, const TrainingConfig &config) {
  config.Validate();
  const Eigen::Index d_z = input_dim / 2;
  const Eigen::Index d_h = config.hidden_dim > 0 ? config.hidden_dim
                                                 : std::max<Eigen::Index>(1, d_z / 4);
  return EmotionHead(d_z, d_h, kNumEmotions, config.head_config());
}

/// Runs one optimisation step on a batch and returns its training loss.
/// The self-supervised term enters the loss as ssl_value (zero when no
/// self-supervised tensors accompany the corpus).
inline double TrainStep(EmotionHead &model, OptimizerState &opt, const Matrix &rows,
                        std::span<const int> labels, const TrainingConfig &config,
                        double ssl_value = 0.0) {
  const HeadIntermediates it = model.Forward(rows, labels, Mode::kTraining);
  const double loss = MeanCrossEntropy(it.logits, labels) + config.gamma * ssl_value;
  const HeadGradients grads = model.Backward(it, labels);
  AdagradStep(model.mutable_params(), grads, opt, config.learning_rate, config.weight_decay);
  return loss;
}

/// Epoch loop with early stopping on validation UA.  The best snapshot (ties
/// go to the earlier epoch) is returned in inference mode.  Training stops
/// once `patience` epochs have passed without improvement.
inline TrainResult Train(EmotionHead model, const PooledData &data, const Subset &train_set,
                         const Subset &valid_set, const TrainingConfig &config,
                         const std::function<void(const EpochLog &)> &on_epoch = {}) {
  config.Validate();
  Require(!train_set.empty(), Errc::kEmptyDataset, "training set is empty");
  Require(!valid_set.empty(), Errc::kEmptyDataset, "validation set is empty");
  OptimizerState opt = OptimizerState::ZerosLike(model.params());
  TrainResult result;
  bool have_best = false;
  Matrix rows;
  std::vector<int> labels;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = MakeBatches(train_set.size(), config.batch_size, config.seed,
                                     static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (const auto &batch : batches) {
      Gather(data, train_set, batch, rows, labels);
      loss_sum += TrainStep(model, opt, rows, labels, config);
    }
    const EvalResult valid = Evaluate(model, data, valid_set);
    EpochLog entry{epoch, loss_sum / static_cast<double>(batches.size()), valid.ua, valid.wa,
                   model.wccn().n_tot()};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!have_best || valid.ua > result.best_valid_ua) {
      have_best = true;
      result.best = model;
      result.best_epoch = epoch;
      result.best_valid_ua = valid.ua;
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }
  result.best.mutable_wccn().SetMode(Mode::kInference);
  return result;
}

inline void WriteTrainingLog(std::ostream &os, const std::vector<EpochLog> &log) {
  os << "epoch,train_loss,valid_UA,valid_WA,n_tot\n";
  char buf[160];
  for (const auto &e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.6f,%.6f,%llu\n", e.epoch, e.train_loss,
                  e.valid_ua, e.valid_wa, static_cast<unsigned long long>(e.n_tot));
    os << buf;
  }
}

}  // namespace emovar

#endif  // EMOVAR_TRAIN_HPP_
