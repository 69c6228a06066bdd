// emovar/metrics.hpp

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

#ifndef EMOVAR_METRICS_HPP_
#define EMOVAR_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "emovar/error.hpp"

namespace emovar {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : n_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
    Require(num_classes >= 1, Errc::kEmptyMatrix, "confusion matrix needs a class");
  }

  void Add(int truth, int predicted) {
    Require(truth >= 0 && truth < n_ && predicted >= 0 && predicted < n_,
            Errc::kDimensionMismatch, "label out of range");
    ++counts_[Index(truth, predicted)];
  }

  std::int64_t at(int truth, int predicted) const { return counts_[Index(truth, predicted)]; }
  int num_classes() const { return n_; }

  std::int64_t RowSum(int truth) const {
    std::int64_t s = 0;
    for (int p = 0; p < n_; ++p) s += at(truth, p);
    return s;
  }

  std::int64_t Total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  std::int64_t Trace() const {
    std::int64_t s = 0;
    for (int c = 0; c < n_; ++c) s += at(c, c);
    return s;
  }

  friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;

 private:
  std::size_t Index(int t, int p) const { return static_cast<std::size_t>(t * n_ + p); }

  int n_;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix Confusion(std::span<const int> truth, std::span<const int> predicted,
                                 int num_classes) {
  Require(truth.size() == predicted.size(), Errc::kLengthMismatch,
          std::to_string(truth.size()) + " true labels vs " +
              std::to_string(predicted.size()) + " predictions");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.Add(truth[i], predicted[i]);
  return cm;
}

/// Mean per-class recall over classes that occur in the test data.
inline double UnweightedAccuracy(const ConfusionMatrix &cm) {
  Require(cm.Total() > 0, Errc::kEmptyMatrix, "no predictions");
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const auto n = cm.RowSum(c);
    if (n == 0) continue;
    sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(n);
    ++present;
  }
  return sum / present;
}

/// Overall fraction correct.
inline double WeightedAccuracy(const ConfusionMatrix &cm) {
  Require(cm.Total() > 0, Errc::kEmptyMatrix, "no predictions");
  return static_cast<double>(cm.Trace()) / static_cast<double>(cm.Total());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd Summarize(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace emovar

#endif  // EMOVAR_METRICS_HPP_
