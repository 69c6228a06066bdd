// tests/acceptance.cpp

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


// Acceptance checks.  Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "emovar/experiment.hpp"
#include "emovar/protocol.hpp"
#include "emovar/ssl.hpp"

namespace emovar {
namespace {

namespace fs = std::filesystem;

Matrix Gaussian(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

LabeledBatch Clustered(std::mt19937_64 &rng, Eigen::Index dim, int classes, int per_class) {
  LabeledBatch b;
  b.vectors.resize(static_cast<Eigen::Index>(classes) * per_class, dim);
  const Matrix means = Gaussian(rng, classes, dim, 3.0);
  const Matrix mix = Gaussian(rng, dim, dim);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k, ++row) {
      b.vectors.row(row) = means.row(c) + Gaussian(rng, 1, dim) * mix;
      b.labels.push_back(c);
    }
  return b;
}

Matrix NumericGradient(const std::function<double(const Matrix &)> &f, Matrix x) {
  const double step = 1e-5;
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double saved = x(i, j);
      x(i, j) = saved + step;
      const double up = f(x);
      x(i, j) = saved - step;
      const double down = f(x);
      x(i, j) = saved;
      g(i, j) = (up - down) / (2.0 * step);
    }
  return g;
}

double RelativeError(const Matrix &a, const Matrix &b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-8});
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

// --- 1 -----------------------------------------------------------------------

Outcome StreamingMatchesClassic() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 63);
    const int per_class = static_cast<int>(d) + 2 + static_cast<int>(rng() % 8);
    const LabeledBatch base = Clustered(rng, d, 4, per_class);
    const double beta = std::uniform_real_distribution<double>(0.05, 0.9)(rng);
    DeepWccn layer(d, beta);
    LabeledBatch all{Matrix(0, d), {}};
    const int batches = 3 + static_cast<int>(rng() % 6);
    for (int k = 0; k < batches; ++k) {
      LabeledBatch b;
      std::vector<Eigen::Index> order(static_cast<std::size_t>(base.size()));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      b.vectors.resize(base.size(), d);
      for (std::size_t i = 0; i < order.size(); ++i) {
        b.vectors.row(static_cast<Eigen::Index>(i)) = base.vectors.row(order[i]);
        b.labels.push_back(base.labels[static_cast<std::size_t>(order[i])]);
      }
      layer.ForwardTrain(b);
      Matrix stacked(all.vectors.rows() + b.vectors.rows(), d);
      stacked << all.vectors, b.vectors;
      all.vectors = stacked;
      all.labels.insert(all.labels.end(), b.labels.begin(), b.labels.end());
    }
    worst = std::max(worst, (layer.factor().a - ClassicWccn(all, beta).a).norm());
  }
  return {worst <= 1e-6, "max Frobenius gap " + Sci(worst)};
}

// --- 2 -----------------------------------------------------------------------

Outcome FactorResidual() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 64);
    const Matrix g = Gaussian(rng, d, d);
    const Matrix s = g * g.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
    const ProjectionFactor f = WccnFactor(s);
    const Matrix eye = Matrix::Identity(d, d);
    worst = std::max(worst, (f.a * f.a.transpose() * s - eye).norm() / eye.norm());
  }
  return {worst <= 1e-8, "max relative residual " + Sci(worst)};
}

// --- 3 -----------------------------------------------------------------------

Outcome Whitening() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 30);
    const LabeledBatch data = Clustered(rng, d, 4, static_cast<int>(3 * d));
    const ProjectionFactor f = ClassicWccn(data, 0.0);
    const LabeledBatch projected{ProjectRows(f, data.vectors), data.labels};
    worst = std::max(worst,
                     (BatchWithinClassCov(projected).averaged - Matrix::Identity(d, d)).norm());
  }
  return {worst <= 1e-8, "max deviation from identity " + Sci(worst)};
}

// --- 4 -----------------------------------------------------------------------

Outcome GradientAudit() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index d_z = 6, d_h = 5, classes = 4, batch = 9;
    HeadParameters params = HeadParameters::Initialized(d_z, d_h, classes, seed);
    params.dense_bias = Gaussian(rng, d_h, 1, 0.1);
    params.classifier_bias = Gaussian(rng, classes, 1, 0.1);
    DeepWccn layer(d_h, 0.2);
    layer.ForwardTrain(Clustered(rng, d_h, 3, 6));
    const Matrix factor = layer.factor().a;
    const double dropout = seed % 2 ? 0.0 : 0.3;
    std::bernoulli_distribution drop(dropout);
    Matrix mask = Matrix::Constant(batch, d_h, 1.0 / (1.0 - dropout));
    for (Eigen::Index i = 0; i < batch; ++i)
      for (Eigen::Index j = 0; j < d_h; ++j)
        if (drop(rng)) mask(i, j) = 0.0;
    const Matrix inputs = Gaussian(rng, batch, 2 * d_z);
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng() % classes));

    auto loss = [&](const HeadParameters &p, const Matrix &x) {
      return MeanCrossEntropy(EvaluateHead(p, factor, mask, x).logits, labels);
    };
    const HeadIntermediates it = EvaluateHead(params, factor, mask, inputs);
    if ((it.pre_relu.array() > 0).count() == 0 || (it.pre_relu.array() < 0).count() == 0)
      return {false, "seed " + std::to_string(seed) + " misses a ReLU region"};
    const HeadGradients g = BackwardHead(params, it, labels);
    auto check = [&](const Matrix &analytic, const std::function<void(HeadParameters &, const Matrix &)> &put,
                     const Matrix &at) {
      const Matrix numeric = NumericGradient(
          [&](const Matrix &m) {
            HeadParameters p = params;
            put(p, m);
            return loss(p, inputs);
          },
          at);
      worst = std::max(worst, RelativeError(analytic, numeric));
    };
    check(g.dense_weights, [](HeadParameters &p, const Matrix &m) { p.dense_weights = m; },
          params.dense_weights);
    check(g.dense_bias, [](HeadParameters &p, const Matrix &m) { p.dense_bias = m.col(0); },
          Matrix(params.dense_bias));
    check(g.classifier_weights,
          [](HeadParameters &p, const Matrix &m) { p.classifier_weights = m; },
          params.classifier_weights);
    check(g.classifier_bias,
          [](HeadParameters &p, const Matrix &m) { p.classifier_bias = m.col(0); },
          Matrix(params.classifier_bias));
    worst = std::max(worst, RelativeError(g.inputs, NumericGradient(
                                                        [&](const Matrix &x) { return loss(params, x); },
                                                        inputs)));

    // layer input gradient through the WCCN map
    const Matrix w = Gaussian(rng, 4, d_h);
    const Matrix up = Gaussian(rng, 4, d_h);
    auto layer_loss = [&](const Matrix &x) { return (layer.ForwardInfer(x).array() * up.array()).sum(); };
    worst = std::max(worst, RelativeError(layer.Backward(up), NumericGradient(layer_loss, w)));
  }
  return {worst <= 1e-4, "max relative error " + Sci(worst)};
}

// --- 5 -----------------------------------------------------------------------

Outcome ClosedForms() {
  double worst = 0.0;
  std::mt19937_64 rng(505);
  for (int k : {1, 3, 10, 100}) {
    ssl::ContextQuantizedPair pair;
    pair.context = Gaussian(rng, 8, 1).col(0);
    pair.true_quantized = pair.context;
    for (int i = 0; i < k; ++i) pair.distractors.push_back(2.0 * pair.context);
    worst = std::max(worst, std::abs(ssl::ContrastiveLoss(pair, 0.1) - std::log(k + 1.0)));
  }
  for (int v : {2, 8, 320}) {
    const Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(2, v, 1.0 / v);
    worst = std::max(worst, std::abs(ssl::DiversityLoss(probs) + std::log(double(v)) / v));
  }
  worst = std::max(worst, std::abs(CrossEntropy(Vector::Zero(4), 2) - std::log(4.0)));
  return {worst <= 1e-12, "max deviation " + Sci(worst)};
}

// --- 6 -----------------------------------------------------------------------

Outcome ProtocolIntegrity() {
  SynthSpec spec = SynthSpec::Default();
  spec.dim = 4;
  spec.frames_min = spec.frames_max = 2;
  spec.utterances_per_speaker_class = 1;
  const Corpus corpus = SynthesizeCorpus(spec);
  const auto data = ExperimentData::Prepare(corpus, PlanFolds(SpeakersByCorpus(corpus)), 0, 1);
  const std::vector<std::string> langs{"DE", "EN", "CH"};
  std::size_t checked = 0;
  for (const auto &[name, cf] : data.plan.corpora) {
    std::map<std::string, int> tested;
    for (int f = 1; f <= 5; ++f) {
      const auto &s = data.plan.Split(name, f);
      std::set<std::string> all;
      for (const auto *part : {&s.train, &s.valid, &s.test})
        for (const auto &x : *part)
          if (!all.insert(x).second) return {false, name + " speaker " + x + " in two sets"};
      if (all.size() != 10) return {false, name + " fold does not cover all speakers"};
      for (const auto &x : s.test) ++tested[x];
      const auto &prev = data.plan.Split(name, f == 1 ? 5 : f - 1);
      if (s.test != prev.valid) return {false, name + " rotation broken at fold " + std::to_string(f)};
    }
    for (const auto &[spk, n] : tested)
      if (n != 1) return {false, spk + " tested " + std::to_string(n) + " times"};
  }
  for (const auto &test : langs)
    for (const auto &a : langs)
      for (const auto &b : langs) {
        if (a >= b) continue;
        ProtocolSpec p;
        p.train_a = a;
        p.train_b = b;
        p.test = test;
        p.protocol = (test == a || test == b) ? Protocol::kWithin : Protocol::kCross;
        for (std::size_t inject : {std::size_t{0}, std::size_t{20}}) {
          if (inject && p.protocol == Protocol::kWithin) continue;
          p.inject = inject;
          for (int f = 1; f <= 5; ++f) {
            const FoldSets sets = BuildFoldSets(data, p, f);
            std::set<std::pair<std::string, std::string>> train, held;
            for (const auto &i : sets.train)
              train.emplace(corpus.records[i.record].corpus, corpus.records[i.record].speaker);
            for (const auto *s : {&sets.valid, &sets.test})
              for (const auto &i : *s)
                held.emplace(corpus.records[i.record].corpus, corpus.records[i.record].speaker);
            for (const auto &x : held)
              if (train.count(x)) return {false, "overlap on " + x.second};
            std::set<std::pair<std::string, std::string>> valid, tst;
            for (const auto &i : sets.valid)
              valid.emplace(corpus.records[i.record].corpus, corpus.records[i.record].speaker);
            for (const auto &i : sets.test)
              tst.emplace(corpus.records[i.record].corpus, corpus.records[i.record].speaker);
            for (const auto &x : tst)
              if (valid.count(x)) return {false, "valid/test overlap on " + x.second};
            ++checked;
          }
        }
      }
  return {true, std::to_string(checked) + " fold constructions checked"};
}

// --- 7-9 ---------------------------------------------------------------------

struct Pair {
  std::string a, b, test, preset;
};
const std::vector<Pair> kPairs = {
    {"DE", "CH", "EN", "DECH"}, {"DE", "EN", "CH", "DEEN"}, {"EN", "CH", "DE", "ENCH"}};

ProtocolSpec PairSpec(const Pair &p, std::uint64_t seed) {
  ProtocolSpec s;
  s.train_a = p.a;
  s.train_b = p.b;
  s.test = p.test;
  s.training = TrainingConfig::Preset(p.preset);
  s.training.seed = seed;
  return s;
}

Outcome Separability() {
  const Corpus corpus = SynthesizeCorpus(SynthSpec::Default());
  const auto data = ExperimentData::Prepare(corpus, PlanFolds(SpeakersByCorpus(corpus)),
                                            kDefaultTargetFrames, 1);
  std::ostringstream detail;
  bool pass = true;
  for (const auto &pair : kPairs) {
    ProtocolSpec spec = PairSpec(pair, 1);
    const auto cross = RunCrossLanguage(data, spec);
    spec.test = pair.a;
    const auto within = RunWithinLanguage(data, spec);
    int max_epochs = 0;
    for (const auto *r : {&cross, &within})
      for (const auto &f : r->folds) max_epochs = std::max(max_epochs, f.best_epoch);
    pass = pass && cross.ua.mean >= 0.90 && within.ua.mean >= 0.95 && max_epochs <= 30;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s->%s cross %.4f within(%s) %.4f; ", pair.preset.c_str(),
                  pair.test.c_str(), cross.ua.mean, pair.a.c_str(), within.ua.mean);
    detail << buf;
  }
  return {pass, detail.str()};
}

struct HighNuisance {
  Corpus corpus = SynthesizeCorpus(SynthSpec::HighNuisance());
  ExperimentData data = ExperimentData::Prepare(corpus, PlanFolds(SpeakersByCorpus(corpus)),
                                                kDefaultTargetFrames, 1);
};

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

double MeanCrossUa(const ExperimentData &data, bool use_wccn, std::size_t inject) {
  double sum = 0.0;
  int n = 0;
  for (std::uint64_t seed : kSeeds)
    for (const auto &pair : kPairs) {
      ProtocolSpec spec = PairSpec(pair, seed);
      spec.training.use_wccn = use_wccn;
      spec.inject = inject;
      sum += RunCrossLanguage(data, spec).ua.mean;
      ++n;
    }
  return sum / n;
}

Outcome Ablation(const HighNuisance &hn, double &on_out) {
  on_out = MeanCrossUa(hn.data, true, 0);
  const double off = MeanCrossUa(hn.data, false, 0);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "with %.4f without %.4f", on_out, off);
  return {on_out >= off, buf};
}

Outcome Injection(const HighNuisance &hn, double level0) {
  std::vector<double> ua{level0};
  for (std::size_t level : {30u, 80u, 150u}) ua.push_back(MeanCrossUa(hn.data, true, level));
  int inversions = 0;
  bool pass = true;
  for (std::size_t i = 1; i < ua.size(); ++i)
    if (ua[i] < ua[i - 1]) {
      ++inversions;
      if (ua[i - 1] - ua[i] > 0.01) pass = false;
    }
  pass = pass && inversions <= 1;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "0:%.4f 30:%.4f 80:%.4f 150:%.4f", ua[0], ua[1], ua[2], ua[3]);
  return {pass, buf};
}

// --- 10 ----------------------------------------------------------------------

std::string Slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome Determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("emovar_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  nlohmann::json cfg = {{"synth_spec", {{"preset", "default"}}},
                        {"protocol", "cross"},
                        {"train_languages", {"DE", "CH"}},
                        {"test_language", "EN"},
                        {"preset", "DECH"},
                        {"ablation", true},
                        {"injection_levels", {30}}};
  std::ofstream(root / "cfg.json") << cfg.dump(2);
  std::vector<std::string> reports;
  for (const char *run : {"a", "b"}) {
    const std::string cmd = "env -u EMOVAR_OUT \"" EMOVAR_CLI_PATH "\" --config \"" +
                            (root / "cfg.json").string() + "\" --out \"" + (root / run).string() +
                            "\" experiment 2> \"" + (root / (std::string(run) + ".log")).string() +
                            "\"";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      fs::remove_all(root);
      return {false, std::string("run ") + run + " failed"};
    }
    reports.push_back(Slurp(root / run / "report.csv") + Slurp(root / run / "report.md"));
  }
  fs::remove_all(root);
  const bool same = reports[0] == reports[1] && !reports[0].empty();
  return {same, same ? std::to_string(reports[0].size()) + " report bytes identical"
                     : "reports differ"};
}

// --- 11 ----------------------------------------------------------------------

Outcome MetricOracle() {
  ConfusionMatrix cm(4);
  const int sizes[] = {10, 10, 30, 50};
  const int correct[] = {10, 5, 15, 50};
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < sizes[c]; ++i) cm.Add(c, i < correct[c] ? c : (c + 1) % 4);
  const double ua = UnweightedAccuracy(cm), wa = WeightedAccuracy(cm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "UA %.17g WA %.17g", ua, wa);
  return {ua == 0.75 && wa == 0.80, buf};
}

}  // namespace
}  // namespace emovar

int main() {
  using namespace emovar;
  using Clock = std::chrono::steady_clock;
  int failures = 0;
  auto run = [&](int id, const char *name, double limit_s, const std::function<Outcome()> &fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool ok = o.pass && secs < limit_s;
    if (!ok) ++failures;
    std::printf("[%s] %2d %-28s %8.2fs (limit %.0fs)  %s\n", ok ? "PASS" : "FAIL", id, name,
                secs, limit_s, o.detail.c_str());
    std::fflush(stdout);
  };
  run(1, "streaming-vs-batch", 10, StreamingMatchesClassic);
  run(2, "factor-correctness", 5, FactorResidual);
  run(3, "whitening", 5, Whitening);
  run(4, "gradient-audit", 30, GradientAudit);
  run(5, "loss-closed-forms", 1, ClosedForms);
  run(6, "protocol-integrity", 1, ProtocolIntegrity);
  run(7, "synthetic-separability", 600, Separability);
  std::optional<HighNuisance> hn;
  double level0 = 0.0;
  run(8, "ablation-direction", 1800, [&] {
    hn.emplace();
    return Ablation(*hn, level0);
  });
  run(9, "injection-monotonicity", 2700, [&] {
    if (!hn) hn.emplace();
    if (level0 == 0.0) level0 = MeanCrossUa(hn->data, true, 0);
    return Injection(*hn, level0);
  });
  run(10, "determinism", 1200, Determinism);
  run(11, "metric-oracle", 1, MetricOracle);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
