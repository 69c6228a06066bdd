// emovar/protocol.hpp

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

// Cross-validated experiment protocols.
//
//   within: train on two languages, test on held-out speakers of one of them.
//   cross:  train on two languages, test on held-out speakers of a third
//           (leave-one-language-out).
//
// Every fold merges the two training languages with repetition balancing,
// validates on the union of their validation speakers, and reports UA/WA on
// the test speakers of the fold.  Ablation switches the Deep-WCCN layer off;
// injection adds sampled training-speaker utterances of the test language.

#ifndef EMOVAR_PROTOCOL_HPP_
#define EMOVAR_PROTOCOL_HPP_

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "emovar/corpus.hpp"
#include "emovar/metrics.hpp"
#include "emovar/train.hpp"

namespace emovar {

enum class Protocol { kWithin, kCross };

inline const char *ProtocolName(Protocol p) { return p == Protocol::kWithin ? "within" : "cross"; }

struct ProtocolSpec {
  Protocol protocol = Protocol::kCross;
  std::string train_a;  // language tags
  std::string train_b;
  std::string test;
  TrainingConfig training;
  std::size_t inject = 0;  // cross only

  /// "cross", "cross+no-wccn", "cross+inject30", ...
  std::string Label() const {
    std::string s = ProtocolName(protocol);
    if (!training.use_wccn) s += "+no-wccn";
    if (inject > 0) s += "+inject" + std::to_string(inject);
    return s;
  }
  std::string TrainLangs() const { return train_a + "+" + train_b; }
};

/// Every setting that influences a protocol run, as printable fields.
inline std::map<std::string, std::string> ConfigFields(const ProtocolSpec &spec) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  const auto &t = spec.training;
  return {{"protocol", ProtocolName(spec.protocol)},
          {"train_langs", spec.TrainLangs()},
          {"test_lang", spec.test},
          {"learning_rate", num(t.learning_rate)},
          {"weight_decay", num(t.weight_decay)},
          {"dropout_rate", num(t.dropout_rate)},
          {"beta", num(t.beta)},
          {"gamma", num(t.gamma)},
          {"batch_size", std::to_string(t.batch_size)},
          {"max_epochs", std::to_string(t.max_epochs)},
          {"patience", std::to_string(t.patience)},
          {"hidden_dim", std::to_string(t.hidden_dim)},
          {"use_wccn", t.use_wccn ? "1" : "0"},
          {"seed", std::to_string(t.seed)},
          {"inject", std::to_string(spec.inject)}};
}

inline std::string Fingerprint(const std::map<std::string, std::string> &fields) {
  std::string joined;
  for (const auto &[k, v] : fields) joined += k + "=" + v + ";";
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(SubSeed(0, joined)));
  return buf;
}

struct FoldResult {
  int fold = 0;
  EvalResult test;
  int best_epoch = 0;
  double best_valid_ua = 0.0;
};

struct EvaluationReport {
  std::string protocol;
  std::string train_langs;
  std::string test_lang;
  std::string fingerprint;
  std::vector<FoldResult> folds;
  MeanStd ua;
  MeanStd wa;
};

/// Corpus, pooled features and fold plan shared by every run of an
/// experiment.  Read-only while protocols run.
struct ExperimentData {
  const Corpus *corpus = nullptr;
  PooledData pooled;
  FoldPlan plan;
  std::map<std::string, std::string> corpus_of_language;

  static ExperimentData Prepare(const Corpus &corpus, const FoldPlan &plan,
                                Eigen::Index target_frames, std::uint64_t crop_seed) {
    ExperimentData d;
    d.corpus = &corpus;
    d.pooled = PoolCorpus(corpus, target_frames, crop_seed);
    d.plan = plan;
    for (const auto &r : corpus.records) {
      auto [it, inserted] = d.corpus_of_language.emplace(r.language, r.corpus);
      Require(inserted || it->second == r.corpus, Errc::kInvalidConfig,
              "language " + r.language + " spans several corpora");
    }
    return d;
  }

  const std::string &CorpusOf(const std::string &language) const {
    auto it = corpus_of_language.find(language);
    Require(it != corpus_of_language.end(), Errc::kInvalidConfig,
            "no corpus for language '" + language + "'");
    return it->second;
  }
};

struct FoldSets {
  Subset train;
  Subset valid;
  Subset test;
};

inline void ValidateSpec(const ProtocolSpec &spec) {
  Require(spec.train_a != spec.train_b, Errc::kInvalidConfig,
          "training languages must differ");
  const bool in_pair = spec.test == spec.train_a || spec.test == spec.train_b;
  if (spec.protocol == Protocol::kWithin) {
    Require(in_pair, Errc::kLanguageNotInTrainingPair,
            spec.test + " is not one of " + spec.TrainLangs());
    Require(spec.inject == 0, Errc::kInvalidConfig,
            "injection only applies to the cross-language protocol");
  } else {
    Require(!in_pair, Errc::kLanguageOverlap,
            spec.test + " is part of the training pair " + spec.TrainLangs());
  }
}

/// Throws if any training instance belongs to a validation or test speaker.
inline void CheckSpeakerDisjoint(const Corpus &corpus, const FoldSets &sets) {
  std::set<std::pair<std::string, std::string>> held_out;
  for (const Subset *s : {&sets.valid, &sets.test})
    for (const auto &inst : *s) {
      const auto &r = corpus.records[inst.record];
      held_out.emplace(r.corpus, r.speaker);
    }
  for (const auto &inst : sets.train) {
    const auto &r = corpus.records[inst.record];
    Require(!held_out.count({r.corpus, r.speaker}), Errc::kInvalidConfig,
            "speaker " + r.speaker + " of " + r.corpus + " is both trained on and held out");
  }
}

inline FoldSets BuildFoldSets(const ExperimentData &data, const ProtocolSpec &spec, int fold) {
  ValidateSpec(spec);
  const Corpus &corpus = *data.corpus;
  const std::string &ca = data.CorpusOf(spec.train_a);
  const std::string &cb = data.CorpusOf(spec.train_b);
  const std::string &ct = data.CorpusOf(spec.test);
  FoldSets sets;
  sets.train = BalanceMerge(SelectRecords(corpus, ca, data.plan.Split(ca, fold).train),
                            SelectRecords(corpus, cb, data.plan.Split(cb, fold).train));
  sets.valid = SelectRecords(corpus, ca, data.plan.Split(ca, fold).valid);
  const Subset vb = SelectRecords(corpus, cb, data.plan.Split(cb, fold).valid);
  sets.valid.insert(sets.valid.end(), vb.begin(), vb.end());
  sets.test = SelectRecords(corpus, ct, data.plan.Split(ct, fold).test);
  if (spec.inject > 0) {
    const Subset pool = SelectRecords(corpus, ct, data.plan.Split(ct, fold).train);
    sets.train = InjectTarget(sets.train, pool, spec.inject,
                              SubSeed(spec.training.seed, "fold" + std::to_string(fold)));
  }
  CheckSpeakerDisjoint(corpus, sets);
  return sets;
}

inline TrainingConfig FoldTrainingConfig(const TrainingConfig &base, int fold) {
  TrainingConfig c = base;
  c.seed = SubSeed(base.seed, "fold" + std::to_string(fold));
  return c;
}

/// Trains the model of one fold; RunFold and single-fold training share this
/// so that both produce the same model.
inline TrainResult TrainFold(const ExperimentData &data, const ProtocolSpec &spec, int fold,
                             const std::function<void(const EpochLog &)> &on_epoch = {}) {
  const FoldSets sets = BuildFoldSets(data, spec, fold);
  const TrainingConfig cfg = FoldTrainingConfig(spec.training, fold);
  return Train(MakeModel(data.pooled.input_dim(), cfg), data.pooled, sets.train, sets.valid,
               cfg, on_epoch);
}

inline FoldResult RunFold(const ExperimentData &data, const ProtocolSpec &spec, int fold) {
  const TrainResult trained = TrainFold(data, spec, fold);
  FoldResult r;
  r.fold = fold;
  r.test = Evaluate(trained.best, data.pooled, BuildFoldSets(data, spec, fold).test);
  r.best_epoch = trained.best_epoch;
  r.best_valid_ua = trained.best_valid_ua;
  return r;
}

using FoldCallback = std::function<void(const ProtocolSpec &, const FoldResult &)>;

/// All folds of one protocol; folds are independent and run on up to `jobs`
/// threads.  Results do not depend on the thread count.
inline EvaluationReport RunProtocol(const ExperimentData &data, const ProtocolSpec &spec,
                                    int jobs = 1, const FoldCallback &on_fold = {}) {
  ValidateSpec(spec);
  const int n = data.plan.n_folds;
  std::vector<FoldResult> results(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::mutex callback_mutex;
  auto work = [&](int fold) {
    try {
      results[static_cast<std::size_t>(fold - 1)] = RunFold(data, spec, fold);
      if (on_fold) {
        std::lock_guard<std::mutex> lock(callback_mutex);
        on_fold(spec, results[static_cast<std::size_t>(fold - 1)]);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(fold - 1)] = std::current_exception();
    }
  };
  const int workers = std::clamp(jobs, 1, n);
  if (workers == 1) {
    for (int f = 1; f <= n; ++f) work(f);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int f = w + 1; f <= n; f += workers) work(f);
      });
    for (auto &t : pool) t.join();
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);

  EvaluationReport report;
  report.protocol = spec.Label();
  report.train_langs = spec.TrainLangs();
  report.test_lang = spec.test;
  report.fingerprint = Fingerprint(ConfigFields(spec));
  report.folds = std::move(results);
  std::vector<double> uas, was;
  for (const auto &f : report.folds) {
    uas.push_back(f.test.ua);
    was.push_back(f.test.wa);
  }
  report.ua = Summarize(uas);
  report.wa = Summarize(was);
  return report;
}

inline EvaluationReport RunWithinLanguage(const ExperimentData &data, ProtocolSpec spec,
                                          int jobs = 1, const FoldCallback &on_fold = {}) {
  spec.protocol = Protocol::kWithin;
  return RunProtocol(data, spec, jobs, on_fold);
}

inline EvaluationReport RunCrossLanguage(const ExperimentData &data, ProtocolSpec spec,
                                         int jobs = 1, const FoldCallback &on_fold = {}) {
  spec.protocol = Protocol::kCross;
  return RunProtocol(data, spec, jobs, on_fold);
}

/// For every grid point: the run with Deep-WCCN, then the same run with the
/// layer replaced by the identity.
inline std::vector<EvaluationReport> AblationSweep(const ExperimentData &data,
                                                   const std::vector<ProtocolSpec> &grid,
                                                   int jobs = 1,
                                                   const FoldCallback &on_fold = {}) {
  std::vector<EvaluationReport> out;
  for (ProtocolSpec spec : grid) {
    spec.training.use_wccn = true;
    out.push_back(RunProtocol(data, spec, jobs, on_fold));
    spec.training.use_wccn = false;
    out.push_back(RunProtocol(data, spec, jobs, on_fold));
  }
  return out;
}

/// One cross-language report per injection level; level 0 is always
/// included first.
inline std::vector<EvaluationReport> InjectionSweep(const ExperimentData &data,
                                                    std::vector<std::size_t> levels,
                                                    ProtocolSpec spec, int jobs = 1,
                                                    const FoldCallback &on_fold = {}) {
  spec.protocol = Protocol::kCross;
  if (std::find(levels.begin(), levels.end(), std::size_t{0}) == levels.end())
    levels.insert(levels.begin(), 0);
  std::vector<EvaluationReport> out;
  for (std::size_t level : levels) {
    spec.inject = level;
    out.push_back(RunProtocol(data, spec, jobs, on_fold));
  }
  return out;
}

// --- report emission ---------------------------------------------------------

inline void WriteReportCsv(std::ostream &os, const std::vector<EvaluationReport> &reports) {
  os << "protocol,train_langs,test_lang,fold,UA,WA\n";
  char buf[256];
  for (const auto &r : reports) {
    for (const auto &f : r.folds) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%.6f,%.6f\n", r.protocol.c_str(),
                    r.train_langs.c_str(), r.test_lang.c_str(), f.fold, f.test.ua, f.test.wa);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,mean,%.6f,%.6f\n%s,%s,%s,std,%.6f,%.6f\n",
                  r.protocol.c_str(), r.train_langs.c_str(), r.test_lang.c_str(), r.ua.mean,
                  r.wa.mean, r.protocol.c_str(), r.train_langs.c_str(), r.test_lang.c_str(),
                  r.ua.std, r.wa.std);
    os << buf;
  }
}

inline void WriteReportMarkdown(std::ostream &os, const std::vector<EvaluationReport> &reports) {
  os << "| protocol | train_langs | test_lang | fold | UA | WA |\n"
     << "|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto &r : reports) {
    for (const auto &f : r.folds) {
      std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %d | %.4f | %.4f |\n",
                    r.protocol.c_str(), r.train_langs.c_str(), r.test_lang.c_str(), f.fold,
                    f.test.ua, f.test.wa);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "| %s | %s | %s | **mean ± std** | %.4f ± %.4f | %.4f ± %.4f |\n",
                  r.protocol.c_str(), r.train_langs.c_str(), r.test_lang.c_str(), r.ua.mean,
                  r.ua.std, r.wa.mean, r.wa.std);
    os << buf;
  }
}

}  // namespace emovar

#endif  // EMOVAR_PROTOCOL_HPP_
