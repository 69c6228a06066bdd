// tools/emovar.cpp

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

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emovar/experiment.hpp"

namespace fs = std::filesystem;
using namespace emovar;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool no_wccn = false;
  std::optional<std::size_t> inject;
};

fs::path OutputDir(const GlobalOptions &g, const std::optional<fs::path> &from_config) {
  if (const char *env = std::getenv("EMOVAR_OUT"); env && *env) return env;
  if (!g.out.empty()) return g.out;
  if (from_config) return *from_config;
  return "emovar-out";
}

void Progress(const std::string &line) { std::cerr << line << std::endl; }

ExperimentConfig LoadConfig(const GlobalOptions &g) {
  Require(!g.config.empty(), Errc::kInvalidConfig, "--config is required");
  ExperimentConfig c = LoadExperimentConfig(g.config);
  if (g.seed) {
    c.seed = *g.seed;
    c.protocol.training.seed = *g.seed;
  }
  if (g.no_wccn) c.protocol.training.use_wccn = false;
  if (g.inject) c.protocol.inject = *g.inject;
  ValidateSpec(c.protocol);
  return c;
}

nlohmann::json EffectiveConfig(const ExperimentConfig &c, const GlobalOptions &g) {
  nlohmann::json j = c.source;
  nlohmann::json flags = nlohmann::json::object();
  if (g.seed) flags["seed"] = *g.seed;
  if (g.no_wccn) flags["no_wccn"] = true;
  if (g.inject) flags["inject"] = *g.inject;
  j["flags"] = flags;
  return j;
}

ExperimentData PrepareData(const ExperimentConfig &c, const Corpus &corpus) {
  Progress("pooling " + std::to_string(corpus.records.size()) + " utterances");
  return ExperimentData::Prepare(corpus, ExperimentFoldPlan(c, corpus), c.target_frames,
                                 c.seed);
}

int CmdGen(const GlobalOptions &g, const std::string &spec_path) {
  SynthSpec spec = SynthSpec::Default();
  nlohmann::json source = nlohmann::json::object();
  const std::string path = !spec_path.empty() ? spec_path : g.config;
  if (!path.empty()) {
    std::ifstream is(path);
    Require(static_cast<bool>(is), Errc::kIo, "cannot open synth spec " + path);
    try {
      source = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception &e) {
      throw Error(Errc::kInvalidSpec, path + ": " + e.what());
    }
    try {
      spec = ParseSynthSpec(source);
    } catch (const Error &e) {
      throw Error(Errc::kInvalidSpec, path + ": " + e.what());
    }
  }
  if (g.seed) spec.seed = *g.seed;
  const fs::path out = OutputDir(g, std::nullopt);
  Progress("synthesizing corpus");
  const Corpus corpus = SynthesizeCorpus(spec);
  const fs::path manifest = WriteCorpus(corpus, out);
  nlohmann::json effective = spec;
  WriteJsonFile(out / "run_manifest.json",
                RunManifest("gen", effective, spec.seed, {manifest.filename().string()}));
  Progress("wrote " + std::to_string(corpus.records.size()) + " records to " + manifest.string());
  return 0;
}

int CmdSplit(const GlobalOptions &g, const std::string &corpus_path, const std::string &out_path,
             int n_folds) {
  Require(fs::exists(corpus_path), Errc::kIo, "corpus not found: " + corpus_path);
  const Corpus corpus = ReadCorpus(corpus_path);
  const FoldPlan plan = PlanFolds(SpeakersByCorpus(corpus), n_folds, g.seed);
  const fs::path out_dir = OutputDir(g, std::nullopt);
  const fs::path target = out_path.empty() ? out_dir / "folds.json" : fs::path(out_path);
  WriteJsonFile(target, FoldPlanToJson(plan));
  nlohmann::json cfg = {{"corpus", corpus_path}, {"n_folds", n_folds}};
  if (g.seed) cfg["fold_seed"] = *g.seed;
  WriteJsonFile(target.parent_path().empty() ? "run_manifest.json"
                                             : target.parent_path() / "run_manifest.json",
                RunManifest("split", cfg, g.seed.value_or(0), {target.filename().string()}));
  Progress("wrote fold plan to " + target.string());
  return 0;
}

int CmdTrain(const GlobalOptions &g, std::optional<int> fold_flag) {
  ExperimentConfig c = LoadConfig(g);
  if (fold_flag) {
    Require(*fold_flag >= 1 && *fold_flag <= c.n_folds, Errc::kInvalidConfig,
            "--fold must lie in [1, " + std::to_string(c.n_folds) + "]");
    c.fold = *fold_flag;
  }
  const fs::path out = OutputDir(g, c.output_dir);
  const Corpus corpus = LoadExperimentCorpus(c);
  const ExperimentData data = PrepareData(c, corpus);
  const TrainResult r = TrainFold(data, c.protocol, c.fold, [&](const EpochLog &e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %d loss %.4f valid UA %.4f WA %.4f", e.epoch,
                  e.train_loss, e.valid_ua, e.valid_wa);
    Progress(buf);
  });
  const std::string dir = "fold" + std::to_string(c.fold);
  io::AtomicWrite(out / dir / "model.emohead", [&](std::ostream &os) { r.best.Save(os); }, true);
  io::AtomicWrite(out / dir / "train_log.csv",
                  [&](std::ostream &os) { WriteTrainingLog(os, r.log); });
  nlohmann::json cfg = EffectiveConfig(c, g);
  cfg["flags"]["fold"] = c.fold;
  WriteJsonFile(out / dir / "run_manifest.json",
                RunManifest("train", cfg, c.seed, {"model.emohead", "train_log.csv"}));
  Progress("best epoch " + std::to_string(r.best_epoch) + ", model in " + (out / dir).string());
  return 0;
}

int CmdEval(const GlobalOptions &g, const std::string &model_path, const std::string &corpus_path,
            int fold, const std::string &language, int n_folds, Eigen::Index target_frames) {
  Require(fs::exists(model_path), Errc::kIo, "model not found: " + model_path);
  Require(fs::exists(corpus_path), Errc::kIo, "corpus not found: " + corpus_path);
  std::ifstream is(model_path, std::ios::binary);
  const EmotionHead model = EmotionHead::Load(is);
  const Corpus corpus = ReadCorpus(corpus_path);
  const std::uint64_t seed = g.seed.value_or(1);
  const ExperimentData data = ExperimentData::Prepare(
      corpus, PlanFolds(SpeakersByCorpus(corpus), n_folds), target_frames, seed);
  const std::string &corpus_name = data.CorpusOf(language);
  const Subset test = SelectRecords(corpus, corpus_name, data.plan.Split(corpus_name, fold).test);
  const EvalResult r = Evaluate(model, data.pooled, test);
  const fs::path out = OutputDir(g, std::nullopt);
  const std::string name = "eval_" + language + "_fold" + std::to_string(fold) + ".csv";
  io::AtomicWrite(out / name, [&](std::ostream &os) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%zu\n", language.c_str(), fold, r.ua, r.wa,
                  test.size());
    os << "test_lang,fold,UA,WA,n\n" << buf;
  });
  nlohmann::json cfg = {{"model", model_path},   {"corpus", corpus_path},
                        {"fold", fold},          {"language", language},
                        {"n_folds", n_folds},    {"target_frames", target_frames}};
  WriteJsonFile(out / "run_manifest.json", RunManifest("eval", cfg, seed, {name}));
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s fold %d: UA %.4f WA %.4f", language.c_str(), fold, r.ua,
                r.wa);
  Progress(buf);
  return 0;
}

int CmdExperiment(const GlobalOptions &g) {
  const ExperimentConfig c = LoadConfig(g);
  const fs::path out = OutputDir(g, c.output_dir);
  const Corpus corpus = LoadExperimentCorpus(c);
  const ExperimentData data = PrepareData(c, corpus);
  std::vector<EvaluationReport> reports;
  for (const ProtocolSpec &spec : ExperimentRuns(c)) {
    Progress("running " + spec.Label() + " " + spec.TrainLangs() + " -> " + spec.test);
    reports.push_back(RunProtocol(data, spec, g.jobs, [](const ProtocolSpec &s, const FoldResult &f) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %s fold %d: UA %.4f WA %.4f (best epoch %d)",
                    s.Label().c_str(), f.fold, f.test.ua, f.test.wa, f.best_epoch);
      Progress(buf);
    }));
  }
  io::AtomicWrite(out / "report.csv", [&](std::ostream &os) { WriteReportCsv(os, reports); });
  io::AtomicWrite(out / "report.md",
                  [&](std::ostream &os) { WriteReportMarkdown(os, reports); });
  nlohmann::json cfg = EffectiveConfig(c, g);
  nlohmann::ordered_json manifest =
      RunManifest("experiment", cfg, c.seed, {"report.csv", "report.md"});
  nlohmann::ordered_json fingerprints = nlohmann::ordered_json::object();
  for (const auto &r : reports) fingerprints[r.protocol] = r.fingerprint;
  manifest["run_fingerprints"] = fingerprints;
  WriteJsonFile(out / "run_manifest.json", manifest);
  for (const auto &r : reports) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%s %s -> %s: UA %.4f +- %.4f, WA %.4f +- %.4f",
                  r.protocol.c_str(), r.train_langs.c_str(), r.test_lang.c_str(), r.ua.mean,
                  r.ua.std, r.wa.mean, r.wa.std);
    Progress(buf);
  }
  return 0;
}

/// Concatenates every report*.csv below the directory (sorted by path) into
/// one markdown table.
int CmdReport(const GlobalOptions &g, const std::string &report_dir) {
  Require(fs::is_directory(report_dir), Errc::kIo, "not a directory: " + report_dir);
  std::vector<fs::path> files;
  for (const auto &entry : fs::recursive_directory_iterator(report_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("report", 0) == 0 &&
        entry.path().extension() == ".csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Require(!files.empty(), Errc::kIo, "no report CSV files under " + report_dir);
  const std::string header = "protocol,train_langs,test_lang,fold,UA,WA";
  std::vector<std::pair<std::string, std::string>> rows;  // source, csv row
  for (const auto &f : files) {
    std::ifstream is(f);
    std::string line;
    Require(std::getline(is, line) && line == header, Errc::kMalformedManifest,
            f.string() + ":1: unexpected header");
    while (std::getline(is, line))
      if (!line.empty()) rows.emplace_back(fs::relative(f, report_dir).string(), line);
  }
  const fs::path out = g.out.empty() && !std::getenv("EMOVAR_OUT") ? fs::path(report_dir)
                                                                  : OutputDir(g, std::nullopt);
  io::AtomicWrite(out / "summary.md", [&](std::ostream &os) {
    os << "| source | protocol | train_langs | test_lang | fold | UA | WA |\n"
       << "|---|---|---|---|---|---|---|\n";
    for (const auto &[source, row] : rows) {
      os << "| " << source;
      std::stringstream ss(row);
      std::string cell;
      while (std::getline(ss, cell, ',')) os << " | " << cell;
      os << " |\n";
    }
  });
  Progress("merged " + std::to_string(files.size()) + " report(s) into " +
           (out / "summary.md").string());
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Cross-language emotion recognition experiments with Deep-WCCN"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment configuration (JSON)");
  app.add_option("--out", g.out, "Output directory (EMOVAR_OUT overrides)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--jobs", g.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);
  app.add_flag("--no-wccn", g.no_wccn, "Replace the Deep-WCCN layer by the identity");
  app.add_option("--inject", g.inject, "Target-language utterances added to training");

  std::string spec_path;
  auto *gen = app.add_subcommand("gen", "Synthesize a corpus");
  gen->add_option("spec", spec_path, "SynthSpec JSON (default spec when omitted)");

  std::string corpus_path, out_path;
  int n_folds = 5;
  auto *split = app.add_subcommand("split", "Write the speaker fold plan of a corpus");
  split->add_option("corpus", corpus_path, "Corpus manifest")->required();
  split->add_option("out_path", out_path, "Fold plan file (default <out>/folds.json)");
  split->add_option("--folds", n_folds, "Number of folds");

  std::optional<int> train_fold;
  auto *train = app.add_subcommand("train", "Train one fold and write model and log");
  train->add_option("--fold", train_fold, "Fold to train (default from config)");

  std::string model_path, language;
  int eval_fold = 1;
  Eigen::Index target_frames = kDefaultTargetFrames;
  auto *eval = app.add_subcommand("eval", "Evaluate a model on a fold's test speakers");
  eval->add_option("model", model_path, "Model file")->required();
  eval->add_option("corpus", corpus_path, "Corpus manifest")->required();
  eval->add_option("--fold", eval_fold, "Fold")->required();
  eval->add_option("--language", language, "Test language")->required();
  eval->add_option("--folds", n_folds, "Number of folds");
  eval->add_option("--target-frames", target_frames, "Frames per utterance (0 keeps all)");

  auto *experiment = app.add_subcommand("experiment", "Run the configured protocol and sweeps");

  std::string report_dir;
  auto *report = app.add_subcommand("report", "Merge report CSVs into a markdown summary");
  report->add_option("dir", report_dir, "Directory holding report CSVs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return CmdGen(g, spec_path);
    if (split->parsed()) return CmdSplit(g, corpus_path, out_path, n_folds);
    if (train->parsed()) return CmdTrain(g, train_fold);
    if (eval->parsed())
      return CmdEval(g, model_path, corpus_path, eval_fold, language, n_folds, target_frames);
    if (experiment->parsed()) return CmdExperiment(g);
    if (report->parsed()) return CmdReport(g, report_dir);
  } catch (const std::exception &e) {
    std::cerr << "emovar: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
