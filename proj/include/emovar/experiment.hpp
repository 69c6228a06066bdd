// emovar/experiment.hpp

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

// Experiment configuration files and the run manifest written next to every
// set of outputs.
//
// A configuration is a JSON object:
//
//   {
//     "name": "dech-cross",
//     "synth_spec": { "preset": "high-nuisance" },   // or "synth_spec_path",
//                                                     // or "corpus": [paths]
//     "protocol": "cross",                           // or "within"
//     "train_languages": ["DE", "CH"],
//     "test_language": "EN",
//     "preset": "DECH",                              // optional
//     "training": { "max_epochs": 30 },              // optional overrides
//     "ablation": true,
//     "inject": 0,
//     "injection_levels": [30, 80, 150],
//     "seed": 1,
//     "fold": 1,                                     // used by train
//     "n_folds": 5,
//     "target_frames": 99,
//     "output_dir": "runs/dech"
//   }
//
// Relative paths resolve against the directory of the configuration file.

#ifndef EMOVAR_EXPERIMENT_HPP_
#define EMOVAR_EXPERIMENT_HPP_

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "emovar/binary_io.hpp"
#include "emovar/corpus.hpp"
#include "emovar/protocol.hpp"

namespace emovar {

inline constexpr std::string_view kEmovarVersion = "0.1.0";

struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<SynthSpec> synth_spec;
  std::vector<std::filesystem::path> corpus_paths;
  ProtocolSpec protocol;
  std::string preset;
  bool ablation = false;
  std::vector<std::size_t> injection_levels;
  std::uint64_t seed = 1;
  int fold = 1;
  int n_folds = 5;
  Eigen::Index target_frames = kDefaultTargetFrames;
  std::optional<std::uint64_t> fold_seed;
  std::filesystem::path output_dir = "emovar-out";
  std::string origin = "<config>";
  nlohmann::json source;
};

namespace detail {

[[noreturn]] inline void ConfigError(const std::string &origin, const std::string &field,
                                     const std::string &message) {
  throw Error(Errc::kInvalidConfig, origin + ": field '" + field + "': " + message);
}

template <typename T>
T ConfigField(const nlohmann::json &j, const std::string &origin, const std::string &field,
              T fallback) {
  if (!j.contains(field)) return fallback;
  const auto &v = j.at(field);
  auto natural = [](const nlohmann::json &e) {
    return e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() >= 0);
  };
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!natural(v)) ConfigError(origin, field, "must be a non-negative integer");
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!v.is_array()) ConfigError(origin, field, "must be a list");
    for (const auto &e : v)
      if (!natural(e)) ConfigError(origin, field, "entries must be non-negative integers");
  }
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception &) {
    ConfigError(origin, field, "has the wrong type");
  }
}

inline void ApplyTrainingOverrides(const nlohmann::json &j, const std::string &origin,
                                   TrainingConfig &t) {
  static const std::set<std::string> kKnown = {
      "learning_rate", "weight_decay", "dropout_rate", "beta",       "gamma",
      "batch_size",    "max_epochs",   "patience",     "hidden_dim", "use_wccn"};
  if (!j.is_object()) ConfigError(origin, "training", "must be an object");
  for (const auto &item : j.items())
    if (!kKnown.count(item.key())) ConfigError(origin, "training." + item.key(), "unknown field");
  auto set = [&](const char *field, auto &target) {
    if (!j.contains(field)) return;
    try {
      target = j.at(field).get<std::remove_reference_t<decltype(target)>>();
    } catch (const nlohmann::json::exception &) {
      ConfigError(origin, std::string("training.") + field, "has the wrong type");
    }
  };
  set("learning_rate", t.learning_rate);
  set("weight_decay", t.weight_decay);
  set("dropout_rate", t.dropout_rate);
  set("beta", t.beta);
  set("gamma", t.gamma);
  set("batch_size", t.batch_size);
  set("max_epochs", t.max_epochs);
  set("patience", t.patience);
  set("hidden_dim", t.hidden_dim);
  set("use_wccn", t.use_wccn);
}

}  // namespace detail

/// Parses and validates a configuration.  Errors name the origin and the
/// first offending field.
inline ExperimentConfig ParseExperimentConfig(const nlohmann::json &j,
                                              const std::filesystem::path &base_dir,
                                              const std::string &origin) {
  using detail::ConfigError;
  using detail::ConfigField;
  if (!j.is_object()) throw Error(Errc::kInvalidConfig, origin + ": not a JSON object");
  static const std::set<std::string> kKnown = {
      "name",    "synth_spec", "synth_spec_path", "corpus",           "protocol",
      "train_languages", "test_language", "preset", "training", "ablation",
      "inject",  "injection_levels", "seed", "fold", "n_folds", "target_frames",
      "fold_seed", "output_dir"};
  for (const auto &item : j.items())
    if (!kKnown.count(item.key())) ConfigError(origin, item.key(), "unknown field");

  ExperimentConfig c;
  c.origin = origin;
  c.source = j;
  c.name = ConfigField<std::string>(j, origin, "name", c.name);

  const int sources = static_cast<int>(j.contains("synth_spec")) +
                      static_cast<int>(j.contains("synth_spec_path")) +
                      static_cast<int>(j.contains("corpus"));
  if (sources != 1)
    ConfigError(origin, "corpus",
                "exactly one of 'corpus', 'synth_spec' or 'synth_spec_path' is required");
  auto resolve = [&](const std::string &p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    if (j.contains("synth_spec")) {
      c.synth_spec = ParseSynthSpec(j.at("synth_spec"));
    } else if (j.contains("synth_spec_path")) {
      const auto path = resolve(ConfigField<std::string>(j, origin, "synth_spec_path", ""));
      std::ifstream is(path);
      if (!is) ConfigError(origin, "synth_spec_path", "cannot open " + path.string());
      nlohmann::json spec;
      try {
        spec = nlohmann::json::parse(is);
      } catch (const nlohmann::json::exception &e) {
        ConfigError(origin, "synth_spec_path", path.string() + ": " + e.what());
      }
      c.synth_spec = ParseSynthSpec(spec);
    }
  } catch (const Error &e) {
    if (e.code() == Errc::kInvalidConfig) throw;
    ConfigError(origin, "synth_spec", e.what());
  }
  if (j.contains("corpus")) {
    const auto &v = j.at("corpus");
    if (v.is_string()) {
      c.corpus_paths.push_back(resolve(v.get<std::string>()));
    } else if (v.is_array() && !v.empty()) {
      for (const auto &p : v) {
        if (!p.is_string()) ConfigError(origin, "corpus", "entries must be paths");
        c.corpus_paths.push_back(resolve(p.get<std::string>()));
      }
    } else {
      ConfigError(origin, "corpus", "must be a path or a non-empty list of paths");
    }
  }

  const auto protocol = ConfigField<std::string>(j, origin, "protocol", "cross");
  if (protocol == "cross") {
    c.protocol.protocol = Protocol::kCross;
  } else if (protocol == "within") {
    c.protocol.protocol = Protocol::kWithin;
  } else {
    ConfigError(origin, "protocol", "must be 'within' or 'cross'");
  }
  const auto langs =
      ConfigField<std::vector<std::string>>(j, origin, "train_languages", {});
  if (langs.size() != 2 || langs[0] == langs[1])
    ConfigError(origin, "train_languages", "needs two different languages");
  c.protocol.train_a = langs[0];
  c.protocol.train_b = langs[1];
  c.protocol.test = ConfigField<std::string>(j, origin, "test_language", "");
  if (c.protocol.test.empty()) ConfigError(origin, "test_language", "is required");

  c.preset = ConfigField<std::string>(j, origin, "preset", "");
  if (!c.preset.empty()) {
    try {
      c.protocol.training = TrainingConfig::Preset(c.preset);
    } catch (const Error &) {
      ConfigError(origin, "preset", "must be DECH, DEEN or ENCH");
    }
  }
  if (j.contains("training")) detail::ApplyTrainingOverrides(j.at("training"), origin, c.protocol.training);

  c.ablation = ConfigField<bool>(j, origin, "ablation", false);
  c.protocol.inject = ConfigField<std::size_t>(j, origin, "inject", 0);
  c.injection_levels =
      ConfigField<std::vector<std::size_t>>(j, origin, "injection_levels", {});
  c.seed = ConfigField<std::uint64_t>(j, origin, "seed", c.seed);
  c.protocol.training.seed = c.seed;
  c.n_folds = ConfigField<int>(j, origin, "n_folds", c.n_folds);
  if (c.n_folds < 3) ConfigError(origin, "n_folds", "must be >= 3");
  c.fold = ConfigField<int>(j, origin, "fold", c.fold);
  if (c.fold < 1 || c.fold > c.n_folds) ConfigError(origin, "fold", "must lie in [1, n_folds]");
  c.target_frames = ConfigField<Eigen::Index>(j, origin, "target_frames", c.target_frames);
  if (c.target_frames < 0) ConfigError(origin, "target_frames", "must be >= 0");
  if (j.contains("fold_seed"))
    c.fold_seed = ConfigField<std::uint64_t>(j, origin, "fold_seed", 0);
  c.output_dir = resolve(ConfigField<std::string>(j, origin, "output_dir", "emovar-out"));

  try {
    c.protocol.training.Validate();
  } catch (const Error &e) {
    ConfigError(origin, "training", e.what());
  }
  try {
    ValidateSpec(c.protocol);
  } catch (const Error &e) {
    ConfigError(origin, "test_language", e.what());
  }
  if (c.protocol.protocol == Protocol::kWithin && !c.injection_levels.empty())
    ConfigError(origin, "injection_levels", "only applies to the cross protocol");
  return c;
}

inline ExperimentConfig LoadExperimentConfig(const std::filesystem::path &path) {
  std::ifstream is(path);
  Require(static_cast<bool>(is), Errc::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw Error(Errc::kInvalidConfig, path.string() + ": " + e.what());
  }
  return ParseExperimentConfig(j, path.parent_path(), path.string());
}

/// Synthesizes the configured corpus or reads and concatenates the listed
/// manifests.
inline Corpus LoadExperimentCorpus(const ExperimentConfig &c) {
  if (c.synth_spec) return SynthesizeCorpus(*c.synth_spec);
  Corpus merged;
  std::set<std::string> ids;
  for (const auto &path : c.corpus_paths) {
    Require(std::filesystem::exists(path), Errc::kIo, "corpus not found: " + path.string());
    Corpus part = ReadCorpus(path);
    if (merged.records.empty()) merged.dim = part.dim;
    Require(part.dim == merged.dim, Errc::kDimensionMismatch,
            path.string() + ": embedding dimension differs from earlier corpora");
    for (auto &r : part.records) {
      Require(ids.insert(r.id).second, Errc::kDuplicateId, path.string() + ": duplicate id " + r.id);
      merged.records.push_back(std::move(r));
    }
  }
  return merged;
}

inline FoldPlan ExperimentFoldPlan(const ExperimentConfig &c, const Corpus &corpus) {
  return PlanFolds(SpeakersByCorpus(corpus), c.n_folds, c.fold_seed);
}

/// The main run, its ablation twin and the injection sweep points, in
/// report order.
inline std::vector<ProtocolSpec> ExperimentRuns(const ExperimentConfig &c) {
  std::vector<ProtocolSpec> runs{c.protocol};
  if (c.ablation) {
    ProtocolSpec twin = c.protocol;
    twin.training.use_wccn = !twin.training.use_wccn;
    runs.push_back(twin);
  }
  std::vector<std::size_t> levels = c.injection_levels;
  if (!levels.empty() && std::find(levels.begin(), levels.end(), 0) == levels.end())
    levels.insert(levels.begin(), 0);
  for (std::size_t level : levels) {
    if (level == c.protocol.inject) continue;
    ProtocolSpec point = c.protocol;
    point.inject = level;
    runs.push_back(point);
  }
  return runs;
}

inline std::string HashJson(const nlohmann::json &j) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(SubSeed(0, j.dump())));
  return buf;
}

/// Provenance record for one command invocation.  Contains no clock values
/// so that repeated runs produce identical files.
inline nlohmann::ordered_json RunManifest(const std::string &command,
                                          const nlohmann::json &config, std::uint64_t seed,
                                          const std::vector<std::string> &outputs) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["config_hash"] = HashJson(config);
  m["seed"] = seed;
  m["config"] = config;
  m["outputs"] = outputs;
  m["versions"] = {
      {"emovar", std::string(kEmovarVersion)},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                    "." + std::to_string(EIGEN_MINOR_VERSION)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__clang__)
      {"compiler", "clang " __clang_version__},
#elif defined(__GNUC__)
      {"compiler", "gcc " __VERSION__},
#endif
  };
  return m;
}

inline void WriteJsonFile(const std::filesystem::path &path, const nlohmann::ordered_json &j) {
  io::AtomicWrite(path, [&](std::ostream &os) { os << j.dump(2) << "\n"; });
}

}  // namespace emovar

#endif  // EMOVAR_EXPERIMENT_HPP_
