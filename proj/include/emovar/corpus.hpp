// emovar/corpus.hpp

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

// Embedding corpora: the record model, the manifest + payload file format,
// frame-length normalisation, the synthetic generator, speaker-disjoint fold
// planning, and the language-balancing / target-injection set builders.
//
// On disk a corpus is a JSON-lines manifest (one record per line with fields
// id, language, corpus, speaker, label, path, frames, dim) plus one payload
// file per record holding frames x dim little-endian float32 values in
// row-major order.  Payload paths are relative to the manifest.

#ifndef EMOVAR_CORPUS_HPP_
#define EMOVAR_CORPUS_HPP_

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "emovar/binary_io.hpp"
#include "emovar/error.hpp"

namespace emovar {

enum class Emotion : int { kAngry = 0, kHappy = 1, kNeutral = 2, kSad = 3 };
inline constexpr int kNumEmotions = 4;
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "angry", "happy", "neutral", "sad"};

inline std::string_view EmotionName(Emotion e) {
  return kEmotionNames[static_cast<std::size_t>(e)];
}

inline std::optional<Emotion> ParseEmotion(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i)
    if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
  return std::nullopt;
}

using Frames = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct UtteranceRecord {
  std::string id;
  std::string language;
  std::string corpus;
  std::string speaker;
  Emotion label = Emotion::kNeutral;
  Frames embedding;

  int label_index() const { return static_cast<int>(label); }
  friend bool operator==(const UtteranceRecord &, const UtteranceRecord &) = default;
};

/// Records of one or more language corpora sharing one embedding dimension.
/// Treated as immutable once built.
struct Corpus {
  Eigen::Index dim = 0;
  std::vector<UtteranceRecord> records;

  friend bool operator==(const Corpus &, const Corpus &) = default;
};

/// A reference to a record plus a repetition number, so that a record can
/// appear several times in a training list without copying its payload.
struct Instance {
  std::size_t record = 0;
  std::uint32_t repeat = 0;

  friend auto operator<=>(const Instance &, const Instance &) = default;
};
using Subset = std::vector<Instance>;

inline std::string InstanceId(const Corpus &corpus, const Instance &inst) {
  return corpus.records.at(inst.record).id + "#" + std::to_string(inst.repeat);
}

// --- stable hashing for per-record sub-seeds ---------------------------------

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a of the text mixed with the seed; stable across platforms.
inline std::uint64_t SubSeed(std::uint64_t seed, std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return SplitMix64(h ^ SplitMix64(seed));
}

// --- file format -------------------------------------------------------------

namespace detail {

inline void WriteFloatPayload(std::ostream &os, const Frames &frames) {
  for (Eigen::Index r = 0; r < frames.rows(); ++r)
    for (Eigen::Index c = 0; c < frames.cols(); ++c)
      io::WriteLe<std::uint32_t>(os, std::bit_cast<std::uint32_t>(frames(r, c)));
}

inline Frames ReadFloatPayload(const std::filesystem::path &path, Eigen::Index frames,
                               Eigen::Index dim) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  Require(!ec, Errc::kIo, "cannot stat payload " + path.string());
  const auto expected = static_cast<std::uintmax_t>(frames * dim) * 4u;
  Require(size == expected, Errc::kPayloadSizeMismatch,
          path.string() + " has " + std::to_string(size) + " bytes, expected " +
              std::to_string(expected));
  std::ifstream is(path, std::ios::binary);
  Require(static_cast<bool>(is), Errc::kIo, "cannot open payload " + path.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(expected));
  is.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  Require(is.gcount() == static_cast<std::streamsize>(bytes.size()), Errc::kIo,
          "short read on " + path.string());
  Frames out(frames, dim);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < frames; ++r)
    for (Eigen::Index c = 0; c < dim; ++c, k += 4) {
      const std::uint32_t u = static_cast<std::uint32_t>(bytes[k]) |
                              (static_cast<std::uint32_t>(bytes[k + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[k + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[k + 3]) << 24);
      out(r, c) = std::bit_cast<float>(u);
    }
  return out;
}

}  // namespace detail

/// Writes dir/manifest.jsonl and dir/payload/NNNNNN.f32.  Returns the
/// manifest path.
inline std::filesystem::path WriteCorpus(const Corpus &corpus,
                                         const std::filesystem::path &dir) {
  namespace fs = std::filesystem;
  std::unordered_set<std::string> seen;
  for (const auto &r : corpus.records) {
    Require(seen.insert(r.id).second, Errc::kDuplicateId, "duplicate id " + r.id);
    Require(r.embedding.cols() == corpus.dim && r.embedding.rows() >= 1,
            Errc::kDimensionMismatch, "record " + r.id + " has the wrong shape");
  }
  fs::create_directories(dir / "payload");
  std::ostringstream manifest;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto &r = corpus.records[i];
    char name[32];
    std::snprintf(name, sizeof(name), "payload/%06zu.f32", i);
    io::AtomicWrite(dir / name, [&](std::ostream &os) { detail::WriteFloatPayload(os, r.embedding); },
                    /*binary=*/true);
    nlohmann::ordered_json line = {
        {"id", r.id},         {"language", r.language},
        {"corpus", r.corpus}, {"speaker", r.speaker},
        {"label", std::string(EmotionName(r.label))},
        {"path", name},       {"frames", r.embedding.rows()},
        {"dim", r.embedding.cols()}};
    manifest << line.dump() << '\n';
  }
  const fs::path manifest_path = dir / "manifest.jsonl";
  io::AtomicWrite(manifest_path, [&](std::ostream &os) { os << manifest.str(); });
  return manifest_path;
}

inline Corpus ReadCorpus(const std::filesystem::path &manifest_path) {
  std::ifstream in(manifest_path);
  Require(static_cast<bool>(in), Errc::kIo, "cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    nlohmann::json line;
    try {
      line = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
      throw Error(Errc::kMalformedManifest, where + ": " + e.what());
    }
    Require(line.is_object(), Errc::kMalformedManifest, where + ": not a JSON object");
    auto str_field = [&](const char *key) {
      Require(line.contains(key) && line[key].is_string(), Errc::kMalformedManifest,
              where + ": missing or non-string field '" + key + "'");
      return line[key].get<std::string>();
    };
    auto int_field = [&](const char *key) {
      Require(line.contains(key) && line[key].is_number_integer() && line[key].get<long long>() >= 1,
              Errc::kMalformedManifest,
              where + ": missing or non-positive integer field '" + key + "'");
      return static_cast<Eigen::Index>(line[key].get<long long>());
    };
    UtteranceRecord r;
    r.id = str_field("id");
    r.language = str_field("language");
    r.corpus = str_field("corpus");
    r.speaker = str_field("speaker");
    const std::string label = str_field("label");
    const std::string rel = str_field("path");
    const Eigen::Index frames = int_field("frames");
    const Eigen::Index dim = int_field("dim");
    const auto emotion = ParseEmotion(label);
    Require(emotion.has_value(), Errc::kMalformedManifest,
            where + ": label '" + label + "' is not one of angry/happy/neutral/sad");
    r.label = *emotion;
    Require(seen.insert(r.id).second, Errc::kDuplicateId, where + ": duplicate id " + r.id);
    if (corpus.dim == 0) corpus.dim = dim;
    Require(dim == corpus.dim, Errc::kMalformedManifest,
            where + ": dim " + std::to_string(dim) + " differs from " + std::to_string(corpus.dim));
    r.embedding = detail::ReadFloatPayload(base / rel, frames, dim);
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

// --- frame normalisation -----------------------------------------------------

inline constexpr Eigen::Index kDefaultTargetFrames = 99;

/// Crops longer sequences at a seeded random offset, zero-pads shorter ones
/// at the end.  The offset depends only on (seed, record id).
inline UtteranceRecord NormalizeFrames(const UtteranceRecord &record, Eigen::Index target_frames,
                                       std::uint64_t seed) {
  Require(target_frames >= 1, Errc::kInvalidConfig, "target frame count must be >= 1");
  UtteranceRecord out = record;
  const Eigen::Index t = record.embedding.rows();
  if (t == target_frames) return out;
  if (t > target_frames) {
    std::mt19937_64 rng(SubSeed(seed, "crop:" + record.id));
    std::uniform_int_distribution<Eigen::Index> pick(0, t - target_frames);
    out.embedding = record.embedding.middleRows(pick(rng), target_frames);
  } else {
    out.embedding = Frames::Zero(target_frames, record.embedding.cols());
    out.embedding.topRows(t) = record.embedding;
  }
  return out;
}

// --- synthetic corpora -------------------------------------------------------

struct LanguageSpec {
  std::string tag;
  std::string corpus;
  int speakers = 10;
};

/// Generator for corpora whose frames are
///   class mean + language offset + speaker offset + channel offset + noise,
/// with every term an isotropic Gaussian at the configured scale.  Class
/// means are orthogonal with norm class_scale unless given explicitly.
///
/// nuisance_rank > 0 confines the language, speaker and channel offsets to a
/// fixed random subspace of that dimension; 0 means the full space.
struct SynthSpec {
  std::vector<LanguageSpec> languages;
  int dim = 64;
  double class_scale = 6.0;
  std::vector<std::vector<double>> class_means;
  double language_scale = 0.2;
  double speaker_scale = 0.2;
  double channel_scale = 0.1;
  double noise_scale = 1.0;
  int nuisance_rank = 0;
  int frames_min = 90;
  int frames_max = 150;
  int utterances_per_speaker_class = 25;
  std::uint64_t seed = 20240611;

  void Validate() const {
    auto bad = [](const std::string &m) { throw Error(Errc::kInvalidSpec, m); };
    if (languages.empty()) bad("no languages");
    std::set<std::string> tags, corpora;
    for (const auto &l : languages) {
      if (l.tag.empty() || l.corpus.empty()) bad("language needs a tag and a corpus name");
      if (!tags.insert(l.tag).second) bad("duplicate language " + l.tag);
      if (!corpora.insert(l.corpus).second) bad("duplicate corpus " + l.corpus);
      if (l.speakers < 2) bad("language " + l.tag + " needs at least 2 speakers");
    }
    if (dim < 1) bad("dim must be >= 1");
    if (class_scale < 0 || language_scale < 0 || speaker_scale < 0 || channel_scale < 0 ||
        noise_scale < 0)
      bad("scales must be non-negative");
    if (class_means.empty() && dim < kNumEmotions)
      bad("dim must be >= 4 for generated orthogonal class means");
    if (!class_means.empty()) {
      if (class_means.size() != static_cast<std::size_t>(kNumEmotions))
        bad("class_means needs one row per emotion");
      for (const auto &m : class_means)
        if (m.size() != static_cast<std::size_t>(dim)) bad("class mean of wrong dimension");
    }
    if (nuisance_rank < 0 || nuisance_rank > dim) bad("nuisance_rank must lie in [0, dim]");
    if (frames_min < 1 || frames_max < frames_min) bad("invalid frame range");
    if (utterances_per_speaker_class < 1) bad("utterances_per_speaker_class must be >= 1");
  }

  /// Three languages x 10 speakers x 4 classes x 25 utterances, d = 64,
  /// class separation far above the nuisance spread.
  static SynthSpec Default() {
    SynthSpec s;
    s.languages = {{"DE", "synth-de", 10}, {"EN", "synth-en", 10}, {"CH", "synth-ch", 10}};
    return s;
  }

  /// Nuisance comparable to the class separation, concentrated in a
  /// low-rank subspace, so that unseen speakers and languages cost accuracy.
  static SynthSpec HighNuisance() {
    SynthSpec s = Default();
    s.class_scale = 4.5;
    s.language_scale = 3.6;
    s.speaker_scale = 3.0;
    s.channel_scale = 2.1;
    s.noise_scale = 3.0;
    s.nuisance_rank = 8;
    return s;
  }
};

inline void to_json(nlohmann::json &j, const LanguageSpec &l) {
  j = {{"tag", l.tag}, {"corpus", l.corpus}, {"speakers", l.speakers}};
}
inline void from_json(const nlohmann::json &j, LanguageSpec &l) {
  j.at("tag").get_to(l.tag);
  j.at("corpus").get_to(l.corpus);
  j.at("speakers").get_to(l.speakers);
}

inline void to_json(nlohmann::json &j, const SynthSpec &s) {
  j = {{"languages", s.languages},
       {"dim", s.dim},
       {"class_scale", s.class_scale},
       {"language_scale", s.language_scale},
       {"speaker_scale", s.speaker_scale},
       {"channel_scale", s.channel_scale},
       {"noise_scale", s.noise_scale},
       {"nuisance_rank", s.nuisance_rank},
       {"frames_min", s.frames_min},
       {"frames_max", s.frames_max},
       {"utterances_per_speaker_class", s.utterances_per_speaker_class},
       {"seed", s.seed}};
  if (!s.class_means.empty()) j["class_means"] = s.class_means;
}

/// Missing fields keep their Default() values; a "preset" field of
/// "default" or "high-nuisance" selects the base.
inline void from_json(const nlohmann::json &j, SynthSpec &s) {
  const std::string preset = j.value("preset", std::string("default"));
  if (preset == "default") {
    s = SynthSpec::Default();
  } else if (preset == "high-nuisance") {
    s = SynthSpec::HighNuisance();
  } else {
    throw Error(Errc::kInvalidSpec, "unknown synth preset '" + preset + "'");
  }
  if (j.contains("languages")) j.at("languages").get_to(s.languages);
  s.dim = j.value("dim", s.dim);
  s.class_scale = j.value("class_scale", s.class_scale);
  if (j.contains("class_means")) j.at("class_means").get_to(s.class_means);
  s.language_scale = j.value("language_scale", s.language_scale);
  s.speaker_scale = j.value("speaker_scale", s.speaker_scale);
  s.channel_scale = j.value("channel_scale", s.channel_scale);
  s.noise_scale = j.value("noise_scale", s.noise_scale);
  s.nuisance_rank = j.value("nuisance_rank", s.nuisance_rank);
  s.frames_min = j.value("frames_min", s.frames_min);
  s.frames_max = j.value("frames_max", s.frames_max);
  s.utterances_per_speaker_class =
      j.value("utterances_per_speaker_class", s.utterances_per_speaker_class);
  s.seed = j.value("seed", s.seed);
}

inline SynthSpec ParseSynthSpec(const nlohmann::json &j) {
  SynthSpec s;
  try {
    s = j.get<SynthSpec>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(Errc::kInvalidSpec, e.what());
  }
  s.Validate();
  return s;
}

namespace detail {

inline Eigen::VectorXd GaussianVector(std::mt19937_64 &rng, Eigen::Index n, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return scale * v;
}

/// Orthonormal columns spanning a random subspace.
inline Eigen::MatrixXd RandomOrthonormal(std::mt19937_64 &rng, Eigen::Index rows,
                                         Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace detail

inline std::string SynthSpeakerName(const LanguageSpec &l, int s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", s + 1);
  return l.tag + buf;
}

/// Every random draw is seeded from (spec.seed, a name for the draw), so
/// the result does not depend on generation order.
inline Corpus SynthesizeCorpus(const SynthSpec &spec) {
  spec.Validate();
  const Eigen::Index d = spec.dim;

  std::vector<Eigen::VectorXd> class_means;
  if (spec.class_means.empty()) {
    std::mt19937_64 rng(SubSeed(spec.seed, "class-means"));
    const Eigen::MatrixXd basis = detail::RandomOrthonormal(rng, d, kNumEmotions);
    for (int c = 0; c < kNumEmotions; ++c) class_means.push_back(spec.class_scale * basis.col(c));
  } else {
    for (const auto &m : spec.class_means)
      class_means.push_back(Eigen::Map<const Eigen::VectorXd>(m.data(), d));
  }

  const Eigen::Index rank = spec.nuisance_rank == 0 ? d : spec.nuisance_rank;
  Eigen::MatrixXd nuisance_basis = Eigen::MatrixXd::Identity(d, d);
  if (spec.nuisance_rank > 0) {
    std::mt19937_64 rng(SubSeed(spec.seed, "nuisance-subspace"));
    nuisance_basis = detail::RandomOrthonormal(rng, d, rank);
  }
  auto nuisance = [&](std::string_view name, double scale) -> Eigen::VectorXd {
    std::mt19937_64 rng(SubSeed(spec.seed, name));
    return nuisance_basis * detail::GaussianVector(rng, rank, scale);
  };

  Corpus corpus;
  corpus.dim = d;
  for (const auto &lang : spec.languages) {
    const Eigen::VectorXd lang_offset = nuisance("language:" + lang.tag, spec.language_scale);
    for (int s = 0; s < lang.speakers; ++s) {
      const std::string speaker = SynthSpeakerName(lang, s);
      const Eigen::VectorXd speaker_offset =
          nuisance("speaker:" + speaker, spec.speaker_scale) +
          nuisance("channel:" + speaker, spec.channel_scale);
      for (int c = 0; c < kNumEmotions; ++c) {
        const Eigen::VectorXd centre = class_means[static_cast<std::size_t>(c)] + lang_offset +
                                       speaker_offset;
        for (int k = 0; k < spec.utterances_per_speaker_class; ++k) {
          char suffix[64];
          std::snprintf(suffix, sizeof(suffix), "_%s_%03d",
                        std::string(kEmotionNames[static_cast<std::size_t>(c)]).c_str(), k);
          UtteranceRecord r;
          r.id = speaker + suffix;
          r.language = lang.tag;
          r.corpus = lang.corpus;
          r.speaker = speaker;
          r.label = static_cast<Emotion>(c);
          std::mt19937_64 rng(SubSeed(spec.seed, "utterance:" + r.id));
          std::uniform_int_distribution<int> len(spec.frames_min, spec.frames_max);
          const Eigen::Index t = len(rng);
          std::normal_distribution<double> normal(0.0, 1.0);
          r.embedding.resize(t, d);
          for (Eigen::Index f = 0; f < t; ++f)
            for (Eigen::Index j = 0; j < d; ++j)
              r.embedding(f, j) = static_cast<float>(centre(j) + spec.noise_scale * normal(rng));
          corpus.records.push_back(std::move(r));
        }
      }
    }
  }
  return corpus;
}

// --- fold planning -----------------------------------------------------------

struct FoldSplit {
  std::set<std::string> train;
  std::set<std::string> valid;
  std::set<std::string> test;
};

struct CorpusFolds {
  std::vector<std::vector<std::string>> groups;
  std::vector<FoldSplit> folds;  // folds[f - 1] is fold f
};

/// Speaker-disjoint cross-validation plan.  Per corpus, speakers are cut
/// into n_folds groups; fold f tests on group n-f and validates on group
/// n-f-1 (indices mod n), so test(f) == valid(f-1).  With the default
/// sorted grouping, Emo-DB speakers 03..16 give fold 1 valid {13,14} and
/// test {15,16}.
struct FoldPlan {
  int n_folds = 5;
  std::map<std::string, CorpusFolds> corpora;

  const FoldSplit &Split(const std::string &corpus, int fold) const {
    auto it = corpora.find(corpus);
    Require(it != corpora.end(), Errc::kInvalidConfig, "no fold plan for corpus " + corpus);
    Require(fold >= 1 && fold <= n_folds, Errc::kInvalidConfig,
            "fold " + std::to_string(fold) + " out of range");
    return it->second.folds[static_cast<std::size_t>(fold - 1)];
  }
};

/// Groups are contiguous chunks of the sorted speaker list (earlier groups
/// take the remainder, e.g. 24 speakers -> 5,5,5,5,4).  With a seed the list
/// is shuffled first.
inline FoldPlan PlanFolds(const std::map<std::string, std::vector<std::string>> &speakers,
                          int n_folds = 5, std::optional<std::uint64_t> seed = std::nullopt) {
  Require(n_folds >= 3, Errc::kInvalidConfig, "need at least 3 folds");
  FoldPlan plan;
  plan.n_folds = n_folds;
  for (const auto &[corpus, list] : speakers) {
    std::vector<std::string> sorted(list);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Require(sorted.size() >= static_cast<std::size_t>(n_folds), Errc::kTooFewSpeakers,
            corpus + " has " + std::to_string(sorted.size()) + " speakers, need " +
                std::to_string(n_folds));
    if (seed) {
      std::mt19937_64 rng(SubSeed(*seed, "folds:" + corpus));
      std::shuffle(sorted.begin(), sorted.end(), rng);
    }
    CorpusFolds cf;
    const std::size_t n = sorted.size();
    const std::size_t k = static_cast<std::size_t>(n_folds);
    std::size_t pos = 0;
    for (std::size_t g = 0; g < k; ++g) {
      const std::size_t size = n / k + (g < n % k ? 1 : 0);
      cf.groups.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(pos),
                             sorted.begin() + static_cast<std::ptrdiff_t>(pos + size));
      pos += size;
    }
    for (int f = 1; f <= n_folds; ++f) {
      const int test_g = ((n_folds - f) % n_folds + n_folds) % n_folds;
      const int valid_g = ((n_folds - f - 1) % n_folds + n_folds) % n_folds;
      FoldSplit split;
      for (int g = 0; g < n_folds; ++g) {
        auto &target = g == test_g ? split.test : g == valid_g ? split.valid : split.train;
        const auto &members = cf.groups[static_cast<std::size_t>(g)];
        target.insert(members.begin(), members.end());
      }
      cf.folds.push_back(std::move(split));
    }
    plan.corpora.emplace(corpus, std::move(cf));
  }
  return plan;
}

inline std::map<std::string, std::vector<std::string>> SpeakersByCorpus(const Corpus &corpus) {
  std::map<std::string, std::set<std::string>> sets;
  for (const auto &r : corpus.records) sets[r.corpus].insert(r.speaker);
  std::map<std::string, std::vector<std::string>> out;
  for (auto &[name, s] : sets) out[name].assign(s.begin(), s.end());
  return out;
}

inline nlohmann::ordered_json FoldPlanToJson(const FoldPlan &plan) {
  nlohmann::ordered_json j;
  j["n_folds"] = plan.n_folds;
  nlohmann::ordered_json corpora = nlohmann::ordered_json::object();
  for (const auto &[name, cf] : plan.corpora) {
    nlohmann::ordered_json c;
    c["groups"] = cf.groups;
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < cf.folds.size(); ++f) {
      folds.push_back({{"fold", f + 1},
                       {"train", cf.folds[f].train},
                       {"valid", cf.folds[f].valid},
                       {"test", cf.folds[f].test}});
    }
    c["folds"] = std::move(folds);
    corpora[name] = std::move(c);
  }
  j["corpora"] = std::move(corpora);
  return j;
}

// --- training set builders ---------------------------------------------------

/// Records of one corpus whose speaker is in the given set, in corpus order.
inline Subset SelectRecords(const Corpus &corpus, const std::string &corpus_name,
                            const std::set<std::string> &speakers) {
  Subset out;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto &r = corpus.records[i];
    if (r.corpus == corpus_name && speakers.count(r.speaker)) out.push_back({i, 0});
  }
  return out;
}

inline std::uint32_t RepeatFactor(std::size_t large, std::size_t small) {
  const auto r = std::llround(static_cast<double>(large) / static_cast<double>(small));
  return static_cast<std::uint32_t>(std::max<long long>(1, r));
}

inline Subset Repeated(const Subset &base, std::uint32_t times) {
  Subset out;
  out.reserve(base.size() * times);
  for (std::uint32_t k = 0; k < times; ++k)
    for (const auto &inst : base) out.push_back({inst.record, inst.repeat * times + k});
  return out;
}

/// Concatenation in which the smaller side is repeated
/// round(N_large / N_small) times (at least once).
inline Subset BalanceMerge(const Subset &a, const Subset &b) {
  Require(!a.empty() && !b.empty(), Errc::kEmptyDataset, "cannot merge an empty set");
  const bool a_small = a.size() < b.size();
  const Subset &small = a_small ? a : b;
  const Subset &large = a_small ? b : a;
  const Subset reps = Repeated(small, RepeatFactor(large.size(), small.size()));
  Subset out = a_small ? reps : a;
  const Subset &tail = a_small ? b : reps;
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

/// Appends n_utts records sampled without replacement from target_pool,
/// repeated to roughly the size of train (same rounding as BalanceMerge).
/// The pool must only hold target-language training-speaker records.
inline Subset InjectTarget(const Subset &train, const Subset &target_pool, std::size_t n_utts,
                           std::uint64_t seed) {
  if (n_utts == 0) return train;
  Require(n_utts <= target_pool.size(), Errc::kNotEnoughTargetData,
          "requested " + std::to_string(n_utts) + " target utterances, pool has " +
              std::to_string(target_pool.size()));
  Subset pool(target_pool);
  std::sort(pool.begin(), pool.end());
  std::mt19937_64 rng(SubSeed(seed, "inject"));
  for (std::size_t i = 0; i < n_utts; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n_utts);
  for (auto &inst : pool) inst.repeat = 0;
  const std::uint32_t times = train.empty() ? 1 : RepeatFactor(train.size(), n_utts);
  Subset out(train);
  const Subset extra = Repeated(pool, times);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace emovar

#endif  // EMOVAR_CORPUS_HPP_
