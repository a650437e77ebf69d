// Copyright (c) 2026 The nldbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nldbench/synthdata.h"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "nldbench/errors.h"
#include "nldbench/io.h"
#include "nldbench/rng.h"

namespace nldbench {

namespace {

constexpr int kFormatVersion = 1;

RealVector random_unit(Rng& rng, int dim) {
  RealVector v(static_cast<std::size_t>(dim));
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = l2_norm(v);
  } while (!(n > 1e-12));
  for (double& x : v) x /= n;
  return v;
}

void check_config(const GeneratorConfig& cfg) {
  if (cfg.class_count < 2) throw ConfigError("generator: class_count must be >= 2");
  if (cfg.per_class < 2) throw ConfigError("generator: per_class must be >= 2");
  if (cfg.latent_dim < 1) throw ConfigError("generator: latent_dim must be >= 1");
  if (cfg.feature_dim < cfg.latent_dim)
    throw ConfigError("generator: feature_dim must be >= latent_dim");
  if (!(cfg.within_class_spread >= 0.0) || !std::isfinite(cfg.within_class_spread))
    throw ConfigError("generator: within_class_spread must be finite and >= 0");
}

Dataset draw_utterances(const GeneratorConfig& cfg, const RealMatrix& mixing,
                        const std::vector<ClassSpec>& classes, Rng& rng) {
  Dataset ds;
  ds.class_count = cfg.class_count;
  ds.feature_dim = cfg.feature_dim;
  ds.utterances.reserve(static_cast<std::size_t>(cfg.class_count) * cfg.per_class);
  std::int64_t next_id = 0;
  RealVector latent(static_cast<std::size_t>(cfg.latent_dim));
  for (const auto& cls : classes) {
    for (int u = 0; u < cfg.per_class; ++u) {
      for (std::size_t k = 0; k < latent.size(); ++k)
        latent[k] = cls.latent_direction[k] + cfg.within_class_spread * rng.normal();
      Utterance utt;
      utt.utt_id = next_id++;
      utt.features = mat_vec(mixing, latent);
      utt.true_class = cls.class_id;
      utt.observed_class = cls.class_id;
      ds.utterances.push_back(std::move(utt));
    }
  }
  return ds;
}

std::vector<ClassSpec> draw_classes(int count, int latent_dim, Rng& rng,
                                    const std::vector<ClassSpec>& exclude,
                                    double max_abs_cosine) {
  constexpr int kMaxAttempts = 100000;
  std::vector<ClassSpec> classes;
  classes.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts)
        throw ConfigError("generator: cannot place class directions away from excluded set");
      RealVector dir = random_unit(rng, latent_dim);
      bool ok = true;
      for (const auto& other : exclude) {
        if (std::abs(dot(dir, other.latent_direction)) > max_abs_cosine) {
          ok = false;
          break;
        }
      }
      if (ok) {
        classes.push_back({c, std::move(dir)});
        break;
      }
    }
  }
  return classes;
}

}  // namespace

std::string to_string(Origin o) {
  return o == Origin::InDistribution ? "InDistribution" : "OutOfDistribution";
}

std::string to_string(NoiseKind k) { return k == NoiseKind::Permute ? "permute" : "openset"; }

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "permute") return NoiseKind::Permute;
  if (s == "openset" || s == "open-set" || s == "open") return NoiseKind::OpenSet;
  throw ConfigError("unknown noise kind '" + s + "' (expected permute or openset)");
}

std::size_t Dataset::noisy_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.is_noisy ? 1 : 0;
  return n;
}

void Dataset::validate() const {
  if (class_count < 1) throw ValidationError("dataset: class count must be positive");
  if (feature_dim < 1) throw ValidationError("dataset: feature dim must be positive");
  std::unordered_set<std::int64_t> ids;
  for (const auto& u : utterances) {
    const std::string where = "utterance " + std::to_string(u.utt_id) + ": ";
    if (!ids.insert(u.utt_id).second) throw ValidationError(where + "duplicate utt_id");
    if (u.observed_class < 0 || u.observed_class >= class_count)
      throw ValidationError(where + "observed_class out of range");
    if (u.true_class < 0) throw ValidationError(where + "negative true_class");
    if (u.features.size() != static_cast<std::size_t>(feature_dim))
      throw ValidationError(where + "feature dimension mismatch");
    if (!all_finite(u.features)) throw ValidationError(where + "non-finite feature");
    const bool expect_noisy =
        u.observed_class != u.true_class || u.origin == Origin::OutOfDistribution;
    if (u.is_noisy != expect_noisy) throw ValidationError(where + "is_noisy flag inconsistent");
  }
}

SyntheticCorpus generate_corpus(const GeneratorConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  SyntheticCorpus corpus;
  corpus.config = cfg;
  Rng mix_rng = Rng::derive(seed, "generator/mixing");
  corpus.mixing = RealMatrix(static_cast<std::size_t>(cfg.feature_dim),
                             static_cast<std::size_t>(cfg.latent_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  for (double& v : corpus.mixing.data()) v = scale * mix_rng.normal();
  Rng class_rng = Rng::derive(seed, "generator/classes");
  corpus.classes = draw_classes(cfg.class_count, cfg.latent_dim, class_rng, {}, 1.0);
  Rng utt_rng = Rng::derive(seed, "generator/utterances");
  corpus.dataset = draw_utterances(cfg, corpus.mixing, corpus.classes, utt_rng);
  return corpus;
}

SyntheticCorpus generate_companion(const SyntheticCorpus& base, int class_count, int per_class,
                                   std::uint64_t seed, const std::vector<ClassSpec>& exclude,
                                   double max_abs_cosine) {
  GeneratorConfig cfg = base.config;
  cfg.class_count = class_count;
  cfg.per_class = per_class;
  check_config(cfg);
  SyntheticCorpus corpus;
  corpus.config = cfg;
  corpus.mixing = base.mixing;
  Rng class_rng = Rng::derive(seed, "generator/classes");
  corpus.classes = draw_classes(cfg.class_count, cfg.latent_dim, class_rng, exclude,
                                max_abs_cosine);
  Rng utt_rng = Rng::derive(seed, "generator/utterances");
  corpus.dataset = draw_utterances(cfg, corpus.mixing, corpus.classes, utt_rng);
  return corpus;
}

SyntheticCorpus resample_corpus(const SyntheticCorpus& source, int class_count, int per_class,
                                std::uint64_t seed) {
  if (class_count > static_cast<int>(source.classes.size()))
    throw ConfigError("generator: cannot resample " + std::to_string(class_count) +
                      " classes from a corpus of " + std::to_string(source.classes.size()));
  SyntheticCorpus out;
  out.config = source.config;
  out.config.class_count = class_count;
  out.config.per_class = per_class;
  check_config(out.config);
  out.mixing = source.mixing;
  out.classes.assign(source.classes.begin(), source.classes.begin() + class_count);
  Rng rng = Rng::derive(seed, "generator/utterances");
  out.dataset = draw_utterances(out.config, out.mixing, out.classes, rng);
  return out;
}

Dataset generate_dataset(int class_count, int per_class, int latent_dim, int feature_dim,
                         double within_class_spread, std::uint64_t seed) {
  return generate_corpus({class_count, per_class, latent_dim, feature_dim, within_class_spread},
                         seed)
      .dataset;
}

namespace {

void check_noise(const Dataset& ds, const NoiseSpec& spec, NoiseKind expected) {
  if (spec.kind != expected)
    throw ConfigError("noise spec kind mismatch: expected " + to_string(expected));
  if (!(spec.level_q >= 0.0 && spec.level_q <= 100.0))
    throw ConfigError("noise level must be within [0, 100]");
  if (ds.provenance.has_value() || ds.noisy_count() != 0)
    throw ConfigError("noise can only be applied to a clean dataset");
}

}  // namespace

Dataset apply_permute_noise(const Dataset& ds, const NoiseSpec& spec) {
  check_noise(ds, spec, NoiseKind::Permute);
  if (spec.level_q > 0.0 && ds.class_count < 2)
    throw ConfigError("permute noise needs at least two classes");
  Dataset out = ds;
  out.provenance = spec;
  Rng rng = Rng::derive(spec.seed, "noise/permute");
  const double p = spec.level_q / 100.0;
  const auto others = static_cast<std::uint64_t>(ds.class_count - 1);
  for (auto& u : out.utterances) {
    if (!rng.bernoulli(p)) continue;
    // Uniform over the classes other than the true one.
    int pick = static_cast<int>(rng.index(others));
    if (pick >= u.true_class) ++pick;
    u.observed_class = pick;
    u.is_noisy = true;
  }
  return out;
}

Dataset apply_openset_noise(const Dataset& ds, const Dataset& aux, const NoiseSpec& spec) {
  check_noise(ds, spec, NoiseKind::OpenSet);
  if (spec.level_q > 0.0 && aux.utterances.empty())
    throw ConfigError("open-set noise needs a non-empty auxiliary dataset");
  if (!aux.utterances.empty() && aux.feature_dim != ds.feature_dim)
    throw ConfigError("auxiliary dataset feature dimension differs");
  Dataset out = ds;
  out.provenance = spec;
  Rng rng = Rng::derive(spec.seed, "noise/openset");
  const double p = spec.level_q / 100.0;
  for (auto& u : out.utterances) {
    if (!rng.bernoulli(p)) continue;
    const auto& donor = aux.utterances[rng.index(aux.utterances.size())];
    u.features = donor.features;
    u.origin = Origin::OutOfDistribution;
    u.is_noisy = true;
  }
  return out;
}

namespace {

nlohmann::json provenance_json(const std::optional<NoiseSpec>& p) {
  if (!p) return "clean";
  return {{"kind", to_string(p->kind)}, {"level_q", p->level_q}, {"seed", p->seed}};
}

std::optional<NoiseSpec> parse_provenance(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "clean") return std::nullopt;
  NoiseSpec spec;
  spec.kind = parse_noise_kind(j.at("kind").get<std::string>());
  spec.level_q = j.at("level_q").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  nlohmann::json header = {{"format_version", kFormatVersion},
                           {"C", ds.class_count},
                           {"d", ds.feature_dim},
                           {"n", ds.utterances.size()},
                           {"provenance", provenance_json(ds.provenance)}};
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& u : ds.utterances) {
    out += "{\"utt_id\":" + std::to_string(u.utt_id);
    out += ",\"true_class\":" + std::to_string(u.true_class);
    out += ",\"observed_class\":" + std::to_string(u.observed_class);
    out += ",\"is_noisy\":";
    out += u.is_noisy ? "true" : "false";
    out += ",\"origin\":\"" + to_string(u.origin) + "\"";
    out += ",\"features\":";
    io::append_real_array(out, u.features);
    out += "}\n";
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Dataset ds;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    try {
      if (!have_header) {
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
          throw ParseError("unsupported format_version " + std::to_string(version), line_no);
        ds.class_count = j.at("C").get<int>();
        ds.feature_dim = j.at("d").get<int>();
        expected = j.at("n").get<std::size_t>();
        ds.provenance = parse_provenance(j.at("provenance"));
        ds.utterances.reserve(expected);
        have_header = true;
        continue;
      }
      Utterance u;
      u.utt_id = j.at("utt_id").get<std::int64_t>();
      u.true_class = j.at("true_class").get<int>();
      u.observed_class = j.at("observed_class").get<int>();
      u.is_noisy = j.at("is_noisy").get<bool>();
      const auto origin = j.at("origin").get<std::string>();
      if (origin == "InDistribution") {
        u.origin = Origin::InDistribution;
      } else if (origin == "OutOfDistribution") {
        u.origin = Origin::OutOfDistribution;
      } else {
        throw ParseError("unknown origin '" + origin + "'", line_no);
      }
      u.features = j.at("features").get<RealVector>();
      ds.utterances.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad field: ") + e.what(), line_no);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("missing header line", line_no);
  if (ds.utterances.size() != expected)
    throw ParseError("truncated file: header announces " + std::to_string(expected) +
                         " utterances, found " + std::to_string(ds.utterances.size()),
                     line_no);
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path));
}

}  // namespace nldbench
