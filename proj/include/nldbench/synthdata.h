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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nldbench/numerics.h"

namespace nldbench {

enum class Origin { InDistribution, OutOfDistribution };
enum class NoiseKind { Permute, OpenSet };

std::string to_string(Origin o);
std::string to_string(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& s);

struct ClassSpec {
  int class_id = 0;
  RealVector latent_direction;  // unit norm

  bool operator==(const ClassSpec&) const = default;
};

struct Utterance {
  std::int64_t utt_id = 0;
  RealVector features;
  int true_class = 0;
  int observed_class = 0;
  bool is_noisy = false;
  Origin origin = Origin::InDistribution;

  bool operator==(const Utterance&) const = default;
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Permute;
  double level_q = 0.0;  // percent
  std::uint64_t seed = 0;

  bool operator==(const NoiseSpec&) const = default;
};

struct Dataset {
  std::vector<Utterance> utterances;
  int class_count = 0;
  int feature_dim = 0;
  std::optional<NoiseSpec> provenance;  // empty means clean

  std::size_t size() const { return utterances.size(); }
  std::size_t noisy_count() const;

  // Throws ValidationError on the first broken invariant.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct GeneratorConfig {
  int class_count = 0;
  int per_class = 0;
  int latent_dim = 0;
  int feature_dim = 0;
  double within_class_spread = 0.0;
};

// A generated dataset together with the geometry it was drawn from. Related
// datasets (auxiliary, held-out) share the mixing matrix.
struct SyntheticCorpus {
  GeneratorConfig config;
  RealMatrix mixing;  // feature_dim x latent_dim
  std::vector<ClassSpec> classes;
  Dataset dataset;
};

SyntheticCorpus generate_corpus(const GeneratorConfig& cfg, std::uint64_t seed);

// New classes in the same feature space as `base`. Candidate directions whose
// absolute cosine to any direction in `exclude` exceeds `max_abs_cosine` are
// redrawn.
SyntheticCorpus generate_companion(const SyntheticCorpus& base, int class_count, int per_class,
                                   std::uint64_t seed,
                                   const std::vector<ClassSpec>& exclude,
                                   double max_abs_cosine = 0.95);

// Fresh utterances for the first class_count classes of source (same mixing and spread).
SyntheticCorpus resample_corpus(const SyntheticCorpus& source, int class_count, int per_class,
                                std::uint64_t seed);

Dataset generate_dataset(int class_count, int per_class, int latent_dim, int feature_dim,
                         double within_class_spread, std::uint64_t seed);

Dataset apply_permute_noise(const Dataset& ds, const NoiseSpec& spec);
Dataset apply_openset_noise(const Dataset& ds, const Dataset& aux, const NoiseSpec& spec);

std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace nldbench
