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

#include <span>
#include <string>
#include <variant>

#include "nldbench/numerics.h"
#include "nldbench/rng.h"

namespace nldbench {

// Softmax cross-entropy over an affine layer.
struct CeConfig {
  int class_count = 0;
  bool operator==(const CeConfig&) const = default;
};

// Additive angular margin. margin == 0 gives the normalized softmax loss.
struct AamConfig {
  int class_count = 0;
  double scale = 30.0;
  double margin = 0.2;
  bool easy_margin = false;
  bool operator==(const AamConfig&) const = default;
};

// Additive angular margin with `subcenters` weight rows per class.
struct AamscConfig {
  int class_count = 0;
  double scale = 30.0;
  double margin = 0.2;
  bool easy_margin = false;
  int subcenters = 3;
  bool operator==(const AamscConfig&) const = default;
};

// Generalized end-to-end (softmax variant). The affine terms are learned;
// these are their initial values.
struct Ge2eConfig {
  double affine_weight = 10.0;
  double affine_bias = -5.0;
  bool operator==(const Ge2eConfig&) const = default;
};

using LossConfig = std::variant<CeConfig, AamConfig, AamscConfig, Ge2eConfig>;

std::string loss_name(const LossConfig& cfg);
bool is_ge2e(const LossConfig& cfg);
bool uses_margin(const LossConfig& cfg);
// Number of classes the classifier covers; 0 for GE2E.
int loss_class_count(const LossConfig& cfg);
// Throws ConfigError when hyperparameters are out of range.
void validate_loss_config(const LossConfig& cfg);
LossConfig with_easy_margin(LossConfig cfg, bool on);

// Smallest admissible GE2E similarity weight.
inline constexpr double kGe2eMinWeight = 1e-4;

struct ClassifierParams {
  RealMatrix weight;        // (C * K) x embed_dim, class-major sub-center rows; empty for GE2E
  RealVector bias;          // length C for CE, otherwise empty
  double ge2e_weight = 0.0; // GE2E only
  double ge2e_bias = 0.0;   // GE2E only

  bool operator==(const ClassifierParams&) const = default;
};

// Uniform in +-1/sqrt(embed_dim) for weight rows, zero CE bias, GE2E affine
// terms from the config.
ClassifierParams init_classifier(const LossConfig& cfg, int embed_dim, Rng& rng);

struct LossOutput {
  double value = 0.0;
  RealMatrix grad_embeddings;  // same shape as the embedding batch
  ClassifierParams grad_params;
};

// Target-logit cosine after the angular margin: cos(phi + m) with the linear
// fallback past phi + m > pi, or the raw cosine when easy margin applies.
double margin_target_cosine(double cosine, double margin, bool easy_margin);

// Embeddings are batch rows; labels index classes.
LossOutput ce_loss(const RealMatrix& embeddings, std::span<const int> labels,
                   const ClassifierParams& params);
LossOutput aam_loss(const RealMatrix& embeddings, std::span<const int> labels,
                    const ClassifierParams& params, const AamConfig& cfg);
LossOutput aamsc_loss(const RealMatrix& embeddings, std::span<const int> labels,
                      const ClassifierParams& params, const AamscConfig& cfg);
// Rows grouped speaker-major: rows [j*M, (j+1)*M) belong to speaker j.
LossOutput ge2e_loss(const RealMatrix& embeddings, int speakers, int per_speaker,
                     const ClassifierParams& params);

// Dispatch on the config. `labels` is ignored for GE2E, which uses the
// grouped layout instead.
LossOutput compute_loss(const LossConfig& cfg, const RealMatrix& embeddings,
                        std::span<const int> labels, int speakers, int per_speaker,
                        const ClassifierParams& params);

// Class probabilities from the trained head with no scale or margin.
// Not defined for GE2E (use the centroid classifier).
RealVector classify_confidence(std::span<const double> x, const ClassifierParams& params,
                               const LossConfig& cfg);

}  // namespace nldbench
