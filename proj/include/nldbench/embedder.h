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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nldbench/losses.h"
#include "nldbench/numerics.h"
#include "nldbench/rng.h"
#include "nldbench/synthdata.h"

namespace nldbench {

// Feed-forward embedder: affine layers, tanh between them, linear output.
struct MlpParams {
  std::vector<int> layer_dims;      // input, hidden..., embed
  std::vector<RealMatrix> weights;  // weights[l] is dims[l+1] x dims[l]
  std::vector<RealVector> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  bool operator==(const MlpParams&) const = default;
};

// Uniform in +-1/sqrt(fan_in) for weights and biases.
MlpParams init_mlp(const std::vector<int>& layer_dims, Rng& rng);
MlpParams zeros_like(const MlpParams& p);

RealVector embed(const MlpParams& params, std::span<const double> features);

// Row i is the embedding of ds.utterances[i].
RealMatrix embed_dataset(const MlpParams& params, const Dataset& ds);

// Layer outputs kept for the backward pass; outputs[0] is the input.
struct MlpTrace {
  std::vector<RealVector> outputs;
};

RealVector embed_traced(const MlpParams& params, std::span<const double> features,
                        MlpTrace& trace);

// Accumulates parameter gradients into `grads`. Returns d(loss)/d(input).
RealVector backprop(const MlpParams& params, const MlpTrace& trace,
                    std::span<const double> grad_output, MlpParams& grads);

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<RealVector> first_moment;   // one per parameter block
  std::vector<RealVector> second_moment;
};

struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

// One bias-corrected Adam update over all blocks. Throws DivergenceError
// naming the first block holding a non-finite gradient; nothing is updated
// in that case.
void adam_step(std::span<const ParamBlock> blocks, AdamState& state);

struct Batch {
  RealMatrix features;           // speaker-major rows
  std::vector<int> labels;       // observed labels
  std::vector<std::size_t> indices;  // positions in the dataset
  int speakers = 0;
  int per_speaker = 0;
};

// Speaker-balanced sampling by observed label. Index lists are built once.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, int speakers, int per_speaker);

  Batch sample(Rng& rng) const;
  // Classes holding fewer than M utterances.
  const std::vector<int>& excluded_classes() const { return excluded_; }

 private:
  const Dataset* ds_;
  int speakers_;
  int per_speaker_;
  std::vector<int> eligible_;
  std::vector<int> excluded_;
  std::vector<std::vector<std::size_t>> members_;  // by class id
};

Batch sample_batch(const Dataset& ds, int speakers, int per_speaker, Rng& rng);

struct TrainConfig {
  std::int64_t total_steps = 5000;
  int speakers_per_batch = 64;
  int utterances_per_speaker = 1;
  LossConfig loss = CeConfig{};
  double easy_margin_fraction = 0.125;
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<int> hidden_dims = {64, 64};
  int embed_dim = 32;
};

// Throws ConfigError on an inconsistent config.
void validate_train_config(const TrainConfig& cfg);
// Number of leading steps trained with the easy margin.
std::int64_t easy_margin_steps(const TrainConfig& cfg);

nlohmann::json loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
// Short hex digest of the canonical JSON form.
std::string config_digest(const nlohmann::json& j);

struct TrainManifest {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::int64_t steps = 0;
  double learning_rate = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double epsilon = 0.0;
  bool operator==(const TrainManifest&) const = default;
};

struct TrainedModel {
  MlpParams embedder;
  ClassifierParams classifier;
  LossConfig loss_config;
  TrainManifest manifest;
  bool operator==(const TrainedModel&) const = default;
};

struct TrainLogEntry {
  std::int64_t step = 0;
  double loss = 0.0;
  bool easy_margin = false;
};

struct TrainResult {
  TrainedModel model;
  std::vector<TrainLogEntry> log;
  std::vector<std::string> warnings;
};

TrainResult train(const Dataset& ds, const TrainConfig& cfg);

std::string serialize_model(const TrainedModel& model);
TrainedModel parse_model(const std::string& text);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);
std::string serialize_loss_log(std::span<const TrainLogEntry> log);

}  // namespace nldbench
