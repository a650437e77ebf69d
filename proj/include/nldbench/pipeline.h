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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nldbench/detection.h"
#include "nldbench/embedder.h"
#include "nldbench/eval.h"
#include "nldbench/synthdata.h"

namespace nldbench {

inline constexpr const char* kToolVersion = "0.1.0";

struct DatasetParams {
  GeneratorConfig generator = {50, 40, 8, 20, 0.15};
  int aux_classes = 50;
  int aux_per_class = 40;
  int heldout_classes = 40;
  int heldout_per_class = 10;
};

struct NoiseParams {
  NoiseKind kind = NoiseKind::Permute;
  double level = 20.0;
};

struct DetectParams {
  std::vector<NldMethod> methods = {NldMethod::InterClass, NldMethod::IntraClass};
  std::optional<double> q;  // defaults to the noise level
  double temperature = 0.1;
  int histogram_bins = 20;
};

struct EvalParams {
  int pairs_per_kind = 1000;
};

struct RunConfig {
  DatasetParams dataset;
  NoiseParams noise;
  // train.seed is replaced by the run seed. Desk-scale defaults: batches of
  // 64 classes do not fit the 50-class corpus, and 5000 steps at 1e-4 stop
  // short of the regime where noisy labels start to be memorized.
  TrainConfig train = [] {
    TrainConfig t;
    t.speakers_per_batch = 32;
    t.learning_rate = 3e-4;
    return t;
  }();
  DetectParams detect;
  EvalParams eval;
  std::vector<std::uint64_t> seeds = {0, 2};

  // Selection level actually used by detection.
  double detection_q() const { return detect.q.value_or(noise.level); }
};

// Throws ConfigError naming the offending field.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);
void validate_run_config(const RunConfig& cfg);
// Digest of the config with the seed list left out.
std::string run_config_digest(const RunConfig& cfg);

// Training config for one run seed, with the class count filled in.
struct SimulatedData {
  SyntheticCorpus clean;
  SyntheticCorpus aux;
  SyntheticCorpus heldout;  // fresh utterances of the first auxiliary classes
  Dataset noisy;
};

// Everything the simulate stage writes, without touching the filesystem.
SimulatedData simulate_run(const RunConfig& cfg, std::uint64_t seed);

TrainConfig train_config_for(const RunConfig& cfg, std::uint64_t seed, int class_count);

// Where one seed's artifacts live and where inputs are read from.
struct RunPaths {
  std::filesystem::path dir;
  std::optional<std::filesystem::path> dataset;    // default dir/noisy.jsonl
  std::optional<std::filesystem::path> model;      // default dir/model.json
  std::optional<std::filesystem::path> heldout;    // default dir/heldout.jsonl
  std::optional<std::filesystem::path> detection;  // default dir/detection_<method>.json

  std::filesystem::path dataset_path() const { return dataset.value_or(dir / "noisy.jsonl"); }
  std::filesystem::path model_path() const { return model.value_or(dir / "model.json"); }
  std::filesystem::path heldout_path() const { return heldout.value_or(dir / "heldout.jsonl"); }
};

std::filesystem::path seed_dir(const std::filesystem::path& out, std::uint64_t seed);

using WarningSink = std::function<void(const std::string&)>;

struct SimulateSummary {
  std::size_t utterances = 0;
  std::size_t noisy_count = 0;
};

// Each command writes its artifacts under paths.dir, records them with
// content hashes in paths.dir/manifest.json, and throws on failure without
// leaving a partial report behind.
SimulateSummary cmd_simulate(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                             const WarningSink& warn);
void cmd_train(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
               const WarningSink& warn);
std::vector<DetectionResult> cmd_detect(const RunConfig& cfg, std::uint64_t seed,
                                        const RunPaths& paths, const WarningSink& warn);
EerResult cmd_eval(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                   const WarningSink& warn);
RetrainReport cmd_retrain(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                          const WarningSink& warn);

// Scans `root` for run directories and writes root/report.csv, averaging
// each (noise kind, level, loss, method) cell over seeds. Returns the CSV.
std::string cmd_report(const std::filesystem::path& root, const WarningSink& warn);

}  // namespace nldbench
