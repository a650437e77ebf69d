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
#include <span>
#include <string>
#include <vector>

#include "nldbench/detection.h"
#include "nldbench/embedder.h"
#include "nldbench/synthdata.h"

namespace nldbench {

struct Trial {
  std::int64_t enroll_utt_id = 0;
  std::int64_t test_utt_id = 0;
  bool is_target = false;
  bool operator==(const Trial&) const = default;
};

// pairs_per_kind same-class and pairs_per_kind different-class pairs (by
// true_class), sampled uniformly without duplicates. Enroll id < test id.
std::vector<Trial> generate_trials(const Dataset& heldout, int pairs_per_kind,
                                   std::uint64_t seed);

struct TrialScores {
  std::vector<Trial> trials;  // trials that were scored
  std::vector<double> scores;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

// Cosine similarity of the two embeddings; trials with a zero-norm embedding
// are dropped.
TrialScores score_trials(const TrainedModel& model, const Dataset& heldout,
                         std::span<const Trial> trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t trial_count = 0;
  std::vector<std::string> warnings;
};

// Threshold sweep over every distinct score (accept when score >= threshold),
// linearly interpolated where FAR - FRR changes sign.
EerResult compute_eer(std::span<const double> scores, const std::vector<bool>& is_target);
EerResult compute_eer(const TrialScores& scored);

struct RetrainReport {
  EerResult before;
  EerResult after;
  std::size_t removed_count = 0;
  std::size_t unmatched_ids = 0;  // predicted ids absent from the dataset, or repeated
  std::vector<int> dropped_classes;
  TrainedModel before_model;
  TrainedModel after_model;
  std::vector<std::string> warnings;
};

Dataset remove_utterances(const Dataset& ds, std::span<const std::int64_t> ids,
                          std::size_t* removed = nullptr);

// Retrains on `noisy` minus the predicted ids with the same config and seed.
// When `before` is null the noisy-trained baseline is trained here too.
RetrainReport retrain_after_removal(const Dataset& noisy, const DetectionResult& detection,
                                    const TrainConfig& cfg, const Dataset& heldout,
                                    std::span<const Trial> trials,
                                    const TrainedModel* before = nullptr);

std::string trials_csv(std::span<const Trial> trials);

}  // namespace nldbench
