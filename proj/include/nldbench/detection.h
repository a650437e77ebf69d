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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nldbench/embedder.h"
#include "nldbench/numerics.h"
#include "nldbench/synthdata.h"

namespace nldbench {

enum class NldMethod { IntraClass, InterClass };

std::string to_string(NldMethod m);  // "intra" / "inter"
NldMethod parse_nld_method(const std::string& s);

// Mean embedding per observed class, over every utterance carrying that label.
struct CentroidBank {
  std::vector<int> classes;  // observed classes with at least one utterance, ascending
  RealMatrix centroids;      // row k belongs to classes[k]
  std::vector<std::size_t> counts;
  std::vector<std::string> warnings;

  // Row of `cls`, or nullopt when the class had no utterances.
  std::optional<std::size_t> row_of(int cls) const;
};

CentroidBank compute_centroids(const RealMatrix& embeddings, const Dataset& ds);
CentroidBank compute_centroids(const TrainedModel& model, const Dataset& ds);

struct InconsistencyScore {
  std::int64_t utt_id = 0;
  double score = 0.0;
  NldMethod method = NldMethod::IntraClass;
};

struct ScoreSet {
  std::vector<InconsistencyScore> scores;  // dataset order
  std::vector<std::string> warnings;
};

// 1 - cos(embedding, own observed-class centroid). Zero-norm inputs score 2.
ScoreSet intra_inconsistency(const RealMatrix& embeddings, const Dataset& ds,
                             const CentroidBank& bank);
ScoreSet intra_inconsistency(const TrainedModel& model, const Dataset& ds,
                             const CentroidBank& bank);

// Maps an embedding to a probability vector over the C observed classes.
using ConfidenceFn = std::function<RealVector(std::span<const double>)>;

// Trained CE/AAM/AAMSC head, applied without scale or margin.
ConfidenceFn head_classifier(const TrainedModel& model);

// softmax_k(cos(x, c_k) / temperature) over usable centroids; classes without
// a usable centroid get probability 0.
class CentroidClassifier {
 public:
  CentroidClassifier(const CentroidBank& bank, double temperature, int class_count);

  RealVector confidence(std::span<const double> x) const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<int> classes_;
  RealMatrix centroids_;
  double temperature_;
  int class_count_;
  std::vector<std::string> warnings_;
};

CentroidClassifier build_centroid_classifier(const CentroidBank& bank, double temperature,
                                             int class_count);

// min_j (1 - y_j p_j) with y one-hot at `label`.
double masked_min_inconsistency(std::span<const double> p, int label);

// 1 - p[observed]. Zero-norm embeddings score 1 with a warning.
ScoreSet inter_inconsistency(const RealMatrix& embeddings, const Dataset& ds,
                             const ConfidenceFn& classify);
// Uses the trained head, or for GE2E a centroid classifier over `ds`.
ScoreSet inter_inconsistency(const TrainedModel& model, const Dataset& ds,
                             double ge2e_temperature = 0.1);

struct DetectionResult {
  NldMethod method = NldMethod::IntraClass;
  double q_used = 0.0;
  std::vector<std::int64_t> predicted_noisy;  // rank order
  std::optional<double> precision;
  std::optional<double> recall;
};

// ceil(q * n / 100), guarded against round-off in q * n / 100.
std::size_t selection_count(double q, std::size_t n);

// Top q% by score, ties broken by ascending utt_id.
DetectionResult rank_and_select(std::span<const InconsistencyScore> scores, double q,
                                std::size_t dataset_size);

DetectionResult detection_precision(DetectionResult result, const Dataset& ds);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t clean = 0;
  std::size_t noisy = 0;
};

struct Histogram {
  std::vector<HistogramBin> bins;
  std::vector<std::string> warnings;
};

// Min-max normalized scores in equal-width bins; bin b covers (lo, hi], the
// first also includes 0.
Histogram export_score_histogram(std::span<const InconsistencyScore> scores, const Dataset& ds,
                                 int bins);

std::string scores_csv(std::span<const InconsistencyScore> scores, const Dataset& ds);
std::string histogram_csv(const Histogram& h);

}  // namespace nldbench
