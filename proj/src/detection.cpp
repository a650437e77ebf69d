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

#include "nldbench/detection.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "nldbench/errors.h"
#include "nldbench/io.h"

namespace nldbench {

namespace {

std::unordered_map<std::int64_t, const Utterance*> index_by_id(const Dataset& ds) {
  std::unordered_map<std::int64_t, const Utterance*> idx;
  idx.reserve(ds.size());
  for (const auto& u : ds.utterances) idx.emplace(u.utt_id, &u);
  return idx;
}

void check_rows(const RealMatrix& embeddings, const Dataset& ds) {
  if (embeddings.rows() != ds.size())
    throw DomainError("embedding count does not match dataset size");
}

}  // namespace

std::string to_string(NldMethod m) { return m == NldMethod::IntraClass ? "intra" : "inter"; }

NldMethod parse_nld_method(const std::string& s) {
  if (s == "intra") return NldMethod::IntraClass;
  if (s == "inter") return NldMethod::InterClass;
  throw ConfigError("unknown detection method '" + s + "' (expected intra or inter)");
}

std::optional<std::size_t> CentroidBank::row_of(int cls) const {
  const auto it = std::lower_bound(classes.begin(), classes.end(), cls);
  if (it == classes.end() || *it != cls) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

CentroidBank compute_centroids(const RealMatrix& embeddings, const Dataset& ds) {
  check_rows(embeddings, ds);
  const std::size_t dim = embeddings.cols();
  std::map<int, std::pair<RealVector, std::size_t>> acc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& [sum, count] = acc[ds.utterances[i].observed_class];
    if (sum.empty()) sum.assign(dim, 0.0);
    const auto e = embeddings.row(i);
    for (std::size_t k = 0; k < dim; ++k) sum[k] += e[k];
    ++count;
  }
  CentroidBank bank;
  bank.centroids = RealMatrix(acc.size(), dim);
  std::size_t r = 0;
  for (const auto& [cls, entry] : acc) {
    bank.classes.push_back(cls);
    bank.counts.push_back(entry.second);
    auto row = bank.centroids.row(r++);
    for (std::size_t k = 0; k < dim; ++k)
      row[k] = entry.first[k] / static_cast<double>(entry.second);
  }
  for (int c = 0; c < ds.class_count; ++c)
    if (!acc.contains(c))
      bank.warnings.push_back("class " + std::to_string(c) + " has no utterances; no centroid");
  return bank;
}

CentroidBank compute_centroids(const TrainedModel& model, const Dataset& ds) {
  return compute_centroids(embed_dataset(model.embedder, ds), ds);
}

ScoreSet intra_inconsistency(const RealMatrix& embeddings, const Dataset& ds,
                             const CentroidBank& bank) {
  check_rows(embeddings, ds);
  ScoreSet out;
  out.scores.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& u = ds.utterances[i];
    const auto row = bank.row_of(u.observed_class);
    if (!row) throw DomainError("intra_inconsistency: centroid bank lacks class " +
                                std::to_string(u.observed_class));
    const auto e = embeddings.row(i);
    const auto c = bank.centroids.row(*row);
    double score = 2.0;
    if (l2_norm(e) > 0.0 && l2_norm(c) > 0.0) {
      score = 1.0 - cosine_similarity(e, c);
    } else {
      out.warnings.push_back("utterance " + std::to_string(u.utt_id) +
                             ": zero-norm embedding or centroid, scored 2");
    }
    out.scores.push_back({u.utt_id, score, NldMethod::IntraClass});
  }
  return out;
}

ScoreSet intra_inconsistency(const TrainedModel& model, const Dataset& ds,
                             const CentroidBank& bank) {
  return intra_inconsistency(embed_dataset(model.embedder, ds), ds, bank);
}

ConfidenceFn head_classifier(const TrainedModel& model) {
  if (is_ge2e(model.loss_config))
    throw DomainError("head_classifier: GE2E has no parametric head; use the centroid classifier");
  return [&model](std::span<const double> x) {
    return classify_confidence(x, model.classifier, model.loss_config);
  };
}

CentroidClassifier::CentroidClassifier(const CentroidBank& bank, double temperature,
                                       int class_count)
    : temperature_(temperature), class_count_(class_count) {
  if (!(temperature > 0.0)) throw ConfigError("centroid classifier: temperature must be > 0");
  if (bank.classes.empty()) throw ConfigError("centroid classifier: empty centroid bank");
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < bank.classes.size(); ++r) {
    if (bank.classes[r] >= class_count)
      throw DomainError("centroid classifier: class id beyond class count");
    if (l2_norm(bank.centroids.row(r)) > 0.0) {
      keep.push_back(r);
    } else {
      warnings_.push_back("class " + std::to_string(bank.classes[r]) +
                          ": zero-norm centroid excluded");
    }
  }
  if (keep.empty()) throw ConfigError("centroid classifier: no usable centroid");
  centroids_ = RealMatrix(keep.size(), bank.centroids.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    classes_.push_back(bank.classes[keep[k]]);
    const auto src = bank.centroids.row(keep[k]);
    std::copy(src.begin(), src.end(), centroids_.row(k).begin());
  }
}

RealVector CentroidClassifier::confidence(std::span<const double> x) const {
  RealVector logits(classes_.size());
  for (std::size_t k = 0; k < classes_.size(); ++k)
    logits[k] = cosine_similarity(x, centroids_.row(k)) / temperature_;
  const RealVector p = softmax(logits);
  RealVector out(static_cast<std::size_t>(class_count_), 0.0);
  for (std::size_t k = 0; k < classes_.size(); ++k) out[static_cast<std::size_t>(classes_[k])] = p[k];
  return out;
}

CentroidClassifier build_centroid_classifier(const CentroidBank& bank, double temperature,
                                             int class_count) {
  return CentroidClassifier(bank, temperature, class_count);
}

double masked_min_inconsistency(std::span<const double> p, int label) {
  double best = INFINITY;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double y = static_cast<int>(j) == label ? 1.0 : 0.0;
    best = std::min(best, 1.0 - y * p[j]);
  }
  return best;
}

ScoreSet inter_inconsistency(const RealMatrix& embeddings, const Dataset& ds,
                             const ConfidenceFn& classify) {
  check_rows(embeddings, ds);
  ScoreSet out;
  out.scores.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& u = ds.utterances[i];
    const auto e = embeddings.row(i);
    if (!(l2_norm(e) > 0.0)) {
      out.warnings.push_back("utterance " + std::to_string(u.utt_id) +
                             ": zero-norm embedding, scored 1");
      out.scores.push_back({u.utt_id, 1.0, NldMethod::InterClass});
      continue;
    }
    const RealVector p = classify(e);
    if (p.size() != static_cast<std::size_t>(ds.class_count))
      throw std::logic_error("inter_inconsistency: classifier output has wrong length");
    if (std::abs(sum(p) - 1.0) > 1e-6)
      throw std::logic_error("inter_inconsistency: classifier output is not normalized");
    const double direct = 1.0 - p[static_cast<std::size_t>(u.observed_class)];
    if (std::abs(direct - masked_min_inconsistency(p, u.observed_class)) > 1e-15)
      throw std::logic_error("inter_inconsistency: masked-min and direct forms disagree");
    out.scores.push_back({u.utt_id, direct, NldMethod::InterClass});
  }
  return out;
}

ScoreSet inter_inconsistency(const TrainedModel& model, const Dataset& ds,
                             double ge2e_temperature) {
  const RealMatrix embeddings = embed_dataset(model.embedder, ds);
  if (!is_ge2e(model.loss_config)) {
    if (loss_class_count(model.loss_config) != ds.class_count)
      throw DomainError("inter_inconsistency: model and dataset class counts differ");
    return inter_inconsistency(embeddings, ds, head_classifier(model));
  }
  const CentroidBank bank = compute_centroids(embeddings, ds);
  const CentroidClassifier cls(bank, ge2e_temperature, ds.class_count);
  ScoreSet out = inter_inconsistency(
      embeddings, ds, [&cls](std::span<const double> x) { return cls.confidence(x); });
  out.warnings.insert(out.warnings.begin(), cls.warnings().begin(), cls.warnings().end());
  return out;
}

std::size_t selection_count(double q, std::size_t n) {
  const double exact = q * static_cast<double>(n) / 100.0;
  return static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
}

DetectionResult rank_and_select(std::span<const InconsistencyScore> scores, double q,
                                std::size_t dataset_size) {
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("rank_and_select: q must lie in [0, 100]");
  if (scores.size() != dataset_size)
    throw DomainError("rank_and_select: need exactly one score per utterance");
  DetectionResult result;
  result.q_used = q;
  if (!scores.empty()) result.method = scores.front().method;
  std::vector<const InconsistencyScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  const std::size_t k = std::min(selection_count(q, dataset_size), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [](const InconsistencyScore* a, const InconsistencyScore* b) {
                      if (a->score != b->score) return a->score > b->score;
                      return a->utt_id < b->utt_id;
                    });
  for (std::size_t i = 0; i < k; ++i) result.predicted_noisy.push_back(order[i]->utt_id);
  return result;
}

DetectionResult detection_precision(DetectionResult result, const Dataset& ds) {
  std::unordered_set<std::int64_t> noisy;
  for (const auto& u : ds.utterances)
    if (u.is_noisy) noisy.insert(u.utt_id);
  std::size_t hits = 0;
  for (auto id : result.predicted_noisy) hits += noisy.contains(id) ? 1 : 0;
  result.precision.reset();
  result.recall.reset();
  if (!result.predicted_noisy.empty())
    result.precision = static_cast<double>(hits) / static_cast<double>(result.predicted_noisy.size());
  if (!noisy.empty())
    result.recall = static_cast<double>(hits) / static_cast<double>(noisy.size());
  return result;
}

Histogram export_score_histogram(std::span<const InconsistencyScore> scores, const Dataset& ds,
                                 int bins) {
  if (bins < 2) throw ConfigError("histogram: need at least 2 bins");
  const auto idx = index_by_id(ds);
  Histogram h;
  auto is_noisy = [&](const InconsistencyScore& s) {
    const auto it = idx.find(s.utt_id);
    if (it == idx.end())
      throw DomainError("histogram: utt_id " + std::to_string(s.utt_id) + " not in dataset");
    return it->second->is_noisy;
  };
  if (scores.empty()) throw DomainError("histogram: no scores");
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end(),
                                            [](const auto& a, const auto& b) {
                                              return a.score < b.score;
                                            });
  const double lo = mn->score;
  const double range = mx->score - lo;
  if (!(range > 0.0)) {
    h.warnings.push_back("all scores identical; degenerate single-bin histogram");
    HistogramBin bin{0.0, 1.0, 0, 0};
    for (const auto& s : scores) (is_noisy(s) ? bin.noisy : bin.clean)++;
    h.bins.push_back(bin);
    return h;
  }
  h.bins.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    h.bins[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / bins;
    h.bins[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / bins;
  }
  for (const auto& s : scores) {
    const double v = (s.score - lo) / range;
    const auto b = std::clamp(static_cast<int>(std::ceil(v * bins)) - 1, 0, bins - 1);
    auto& bin = h.bins[static_cast<std::size_t>(b)];
    (is_noisy(s) ? bin.noisy : bin.clean)++;
  }
  return h;
}

std::string scores_csv(std::span<const InconsistencyScore> scores, const Dataset& ds) {
  const auto idx = index_by_id(ds);
  std::string out = "utt_id,method,score,is_noisy_truth\n";
  for (const auto& s : scores) {
    const auto it = idx.find(s.utt_id);
    if (it == idx.end())
      throw DomainError("scores_csv: utt_id " + std::to_string(s.utt_id) + " not in dataset");
    out += std::to_string(s.utt_id) + "," + to_string(s.method) + "," + io::format_real(s.score) +
           "," + (it->second->is_noisy ? "1" : "0") + "\n";
  }
  return out;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,clean_count,noisy_count\n";
  for (const auto& b : h.bins)
    out += io::format_real(b.lo) + "," + io::format_real(b.hi) + "," + std::to_string(b.clean) +
           "," + std::to_string(b.noisy) + "\n";
  return out;
}

}  // namespace nldbench
