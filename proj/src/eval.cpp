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

#include "nldbench/eval.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "nldbench/errors.h"
#include "nldbench/rng.h"

namespace nldbench {

namespace {

using Pair = std::pair<std::size_t, std::size_t>;  // dataset positions, first < second

Pair ordered(std::size_t a, std::size_t b) { return a < b ? Pair{a, b} : Pair{b, a}; }

// Draws `want` distinct pairs from a population of `available`, either by
// rejection or, when most of the population is wanted, by full enumeration.
template <class Draw, class Enumerate>
std::vector<Pair> draw_distinct(std::size_t want, std::size_t available, Rng& rng, Draw draw,
                                Enumerate enumerate) {
  std::vector<Pair> out;
  if (want * 2 > available) {
    std::vector<Pair> all = enumerate();
    for (std::size_t i = 0; i < want; ++i) {
      const auto j = i + rng.index(all.size() - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::set<Pair> seen;
  while (out.size() < want) {
    const Pair p = draw();
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<Trial> generate_trials(const Dataset& heldout, int pairs_per_kind,
                                   std::uint64_t seed) {
  if (pairs_per_kind < 1) throw ConfigError("generate_trials: pairs_per_kind must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < heldout.size(); ++i)
    by_class[heldout.utterances[i].true_class].push_back(i);
  if (by_class.size() < 2) throw ConfigError("generate_trials: need at least two classes");

  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<std::size_t> cumulative;  // target pair counts, running
  std::size_t target_available = 0;
  for (const auto& [cls, members] : by_class) {
    const std::size_t m = members.size();
    target_available += m * (m - 1) / 2;
    groups.push_back(&members);
    cumulative.push_back(target_available);
  }
  const std::size_t n = heldout.size();
  const std::size_t nontarget_available = n * (n - 1) / 2 - target_available;
  const auto want = static_cast<std::size_t>(pairs_per_kind);
  if (target_available < want)
    throw ConfigError("generate_trials: only " + std::to_string(target_available) +
                      " distinct target pairs exist, " + std::to_string(want) + " requested");
  if (nontarget_available < want)
    throw ConfigError("generate_trials: only " + std::to_string(nontarget_available) +
                      " distinct nontarget pairs exist, " + std::to_string(want) + " requested");

  Rng rng = Rng::derive(seed, "trials");
  const auto& utts = heldout.utterances;

  auto draw_target = [&]() {
    const std::size_t r = rng.index(target_available);
    const auto g = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const auto& members = *groups[g];
    const std::size_t a = rng.index(members.size());
    std::size_t b = rng.index(members.size() - 1);
    if (b >= a) ++b;
    return ordered(members[a], members[b]);
  };
  auto enumerate_target = [&]() {
    std::vector<Pair> all;
    for (const auto* members : groups)
      for (std::size_t a = 0; a < members->size(); ++a)
        for (std::size_t b = a + 1; b < members->size(); ++b)
          all.push_back(ordered((*members)[a], (*members)[b]));
    return all;
  };
  auto draw_nontarget = [&]() {
    for (;;) {
      const std::size_t a = rng.index(n);
      const std::size_t b = rng.index(n);
      if (utts[a].true_class != utts[b].true_class) return ordered(a, b);
    }
  };
  auto enumerate_nontarget = [&]() {
    std::vector<Pair> all;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (utts[a].true_class != utts[b].true_class) all.emplace_back(a, b);
    return all;
  };

  const auto targets = draw_distinct(want, target_available, rng, draw_target, enumerate_target);
  const auto nontargets =
      draw_distinct(want, nontarget_available, rng, draw_nontarget, enumerate_nontarget);

  std::vector<Trial> trials;
  trials.reserve(2 * want);
  auto emit = [&](const Pair& p, bool target) {
    std::int64_t a = utts[p.first].utt_id;
    std::int64_t b = utts[p.second].utt_id;
    if (a > b) std::swap(a, b);
    trials.push_back({a, b, target});
  };
  for (const auto& p : targets) emit(p, true);
  for (const auto& p : nontargets) emit(p, false);
  return trials;
}

TrialScores score_trials(const TrainedModel& model, const Dataset& heldout,
                         std::span<const Trial> trials) {
  std::unordered_map<std::int64_t, std::size_t> pos;
  for (std::size_t i = 0; i < heldout.size(); ++i) pos.emplace(heldout.utterances[i].utt_id, i);
  std::unordered_map<std::size_t, RealVector> cache;
  auto embedding = [&](std::int64_t id) -> const RealVector& {
    const auto it = pos.find(id);
    if (it == pos.end())
      throw DomainError("score_trials: utt_id " + std::to_string(id) + " not in held-out set");
    auto [c, inserted] = cache.try_emplace(it->second);
    if (inserted) c->second = embed(model.embedder, heldout.utterances[it->second].features);
    return c->second;
  };
  TrialScores out;
  for (const auto& t : trials) {
    const RealVector& a = embedding(t.enroll_utt_id);
    const RealVector& b = embedding(t.test_utt_id);
    if (!(l2_norm(a) > 0.0) || !(l2_norm(b) > 0.0)) {
      ++out.dropped;
      continue;
    }
    out.trials.push_back(t);
    out.scores.push_back(cosine_similarity(a, b));
  }
  if (out.dropped)
    out.warnings.push_back(std::to_string(out.dropped) +
                           " trial(s) dropped for zero-norm embeddings");
  return out;
}

EerResult compute_eer(std::span<const double> scores, const std::vector<bool>& is_target) {
  if (scores.size() != is_target.size())
    throw DomainError("compute_eer: score and label counts differ");
  std::vector<std::pair<double, bool>> items;
  items.reserve(scores.size());
  std::size_t n_target = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DomainError("compute_eer: non-finite score");
    items.emplace_back(scores[i], is_target[i]);
    n_target += is_target[i] ? 1 : 0;
  }
  const std::size_t n_nontarget = items.size() - n_target;
  if (n_target == 0 || n_nontarget == 0)
    throw DomainError("compute_eer: need at least one target and one nontarget trial");
  std::sort(items.begin(), items.end());
  if (items.front().first == items.back().first)
    throw DomainError("compute_eer: degenerate input, all scores identical");

  // Operating points at each distinct threshold, then +inf.
  struct Point {
    double threshold;
    double far;
    double frr;
  };
  std::vector<Point> points;
  std::size_t targets_below = 0;
  std::size_t nontargets_below = 0;
  for (std::size_t i = 0; i < items.size();) {
    const double tau = items[i].first;
    points.push_back({tau, static_cast<double>(n_nontarget - nontargets_below) / n_nontarget,
                      static_cast<double>(targets_below) / n_target});
    for (; i < items.size() && items[i].first == tau; ++i)
      (items[i].second ? targets_below : nontargets_below)++;
  }
  points.push_back({INFINITY, 0.0, 1.0});

  EerResult r;
  r.trial_count = items.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = points[i].far - points[i].frr;
    if (d > 0.0) continue;
    if (d == 0.0) {
      r.eer = points[i].far;
      r.threshold = points[i].threshold;
    } else {
      const Point& a = points[i - 1];
      const Point& b = points[i];
      const double da = a.far - a.frr;
      const double t = da / (da - d);
      r.eer = a.far + t * (b.far - a.far);
      r.threshold = std::isfinite(b.threshold) ? a.threshold + t * (b.threshold - a.threshold)
                                                : a.threshold;
    }
    break;
  }
  if (r.eer > 0.5)
    r.warnings.push_back("EER above 0.5: scorer is worse than chance (labels inverted?)");
  return r;
}

EerResult compute_eer(const TrialScores& scored) {
  std::vector<bool> labels;
  labels.reserve(scored.trials.size());
  for (const auto& t : scored.trials) labels.push_back(t.is_target);
  EerResult r = compute_eer(scored.scores, labels);
  r.warnings.insert(r.warnings.begin(), scored.warnings.begin(), scored.warnings.end());
  return r;
}

Dataset remove_utterances(const Dataset& ds, std::span<const std::int64_t> ids,
                          std::size_t* removed) {
  std::unordered_set<std::int64_t> drop(ids.begin(), ids.end());
  Dataset out = ds;
  out.utterances.clear();
  for (const auto& u : ds.utterances)
    if (!drop.contains(u.utt_id)) out.utterances.push_back(u);
  if (removed) *removed = ds.size() - out.size();
  return out;
}

RetrainReport retrain_after_removal(const Dataset& noisy, const DetectionResult& detection,
                                    const TrainConfig& cfg, const Dataset& heldout,
                                    std::span<const Trial> trials, const TrainedModel* before) {
  RetrainReport report;
  Dataset kept = remove_utterances(noisy, detection.predicted_noisy, &report.removed_count);
  report.unmatched_ids = detection.predicted_noisy.size() - report.removed_count;

  std::vector<std::size_t> counts(static_cast<std::size_t>(kept.class_count), 0);
  for (const auto& u : kept.utterances) ++counts[static_cast<std::size_t>(u.observed_class)];
  std::vector<std::int64_t> drop_ids;
  for (int c = 0; c < kept.class_count; ++c) {
    const auto cnt = counts[static_cast<std::size_t>(c)];
    if (cnt < static_cast<std::size_t>(cfg.utterances_per_speaker)) {
      report.dropped_classes.push_back(c);
      report.warnings.push_back("class " + std::to_string(c) + " left with " +
                                std::to_string(cnt) + " utterance(s); dropped from training");
    }
  }
  if (!report.dropped_classes.empty()) {
    for (const auto& u : kept.utterances)
      if (std::binary_search(report.dropped_classes.begin(), report.dropped_classes.end(),
                             u.observed_class))
        drop_ids.push_back(u.utt_id);
    kept = remove_utterances(kept, drop_ids);
  }
  if (kept.utterances.empty()) throw ConfigError("retrain: removal leaves an empty dataset");

  if (before) {
    report.before_model = *before;
  } else {
    report.before_model = train(noisy, cfg).model;
  }
  TrainResult retrained = train(kept, cfg);
  report.after_model = std::move(retrained.model);
  report.warnings.insert(report.warnings.end(), retrained.warnings.begin(),
                         retrained.warnings.end());

  report.before = compute_eer(score_trials(report.before_model, heldout, trials));
  report.after = compute_eer(score_trials(report.after_model, heldout, trials));
  return report;
}

std::string trials_csv(std::span<const Trial> trials) {
  std::string out = "enroll_id,test_id,is_target\n";
  for (const auto& t : trials)
    out += std::to_string(t.enroll_utt_id) + "," + std::to_string(t.test_utt_id) + "," +
           (t.is_target ? "1" : "0") + "\n";
  return out;
}

}  // namespace nldbench
