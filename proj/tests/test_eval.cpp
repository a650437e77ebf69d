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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nldbench/errors.h"
#include "nldbench/eval.h"
#include "nldbench/pipeline.h"
#include "oracles.h"

using namespace nldbench;

namespace {

TrainConfig tiny_config(int classes, std::int64_t steps) {
  TrainConfig cfg;
  cfg.loss = CeConfig{classes};
  cfg.speakers_per_batch = std::min(classes, 8);
  cfg.hidden_dims = {16};
  cfg.embed_dim = 8;
  cfg.total_steps = steps;
  cfg.seed = 3;
  return cfg;
}

std::vector<bool> labels_of(std::size_t targets, std::size_t nontargets) {
  std::vector<bool> v(targets, true);
  v.resize(targets + nontargets, false);
  return v;
}

}  // namespace

TEST_CASE("trial generation") {
  const Dataset held = generate_dataset(5, 6, 2, 4, 0.1, 1);
  const auto trials = generate_trials(held, 40, 9);
  std::size_t targets = 0;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (const auto& t : trials) {
    targets += t.is_target ? 1 : 0;
    CHECK(t.enroll_utt_id < t.test_utt_id);
    CHECK(seen.insert({t.enroll_utt_id, t.test_utt_id}).second);
    const int a = held.utterances[t.enroll_utt_id].true_class;
    const int b = held.utterances[t.test_utt_id].true_class;
    CHECK(t.is_target == (a == b));
  }
  CHECK(targets == 40);
  CHECK(trials.size() == 80);
  CHECK(trials == generate_trials(held, 40, 9));
  CHECK_FALSE(trials == generate_trials(held, 40, 10));

  SUBCASE("one utterance per class has no target pair") {
    const Dataset one = generate_dataset(2, 2, 1, 2, 0.1, 1);
    Dataset single = one;
    single.utterances = {one.utterances[0], one.utterances[2]};
    CHECK_THROWS_AS(generate_trials(single, 1, 0), ConfigError);
  }
  SUBCASE("asking for every available pair enumerates them") {
    // 5 classes x C(6,2) = 75 target pairs.
    CHECK(generate_trials(held, 75, 2).size() == 150);
    CHECK_THROWS_AS(generate_trials(held, 76, 2), ConfigError);
  }
}

TEST_CASE("trial scoring matches a direct cosine recomputation") {
  const Dataset held = generate_dataset(4, 5, 2, 4, 0.3, 2);
  const TrainedModel model = train(held, tiny_config(4, 0)).model;
  auto trials = generate_trials(held, 10, 1);
  trials.push_back({3, 3, true});
  const TrialScores s = score_trials(model, held, trials);
  REQUIRE(s.scores.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const RealVector a = embed(model.embedder, held.utterances[trials[i].enroll_utt_id].features);
    const RealVector b = embed(model.embedder, held.utterances[trials[i].test_utt_id].features);
    CHECK(s.scores[i] == doctest::Approx(oracle::cosine(a, b)).epsilon(1e-12));
    CHECK(std::abs(s.scores[i]) <= 1.0);
  }
  CHECK(s.scores.back() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("EER examples") {
  SUBCASE("perfectly separated") {
    const std::vector<double> s = {0.9, 0.8, 0.1, 0.2};
    const auto r = compute_eer(s, labels_of(2, 2));
    CHECK(r.eer == 0.0);
    CHECK(r.warnings.empty());
  }
  SUBCASE("interleaved") {
    const std::vector<double> s = {0.8, 0.3, 0.7, 0.2};
    CHECK(compute_eer(s, labels_of(2, 2)).eer == doctest::Approx(0.5));
    CHECK(oracle::midpoint_eer(s, labels_of(2, 2)) == doctest::Approx(0.5));
  }
  SUBCASE("inverted labels") {
    const std::vector<double> s = {0.1, 0.2, 0.9, 0.8};
    const auto r = compute_eer(s, labels_of(2, 2));
    CHECK(r.eer == doctest::Approx(1.0));
    CHECK_FALSE(r.warnings.empty());
  }
  SUBCASE("degenerate inputs") {
    const std::vector<double> same = {0.4, 0.4, 0.4};
    CHECK_THROWS_AS(compute_eer(same, labels_of(1, 2)), DomainError);
    const std::vector<double> s = {0.4, 0.5};
    CHECK_THROWS_AS(compute_eer(s, labels_of(2, 0)), DomainError);
    CHECK_THROWS_AS(compute_eer(s, labels_of(0, 2)), DomainError);
  }
}

TEST_CASE("EER properties on random score sets") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t half = 5 + rng.index(200);
    std::vector<double> s;
    const double shift = 2 * rng.uniform();
    for (std::size_t i = 0; i < half; ++i) s.push_back(rng.normal() + shift);
    for (std::size_t i = 0; i < half; ++i) s.push_back(rng.normal());
    const auto labels = labels_of(half, half);
    const double eer = compute_eer(s, labels).eer;
    CHECK(std::abs(eer - oracle::midpoint_eer(s, labels)) <= 1.0 / (2.0 * 2 * half));

    // Only the order of the scores matters.
    std::vector<double> warped;
    for (double x : s) warped.push_back(std::exp(3 * x) - 7);
    CHECK(compute_eer(warped, labels).eer == doctest::Approx(eer).epsilon(1e-12));
  }
}

TEST_CASE("removal bookkeeping") {
  const Dataset ds = generate_dataset(3, 4, 2, 3, 0.1, 4);
  std::size_t removed = 0;
  const std::vector<std::int64_t> ids = {0, 5, 5, 99};
  const Dataset out = remove_utterances(ds, ids, &removed);
  CHECK(removed == 2);
  CHECK(out.size() == ds.size() - 2);
}

TEST_CASE("retraining with an empty detection set reproduces a full retrain") {
  const Dataset clean = generate_dataset(4, 6, 2, 4, 0.1, 5);
  const Dataset noisy = apply_permute_noise(clean, {NoiseKind::Permute, 30, 5});
  const Dataset held = generate_dataset(4, 5, 2, 4, 0.1, 6);
  const auto trials = generate_trials(held, 10, 1);
  const TrainConfig cfg = tiny_config(4, 40);
  DetectionResult none;
  const RetrainReport r = retrain_after_removal(noisy, none, cfg, held, trials);
  CHECK(r.removed_count == 0);
  CHECK(r.after_model == train(noisy, cfg).model);
  CHECK(r.after.eer == r.before.eer);
}

TEST_CASE("removing everything is a configuration error") {
  const Dataset ds = generate_dataset(2, 3, 2, 3, 0.1, 4);
  const Dataset held = generate_dataset(2, 3, 2, 3, 0.1, 5);
  DetectionResult all;
  for (const auto& u : ds.utterances) all.predicted_noisy.push_back(u.utt_id);
  CHECK_THROWS_AS(
      retrain_after_removal(ds, all, tiny_config(2, 5), held, generate_trials(held, 3, 0)),
      ConfigError);
}

TEST_CASE("oracle removal of open-set noise does not hurt EER on average") {
  // Desk-scale defaults, CE, q = 50.
  RunConfig cfg;
  cfg.noise = {NoiseKind::OpenSet, 50.0};
  double before = 0.0, after = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const SimulatedData d = simulate_run(cfg, seed);
    DetectionResult oracle_det;
    for (const auto& u : d.noisy.utterances)
      if (u.is_noisy) oracle_det.predicted_noisy.push_back(u.utt_id);
    const auto trials = generate_trials(d.heldout.dataset, cfg.eval.pairs_per_kind, seed);
    const RetrainReport r =
        retrain_after_removal(d.noisy, oracle_det, train_config_for(cfg, seed, d.noisy.class_count),
                              d.heldout.dataset, trials);
    MESSAGE("seed " << seed << ": EER " << r.before.eer << " -> " << r.after.eer);
    before += r.before.eer / 3;
    after += r.after.eer / 3;
  }
  CHECK(after <= before);
}
