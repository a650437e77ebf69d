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

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

namespace oracle {

// Five-point central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x, std::size_t i, double h = 1e-4) {
  const double x0 = x[i];
  auto at = [&](double t) {
    x[i] = x0 + t;
    return f(x);
  };
  return (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
}

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradient entries
// from turning round-off into huge relative errors.
inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Plain-loop cosine, no clamping.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Mean per label, keyed by label.
inline std::map<int, std::vector<double>> centroids(const std::vector<std::vector<double>>& emb,
                                                    const std::vector<int>& labels) {
  std::map<int, std::vector<double>> sum;
  std::map<int, int> count;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    auto& s = sum[labels[i]];
    if (s.empty()) s.assign(emb[i].size(), 0.0);
    for (std::size_t k = 0; k < emb[i].size(); ++k) s[k] += emb[i][k];
    ++count[labels[i]];
  }
  for (auto& [c, s] : sum)
    for (double& v : s) v /= count[c];
  return sum;
}

// Top-k by full sort of (-score, id); k = smallest integer >= q n / 100
// found by counting rather than ceil().
inline std::set<std::int64_t> top_q(const std::vector<std::pair<std::int64_t, double>>& scores,
                                    double q) {
  const std::size_t n = scores.size();
  std::size_t k = 0;
  while (static_cast<double>(k) * 100.0 < q * static_cast<double>(n) - 1e-9) ++k;
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < k; ++i) out.insert(sorted[i].first);
  return out;
}

inline std::size_t intersection_size(const std::set<std::int64_t>& a,
                                     const std::set<std::int64_t>& b) {
  std::size_t n = 0;
  for (auto x : a) n += b.count(x);
  return n;
}

// EER by brute force: every midpoint between adjacent distinct scores (plus
// one threshold below and one above everything); the threshold minimizing
// |FAR - FRR| gives (FAR + FRR) / 2.
inline double midpoint_eer(const std::vector<double>& scores, const std::vector<bool>& target) {
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> thresholds = {s.front() - 1.0};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) thresholds.push_back(0.5 * (s[i] + s[i + 1]));
  thresholds.push_back(s.back() + 1.0);
  double nt = 0, nn = 0;
  for (bool t : target) (t ? nt : nn) += 1;
  double best_gap = 2.0, best = 0.0;
  for (double th : thresholds) {
    double fa = 0, fr = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (target[i] && scores[i] < th) fr += 1;
      if (!target[i] && scores[i] >= th) fa += 1;
    }
    const double far = fa / nn, frr = fr / nt;
    if (std::abs(far - frr) < best_gap) {
      best_gap = std::abs(far - frr);
      best = 0.5 * (far + frr);
    }
  }
  return best;
}

}  // namespace oracle
