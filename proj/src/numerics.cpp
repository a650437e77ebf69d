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

#include "nldbench/numerics.h"

#include <algorithm>
#include <cmath>

#include "nldbench/errors.h"

namespace nldbench {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0)) throw DomainError("cosine_similarity: first argument has zero norm");
  if (!(nb > 0.0)) throw DomainError("cosine_similarity: second argument has zero norm");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

RealVector softmax(std::span<const double> z) {
  RealVector out(z.size());
  if (z.empty()) return out;
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double log_sum_exp(std::span<const double> z) {
  if (z.empty()) throw DomainError("log_sum_exp: empty input");
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - mx);
  return mx + std::log(total);
}

RealVector l2_normalize(std::span<const double> a) {
  const double n = l2_norm(a);
  if (!(n > 0.0)) throw DomainError("l2_normalize: zero-norm input");
  RealVector out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

RealVector mat_vec(const RealMatrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) throw DomainError("mat_vec: dimension mismatch");
  RealVector y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

double sum(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v;
  return acc;
}

}  // namespace nldbench
