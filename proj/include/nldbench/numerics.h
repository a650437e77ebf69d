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

#include <cstddef>
#include <span>
#include <vector>

namespace nldbench {

using RealVector = std::vector<double>;

// Dense row-major matrix of doubles.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const RealMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

// a.b / (|a| |b|), clamped to [-1, 1]. Throws DomainError on a zero-norm
// argument, naming which one.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Max-shifted softmax; entries positive and summing to one.
RealVector softmax(std::span<const double> z);

// max(z) + ln sum exp(z - max(z)).
double log_sum_exp(std::span<const double> z);

// Throws DomainError on zero norm.
RealVector l2_normalize(std::span<const double> a);

// y = M x
RealVector mat_vec(const RealMatrix& m, std::span<const double> x);

// Fixed left-to-right element sum.
double sum(std::span<const double> a);

}  // namespace nldbench
