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

#include "nldbench/losses.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nldbench/errors.h"

namespace nldbench {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_labels(const RealMatrix& emb, std::span<const int> labels, int class_count) {
  if (emb.rows() == 0) throw DomainError("loss: empty batch");
  if (labels.size() != emb.rows()) throw DomainError("loss: label count differs from batch size");
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw DomainError("loss: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(class_count) + ")");
}

ClassifierParams zeros_like(const ClassifierParams& p) {
  ClassifierParams g;
  g.weight = RealMatrix(p.weight.rows(), p.weight.cols());
  g.bias.assign(p.bias.size(), 0.0);
  return g;
}

// d(margin_target_cosine)/d(cosine), with the cone point at phi = 0 given
// the subgradient cos m.
double margin_target_slope(double c, double m, bool easy) {
  if (easy && c <= 0.0) return 1.0;
  if (c <= std::cos(std::numbers::pi - m)) return 1.0;
  const double sin_phi = std::sqrt(std::max(0.0, 1.0 - c * c));
  if (sin_phi < 1e-12) return std::cos(m);
  return std::cos(m) + c * std::sin(m) / sin_phi;
}

// Shared path of AAM and AAMSC. K = 1 reduces to plain AAM.
LossOutput margin_softmax(const RealMatrix& emb, std::span<const int> labels,
                          const ClassifierParams& params, int class_count, int subcenters,
                          double s, double m, bool easy) {
  check_labels(emb, labels, class_count);
  const std::size_t dim = emb.cols();
  const auto rows = static_cast<std::size_t>(class_count) * static_cast<std::size_t>(subcenters);
  if (params.weight.rows() != rows || params.weight.cols() != dim)
    throw DomainError("margin loss: weight shape does not match classes x sub-centers x dim");

  RealVector row_norm(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    row_norm[r] = l2_norm(params.weight.row(r));
    if (!(row_norm[r] > 0.0))
      throw DomainError("margin loss: weight row " + std::to_string(r) + " has zero norm");
  }

  const double batch = static_cast<double>(emb.rows());
  LossOutput out;
  out.grad_embeddings = RealMatrix(emb.rows(), dim);
  out.grad_params = zeros_like(params);

  RealVector xhat(dim), cosines(rows), logits(static_cast<std::size_t>(class_count));
  std::vector<std::size_t> chosen(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto x = emb.row(i);
    const double nx = l2_norm(x);
    if (!(nx > 0.0))
      throw DomainError("margin loss: embedding " + std::to_string(i) + " has zero norm");
    for (std::size_t k = 0; k < dim; ++k) xhat[k] = x[k] / nx;
    for (std::size_t r = 0; r < rows; ++r)
      cosines[r] = std::clamp(dot(params.weight.row(r), xhat) / row_norm[r], -1.0, 1.0);

    const auto y = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      // First maximum wins ties.
      std::size_t best = j * subcenters;
      for (std::size_t r = best + 1; r < (j + 1) * subcenters; ++r)
        if (cosines[r] > cosines[best]) best = r;
      chosen[j] = best;
      logits[j] = s * cosines[best];
    }
    const double cy = cosines[chosen[y]];
    logits[y] = s * margin_target_cosine(cy, m, easy);

    out.value += log_sum_exp(logits) - logits[y];
    const RealVector p = softmax(logits);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double g_logit = (p[j] - (j == y ? 1.0 : 0.0)) / batch;
      double g_cos = s * g_logit;
      if (j == y) g_cos *= margin_target_slope(cy, m, easy);
      if (g_cos == 0.0) continue;
      const std::size_t r = chosen[j];
      const double c = cosines[r];
      const auto w = params.weight.row(r);
      auto gx = out.grad_embeddings.row(i);
      auto gw = out.grad_params.weight.row(r);
      for (std::size_t k = 0; k < dim; ++k) {
        const double what = w[k] / row_norm[r];
        gx[k] += g_cos * (what - c * xhat[k]) / nx;
        gw[k] += g_cos * (xhat[k] - c * what) / row_norm[r];
      }
    }
  }
  out.value /= batch;
  return out;
}

}  // namespace

std::string loss_name(const LossConfig& cfg) {
  return std::visit(Overloaded{[](const CeConfig&) { return std::string("ce"); },
                               [](const AamConfig&) { return std::string("aam"); },
                               [](const AamscConfig&) { return std::string("aamsc"); },
                               [](const Ge2eConfig&) { return std::string("ge2e"); }},
                    cfg);
}

bool is_ge2e(const LossConfig& cfg) { return std::holds_alternative<Ge2eConfig>(cfg); }

bool uses_margin(const LossConfig& cfg) {
  return std::holds_alternative<AamConfig>(cfg) || std::holds_alternative<AamscConfig>(cfg);
}

int loss_class_count(const LossConfig& cfg) {
  return std::visit(Overloaded{[](const CeConfig& c) { return c.class_count; },
                               [](const AamConfig& c) { return c.class_count; },
                               [](const AamscConfig& c) { return c.class_count; },
                               [](const Ge2eConfig&) { return 0; }},
                    cfg);
}

void validate_loss_config(const LossConfig& cfg) {
  auto check_margin = [](int classes, double s, double m) {
    if (classes < 1) throw ConfigError("loss: class count must be positive");
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("loss: scale s must be > 0");
    if (!(m >= 0.0 && m < std::numbers::pi / 2))
      throw ConfigError("loss: margin m must lie in [0, pi/2)");
  };
  std::visit(Overloaded{[](const CeConfig& c) {
                          if (c.class_count < 1)
                            throw ConfigError("loss: class count must be positive");
                        },
                        [&](const AamConfig& c) { check_margin(c.class_count, c.scale, c.margin); },
                        [&](const AamscConfig& c) {
                          check_margin(c.class_count, c.scale, c.margin);
                          if (c.subcenters < 1) throw ConfigError("loss: K must be >= 1");
                        },
                        [](const Ge2eConfig& c) {
                          if (!std::isfinite(c.affine_weight) || !std::isfinite(c.affine_bias))
                            throw ConfigError("loss: GE2E affine terms must be finite");
                          if (c.affine_weight < kGe2eMinWeight)
                            throw ConfigError("loss: GE2E weight must be positive");
                        }},
             cfg);
}

LossConfig with_easy_margin(LossConfig cfg, bool on) {
  if (auto* a = std::get_if<AamConfig>(&cfg)) a->easy_margin = on;
  if (auto* a = std::get_if<AamscConfig>(&cfg)) a->easy_margin = on;
  return cfg;
}

ClassifierParams init_classifier(const LossConfig& cfg, int embed_dim, Rng& rng) {
  ClassifierParams p;
  if (const auto* g = std::get_if<Ge2eConfig>(&cfg)) {
    p.ge2e_weight = g->affine_weight;
    p.ge2e_bias = g->affine_bias;
    return p;
  }
  int rows = loss_class_count(cfg);
  if (const auto* a = std::get_if<AamscConfig>(&cfg)) rows *= a->subcenters;
  p.weight = RealMatrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(embed_dim));
  const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (double& v : p.weight.data()) v = rng.uniform(-bound, bound);
  if (std::holds_alternative<CeConfig>(cfg)) p.bias.assign(static_cast<std::size_t>(rows), 0.0);
  return p;
}

double margin_target_cosine(double c, double m, bool easy) {
  if (easy && c <= 0.0) return c;
  if (c <= std::cos(std::numbers::pi - m)) return c - m * std::sin(m);
  const double sin_phi = std::sqrt(std::max(0.0, 1.0 - c * c));
  return c * std::cos(m) - sin_phi * std::sin(m);
}

LossOutput ce_loss(const RealMatrix& emb, std::span<const int> labels,
                   const ClassifierParams& params) {
  const auto classes = static_cast<int>(params.weight.rows());
  check_labels(emb, labels, classes);
  if (params.weight.cols() != emb.cols() || params.bias.size() != params.weight.rows())
    throw DomainError("ce_loss: parameter shape mismatch");
  const std::size_t dim = emb.cols();
  const double batch = static_cast<double>(emb.rows());
  LossOutput out;
  out.grad_embeddings = RealMatrix(emb.rows(), dim);
  out.grad_params = zeros_like(params);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto x = emb.row(i);
    RealVector logits = mat_vec(params.weight, x);
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += params.bias[j];
    const auto y = static_cast<std::size_t>(labels[i]);
    out.value += log_sum_exp(logits) - logits[y];
    const RealVector p = softmax(logits);
    auto gx = out.grad_embeddings.row(i);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double g = (p[j] - (j == y ? 1.0 : 0.0)) / batch;
      out.grad_params.bias[j] += g;
      const auto w = params.weight.row(j);
      auto gw = out.grad_params.weight.row(j);
      for (std::size_t k = 0; k < dim; ++k) {
        gw[k] += g * x[k];
        gx[k] += g * w[k];
      }
    }
  }
  out.value /= batch;
  return out;
}

LossOutput aam_loss(const RealMatrix& emb, std::span<const int> labels,
                    const ClassifierParams& params, const AamConfig& cfg) {
  return margin_softmax(emb, labels, params, cfg.class_count, 1, cfg.scale, cfg.margin,
                        cfg.easy_margin);
}

LossOutput aamsc_loss(const RealMatrix& emb, std::span<const int> labels,
                      const ClassifierParams& params, const AamscConfig& cfg) {
  if (cfg.subcenters < 1) throw ConfigError("aamsc_loss: K must be >= 1");
  return margin_softmax(emb, labels, params, cfg.class_count, cfg.subcenters, cfg.scale,
                        cfg.margin, cfg.easy_margin);
}

LossOutput ge2e_loss(const RealMatrix& emb, int speakers, int per_speaker,
                     const ClassifierParams& params) {
  if (per_speaker < 2)
    throw ConfigError("ge2e_loss: need at least 2 utterances per speaker (M >= 2)");
  if (speakers < 1) throw ConfigError("ge2e_loss: need at least one speaker");
  const auto n = static_cast<std::size_t>(speakers);
  const auto m = static_cast<std::size_t>(per_speaker);
  if (emb.rows() != n * m) throw DomainError("ge2e_loss: batch is not N x M");
  const std::size_t dim = emb.cols();
  const double w = params.ge2e_weight;
  const double b = params.ge2e_bias;
  const double total = static_cast<double>(n * m);

  RealMatrix centroids(n, dim);
  for (std::size_t j = 0; j < n; ++j) {
    auto c = centroids.row(j);
    for (std::size_t i = 0; i < m; ++i) {
      const auto e = emb.row(j * m + i);
      for (std::size_t k = 0; k < dim; ++k) c[k] += e[k];
    }
    for (double& v : c) v /= static_cast<double>(m);
  }
  RealVector centroid_norm(n);
  for (std::size_t j = 0; j < n; ++j) {
    centroid_norm[j] = l2_norm(centroids.row(j));
    if (!(centroid_norm[j] > 0.0))
      throw DomainError("ge2e_loss: centroid of speaker " + std::to_string(j) + " has zero norm");
  }

  LossOutput out;
  out.grad_embeddings = RealMatrix(emb.rows(), dim);
  // Gradients w.r.t. each full centroid, and w.r.t. the sum of each speaker's
  // self-excluded centroids (the latter spread over the group afterwards).
  RealMatrix g_centroid(n, dim);
  RealMatrix g_excluded(n, dim);

  RealVector excluded(dim), sims(n), cosines(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t row = j * m + i;
      const auto e = emb.row(row);
      const double ne = l2_norm(e);
      if (!(ne > 0.0))
        throw DomainError("ge2e_loss: embedding " + std::to_string(row) + " has zero norm");
      for (std::size_t k = 0; k < dim; ++k)
        excluded[k] = (static_cast<double>(m) * centroids(j, k) - e[k]) / static_cast<double>(m - 1);
      const double n_excl = l2_norm(excluded);
      if (!(n_excl > 0.0))
        throw DomainError("ge2e_loss: self-excluded centroid for row " + std::to_string(row) +
                          " has zero norm");
      for (std::size_t k = 0; k < n; ++k) {
        const double nc = k == j ? n_excl : centroid_norm[k];
        const std::span<const double> c =
            k == j ? std::span<const double>(excluded) : centroids.row(k);
        cosines[k] = std::clamp(dot(e, c) / (ne * nc), -1.0, 1.0);
        sims[k] = w * cosines[k] + b;
      }
      out.value += log_sum_exp(sims) - sims[j];
      const RealVector p = softmax(sims);
      auto ge = out.grad_embeddings.row(row);
      for (std::size_t k = 0; k < n; ++k) {
        const double g_sim = (p[k] - (k == j ? 1.0 : 0.0)) / total;
        out.grad_params.ge2e_weight += g_sim * cosines[k];
        out.grad_params.ge2e_bias += g_sim;
        const double g_cos = w * g_sim;
        const double nc = k == j ? n_excl : centroid_norm[k];
        const std::span<const double> c =
            k == j ? std::span<const double>(excluded) : centroids.row(k);
        const double cs = cosines[k];
        for (std::size_t d = 0; d < dim; ++d) {
          const double ehat = e[d] / ne;
          const double chat = c[d] / nc;
          ge[d] += g_cos * (chat - cs * ehat) / ne;
          const double gc = g_cos * (ehat - cs * chat) / nc;
          if (k == j) {
            // excluded = (sum of the group - e) / (M - 1)
            g_excluded(j, d) += gc / static_cast<double>(m - 1);
            ge[d] -= gc / static_cast<double>(m - 1);
          } else {
            g_centroid(k, d) += gc / static_cast<double>(m);
          }
        }
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      auto ge = out.grad_embeddings.row(j * m + i);
      for (std::size_t d = 0; d < dim; ++d) ge[d] += g_centroid(j, d) + g_excluded(j, d);
    }
  }
  out.value /= total;
  return out;
}

LossOutput compute_loss(const LossConfig& cfg, const RealMatrix& embeddings,
                        std::span<const int> labels, int speakers, int per_speaker,
                        const ClassifierParams& params) {
  return std::visit(
      Overloaded{[&](const CeConfig&) { return ce_loss(embeddings, labels, params); },
                 [&](const AamConfig& c) { return aam_loss(embeddings, labels, params, c); },
                 [&](const AamscConfig& c) { return aamsc_loss(embeddings, labels, params, c); },
                 [&](const Ge2eConfig&) {
                   return ge2e_loss(embeddings, speakers, per_speaker, params);
                 }},
      cfg);
}

RealVector classify_confidence(std::span<const double> x, const ClassifierParams& params,
                               const LossConfig& cfg) {
  if (is_ge2e(cfg))
    throw DomainError("classify_confidence: GE2E has no parametric classifier");
  if (x.size() != params.weight.cols()) throw DomainError("classify_confidence: dim mismatch");
  if (!(l2_norm(x) > 0.0)) throw DomainError("classify_confidence: zero-norm input");
  if (std::holds_alternative<CeConfig>(cfg)) {
    RealVector logits = mat_vec(params.weight, x);
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += params.bias[j];
    return softmax(logits);
  }
  const std::size_t k = std::holds_alternative<AamscConfig>(cfg)
                            ? static_cast<std::size_t>(std::get<AamscConfig>(cfg).subcenters)
                            : 1;
  const std::size_t classes = params.weight.rows() / k;
  RealVector best(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    best[j] = -1.0;
    for (std::size_t r = j * k; r < (j + 1) * k; ++r)
      best[j] = std::max(best[j], cosine_similarity(params.weight.row(r), x));
  }
  return softmax(best);
}

}  // namespace nldbench
