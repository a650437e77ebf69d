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

#include "nldbench/embedder.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "nldbench/errors.h"
#include "nldbench/io.h"

namespace nldbench {

namespace {

constexpr int kModelFormatVersion = 1;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

MlpParams init_mlp(const std::vector<int>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) throw ConfigError("mlp: need at least input and output dims");
  for (int d : layer_dims)
    if (d < 1) throw ConfigError("mlp: layer dims must be positive");
  MlpParams p;
  p.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(layer_dims[l]);
    const auto fan_out = static_cast<std::size_t>(layer_dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    RealMatrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    RealVector b(fan_out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& p) {
  MlpParams g;
  g.layer_dims = p.layer_dims;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.weights.emplace_back(p.weights[l].rows(), p.weights[l].cols());
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return g;
}

RealVector embed_traced(const MlpParams& params, std::span<const double> features,
                        MlpTrace& trace) {
  if (features.size() != static_cast<std::size_t>(params.input_dim()))
    throw DomainError("embed: feature dim " + std::to_string(features.size()) +
                      " does not match input dim " + std::to_string(params.input_dim()));
  trace.outputs.resize(params.weights.size() + 1);
  trace.outputs[0].assign(features.begin(), features.end());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    RealVector h = mat_vec(params.weights[l], trace.outputs[l]);
    const bool last = l + 1 == params.weights.size();
    for (std::size_t k = 0; k < h.size(); ++k) {
      h[k] += params.biases[l][k];
      if (!last) h[k] = std::tanh(h[k]);
    }
    trace.outputs[l + 1] = std::move(h);
  }
  return trace.outputs.back();
}

RealVector embed(const MlpParams& params, std::span<const double> features) {
  MlpTrace trace;
  return embed_traced(params, features, trace);
}

RealMatrix embed_dataset(const MlpParams& params, const Dataset& ds) {
  RealMatrix out(ds.size(), static_cast<std::size_t>(params.output_dim()));
  MlpTrace trace;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const RealVector e = embed_traced(params, ds.utterances[i].features, trace);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

RealVector backprop(const MlpParams& params, const MlpTrace& trace,
                    std::span<const double> grad_output, MlpParams& grads) {
  RealVector g(grad_output.begin(), grad_output.end());
  for (std::size_t l = params.weights.size(); l-- > 0;) {
    const bool last = l + 1 == params.weights.size();
    if (!last) {
      // tanh' = 1 - tanh^2, applied to this layer's output.
      const RealVector& out = trace.outputs[l + 1];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - out[k] * out[k];
    }
    const RealVector& in = trace.outputs[l];
    const RealMatrix& w = params.weights[l];
    RealMatrix& gw = grads.weights[l];
    RealVector& gb = grads.biases[l];
    RealVector g_in(in.size(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double gr = g[r];
      gb[r] += gr;
      auto gw_row = gw.row(r);
      const auto w_row = w.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) {
        gw_row[c] += gr * in[c];
        g_in[c] += gr * w_row[c];
      }
    }
    g = std::move(g_in);
  }
  return g;
}

void adam_step(std::span<const ParamBlock> blocks, AdamState& state) {
  for (const auto& b : blocks) {
    if (b.values.size() != b.grads.size())
      throw DomainError("adam_step: shape mismatch in block " + b.name);
    for (std::size_t i = 0; i < b.grads.size(); ++i)
      if (!std::isfinite(b.grads[i]))
        throw DivergenceError("adam_step: non-finite gradient in block '" + b.name +
                              "' at index " + std::to_string(i));
  }
  if (state.first_moment.empty()) {
    for (const auto& b : blocks) {
      state.first_moment.emplace_back(b.values.size(), 0.0);
      state.second_moment.emplace_back(b.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != blocks.size())
    throw DomainError("adam_step: block count differs from optimizer state");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    RealVector& m = state.first_moment[k];
    RealVector& v = state.second_moment[k];
    if (m.size() != b.values.size())
      throw DomainError("adam_step: state shape mismatch in block " + b.name);
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      b.values[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

BatchSampler::BatchSampler(const Dataset& ds, int speakers, int per_speaker)
    : ds_(&ds), speakers_(speakers), per_speaker_(per_speaker) {
  if (speakers < 1 || per_speaker < 1)
    throw ConfigError("sample_batch: N and M must be positive");
  members_.resize(static_cast<std::size_t>(ds.class_count));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int c = ds.utterances[i].observed_class;
    if (c < 0 || c >= ds.class_count) throw ValidationError("sample_batch: label out of range");
    members_[static_cast<std::size_t>(c)].push_back(i);
  }
  for (int c = 0; c < ds.class_count; ++c) {
    if (members_[static_cast<std::size_t>(c)].size() >= static_cast<std::size_t>(per_speaker))
      eligible_.push_back(c);
    else
      excluded_.push_back(c);
  }
  if (eligible_.size() < static_cast<std::size_t>(speakers))
    throw ConfigError("sample_batch: only " + std::to_string(eligible_.size()) +
                      " classes hold >= " + std::to_string(per_speaker) +
                      " utterances, need " + std::to_string(speakers));
}

Batch BatchSampler::sample(Rng& rng) const {
  Batch batch;
  batch.speakers = speakers_;
  batch.per_speaker = per_speaker_;
  const auto total = static_cast<std::size_t>(speakers_) * static_cast<std::size_t>(per_speaker_);
  batch.features = RealMatrix(total, static_cast<std::size_t>(ds_->feature_dim));
  batch.labels.reserve(total);
  batch.indices.reserve(total);

  // Partial Fisher-Yates draws without replacement.
  std::vector<int> classes = eligible_;
  std::vector<std::size_t> pool;
  for (int j = 0; j < speakers_; ++j) {
    const auto pick = j + rng.index(classes.size() - static_cast<std::size_t>(j));
    std::swap(classes[static_cast<std::size_t>(j)], classes[pick]);
    const int cls = classes[static_cast<std::size_t>(j)];
    pool = members_[static_cast<std::size_t>(cls)];
    for (int i = 0; i < per_speaker_; ++i) {
      const auto u = static_cast<std::size_t>(i) + rng.index(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[u]);
      const std::size_t idx = pool[static_cast<std::size_t>(i)];
      const auto& f = ds_->utterances[idx].features;
      std::copy(f.begin(), f.end(), batch.features.row(batch.indices.size()).begin());
      batch.indices.push_back(idx);
      batch.labels.push_back(cls);
    }
  }
  return batch;
}

Batch sample_batch(const Dataset& ds, int speakers, int per_speaker, Rng& rng) {
  return BatchSampler(ds, speakers, per_speaker).sample(rng);
}

void validate_train_config(const TrainConfig& cfg) {
  validate_loss_config(cfg.loss);
  if (cfg.total_steps < 0) throw ConfigError("train: total_steps must be >= 0");
  if (cfg.speakers_per_batch < 1) throw ConfigError("train: N must be >= 1");
  if (is_ge2e(cfg.loss)) {
    if (cfg.utterances_per_speaker < 2)
      throw ConfigError("train: GE2E needs M >= 2 utterances per speaker");
  } else if (cfg.utterances_per_speaker != 1) {
    throw ConfigError("train: classifier losses use M = 1 (N equals the batch size)");
  }
  if (!(cfg.easy_margin_fraction >= 0.0 && cfg.easy_margin_fraction <= 1.0))
    throw ConfigError("train: easy_margin_fraction must lie in [0, 1]");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw ConfigError("train: learning_rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
  if (cfg.embed_dim < 1) throw ConfigError("train: embed_dim must be positive");
  for (int h : cfg.hidden_dims)
    if (h < 1) throw ConfigError("train: hidden widths must be positive");
}

std::int64_t easy_margin_steps(const TrainConfig& cfg) {
  return static_cast<std::int64_t>(
      std::ceil(cfg.easy_margin_fraction * static_cast<double>(cfg.total_steps)));
}

nlohmann::json loss_config_to_json(const LossConfig& cfg) {
  return std::visit(
      Overloaded{[](const CeConfig& c) -> nlohmann::json {
                   return {{"type", "ce"}, {"classes", c.class_count}};
                 },
                 [](const AamConfig& c) -> nlohmann::json {
                   return {{"type", "aam"},      {"classes", c.class_count}, {"s", c.scale},
                           {"m", c.margin}, {"easy_margin", c.easy_margin}};
                 },
                 [](const AamscConfig& c) -> nlohmann::json {
                   return {{"type", "aamsc"},    {"classes", c.class_count},
                           {"s", c.scale},       {"m", c.margin},
                           {"K", c.subcenters},  {"easy_margin", c.easy_margin}};
                 },
                 [](const Ge2eConfig& c) -> nlohmann::json {
                   return {{"type", "ge2e"}, {"w", c.affine_weight}, {"b", c.affine_bias}};
                 }},
      cfg);
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "ce") return CeConfig{j.value("classes", 0)};
  if (type == "aam" || type == "nsl") {
    AamConfig c;
    c.class_count = j.value("classes", 0);
    c.scale = j.value("s", 30.0);
    c.margin = type == "nsl" ? 0.0 : j.value("m", 0.2);
    c.easy_margin = j.value("easy_margin", false);
    return c;
  }
  if (type == "aamsc") {
    AamscConfig c;
    c.class_count = j.value("classes", 0);
    c.scale = j.value("s", 30.0);
    c.margin = j.value("m", 0.2);
    c.subcenters = j.value("K", 3);
    c.easy_margin = j.value("easy_margin", false);
    return c;
  }
  if (type == "ge2e") return Ge2eConfig{j.value("w", 10.0), j.value("b", -5.0)};
  throw ConfigError("unknown loss type '" + type + "' (expected ce, aam, nsl, aamsc, ge2e)");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"total_steps", cfg.total_steps},
          {"speakers_per_batch", cfg.speakers_per_batch},
          {"utterances_per_speaker", cfg.utterances_per_speaker},
          {"loss", loss_config_to_json(cfg.loss)},
          {"easy_margin_fraction", cfg.easy_margin_fraction},
          {"seed", cfg.seed},
          {"learning_rate", cfg.learning_rate},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},
          {"hidden_dims", cfg.hidden_dims},
          {"embed_dim", cfg.embed_dim}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.total_steps = j.value("total_steps", cfg.total_steps);
  cfg.speakers_per_batch = j.value("speakers_per_batch", cfg.speakers_per_batch);
  cfg.utterances_per_speaker = j.value("utterances_per_speaker", cfg.utterances_per_speaker);
  if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
  cfg.easy_margin_fraction = j.value("easy_margin_fraction", cfg.easy_margin_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.hidden_dims = j.value("hidden_dims", cfg.hidden_dims);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  return cfg;
}

std::string config_digest(const nlohmann::json& j) {
  return io::sha256_hex(j.dump()).substr(0, 16);
}

namespace {

std::vector<ParamBlock> collect_blocks(MlpParams& p, const MlpParams& g, ClassifierParams& cp,
                                       const ClassifierParams& cg) {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    blocks.push_back({"layer" + std::to_string(l) + ".weight", p.weights[l].data(),
                      g.weights[l].data()});
    blocks.push_back({"layer" + std::to_string(l) + ".bias", p.biases[l], g.biases[l]});
  }
  if (!cp.weight.empty()) blocks.push_back({"classifier.weight", cp.weight.data(), cg.weight.data()});
  if (!cp.bias.empty()) blocks.push_back({"classifier.bias", cp.bias, cg.bias});
  if (cp.weight.empty()) {
    blocks.push_back({"ge2e.weight", {&cp.ge2e_weight, 1}, {&cg.ge2e_weight, 1}});
    blocks.push_back({"ge2e.bias", {&cp.ge2e_bias, 1}, {&cg.ge2e_bias, 1}});
  }
  return blocks;
}

bool params_finite(const TrainedModel& m) {
  for (std::size_t l = 0; l < m.embedder.weights.size(); ++l)
    if (!all_finite(m.embedder.weights[l].data()) || !all_finite(m.embedder.biases[l]))
      return false;
  return all_finite(m.classifier.weight.data()) && all_finite(m.classifier.bias) &&
         std::isfinite(m.classifier.ge2e_weight) && std::isfinite(m.classifier.ge2e_bias);
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  validate_train_config(cfg);
  const int classes = loss_class_count(cfg.loss);
  if (!is_ge2e(cfg.loss) && classes != ds.class_count)
    throw ConfigError("train: loss covers " + std::to_string(classes) +
                      " classes but the dataset has " + std::to_string(ds.class_count));

  const std::string digest = config_digest(train_config_to_json(cfg));
  TrainResult result;
  TrainedModel& model = result.model;
  model.loss_config = cfg.loss;
  model.manifest = {cfg.seed,   digest,    cfg.total_steps, cfg.learning_rate,
                    cfg.beta1,  cfg.beta2, cfg.epsilon};

  std::vector<int> dims = {ds.feature_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embed_dim);
  Rng init_rng = Rng::derive(cfg.seed, "train/init");
  model.embedder = init_mlp(dims, init_rng);
  model.classifier = init_classifier(cfg.loss, cfg.embed_dim, init_rng);
  if (cfg.total_steps == 0) return result;

  const BatchSampler sampler(ds, cfg.speakers_per_batch, cfg.utterances_per_speaker);
  for (int c : sampler.excluded_classes())
    result.warnings.push_back("class " + std::to_string(c) + " has fewer than M utterances; " +
                              "excluded from sampling");
  Rng batch_rng = Rng::derive(cfg.seed, "train/batches");
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.epsilon = cfg.epsilon;
  const std::int64_t easy_steps = easy_margin_steps(cfg);
  const bool margin_loss = uses_margin(cfg.loss);

  const auto batch_size = static_cast<std::size_t>(cfg.speakers_per_batch) *
                          static_cast<std::size_t>(cfg.utterances_per_speaker);
  std::vector<MlpTrace> traces(batch_size);
  RealMatrix embeddings(batch_size, static_cast<std::size_t>(cfg.embed_dim));
  result.log.reserve(static_cast<std::size_t>(cfg.total_steps));

  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    const Batch batch = sampler.sample(batch_rng);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const RealVector e = embed_traced(model.embedder, batch.features.row(i), traces[i]);
      std::copy(e.begin(), e.end(), embeddings.row(i).begin());
    }
    const bool easy = margin_loss && step < easy_steps;
    const LossConfig step_loss = margin_loss ? with_easy_margin(cfg.loss, easy) : cfg.loss;
    LossOutput out = compute_loss(step_loss, embeddings, batch.labels, batch.speakers,
                                  batch.per_speaker, model.classifier);
    if (!std::isfinite(out.value))
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step) +
                            " (config " + digest + ")");
    result.log.push_back({step, out.value, easy});

    MlpParams grads = zeros_like(model.embedder);
    for (std::size_t i = 0; i < batch_size; ++i)
      backprop(model.embedder, traces[i], out.grad_embeddings.row(i), grads);

    auto blocks = collect_blocks(model.embedder, grads, model.classifier, out.grad_params);
    try {
      adam_step(blocks, adam);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step) +
                            " (config " + digest + ")");
    }
    if (is_ge2e(cfg.loss))
      model.classifier.ge2e_weight = std::max(model.classifier.ge2e_weight, kGe2eMinWeight);
    if (!params_finite(model))
      throw DivergenceError("train: non-finite parameters after step " + std::to_string(step) +
                            " (config " + digest + ")");
  }
  return result;
}

std::string serialize_model(const TrainedModel& model) {
  std::string out = "{\"format_version\":" + std::to_string(kModelFormatVersion);
  out += ",\"layer_dims\":" + nlohmann::json(model.embedder.layer_dims).dump();
  out += ",\"layers\":[";
  for (std::size_t l = 0; l < model.embedder.weights.size(); ++l) {
    if (l) out += ',';
    out += "{\"weight\":";
    io::append_real_array(out, model.embedder.weights[l].data());
    out += ",\"bias\":";
    io::append_real_array(out, model.embedder.biases[l]);
    out += '}';
  }
  out += "],\"classifier\":{\"rows\":" + std::to_string(model.classifier.weight.rows());
  out += ",\"cols\":" + std::to_string(model.classifier.weight.cols());
  out += ",\"weight\":";
  io::append_real_array(out, model.classifier.weight.data());
  out += ",\"bias\":";
  io::append_real_array(out, model.classifier.bias);
  out += ",\"ge2e_weight\":" + io::format_real(model.classifier.ge2e_weight);
  out += ",\"ge2e_bias\":" + io::format_real(model.classifier.ge2e_bias);
  out += "},\"loss\":" + loss_config_to_json(model.loss_config).dump();
  const auto& m = model.manifest;
  out += ",\"manifest\":{\"seed\":" + std::to_string(m.seed);
  out += ",\"config_digest\":" + nlohmann::json(m.config_digest).dump();
  out += ",\"steps\":" + std::to_string(m.steps);
  out += ",\"learning_rate\":" + io::format_real(m.learning_rate);
  out += ",\"beta1\":" + io::format_real(m.beta1);
  out += ",\"beta2\":" + io::format_real(m.beta2);
  out += ",\"epsilon\":" + io::format_real(m.epsilon);
  out += "}}\n";
  return out;
}

TrainedModel parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: malformed JSON: ") + e.what(), 0);
  }
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion)
      throw ParseError("model: unsupported format_version", 0);
    TrainedModel model;
    auto& mlp = model.embedder;
    mlp.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    const auto& layers = j.at("layers");
    if (mlp.layer_dims.size() < 2 || layers.size() + 1 != mlp.layer_dims.size())
      throw ValidationError("model: layer count does not match layer_dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto rows = static_cast<std::size_t>(mlp.layer_dims[l + 1]);
      const auto cols = static_cast<std::size_t>(mlp.layer_dims[l]);
      RealMatrix w(rows, cols);
      w.data() = layers[l].at("weight").get<RealVector>();
      RealVector b = layers[l].at("bias").get<RealVector>();
      if (w.data().size() != rows * cols || b.size() != rows)
        throw ValidationError("model: layer " + std::to_string(l) + " shape mismatch");
      mlp.weights.push_back(std::move(w));
      mlp.biases.push_back(std::move(b));
    }
    const auto& cj = j.at("classifier");
    model.classifier.weight =
        RealMatrix(cj.at("rows").get<std::size_t>(), cj.at("cols").get<std::size_t>());
    model.classifier.weight.data() = cj.at("weight").get<RealVector>();
    if (model.classifier.weight.data().size() !=
        model.classifier.weight.rows() * model.classifier.weight.cols())
      throw ValidationError("model: classifier weight shape mismatch");
    model.classifier.bias = cj.at("bias").get<RealVector>();
    model.classifier.ge2e_weight = cj.at("ge2e_weight").get<double>();
    model.classifier.ge2e_bias = cj.at("ge2e_bias").get<double>();
    model.loss_config = loss_config_from_json(j.at("loss"));
    const auto& mj = j.at("manifest");
    model.manifest.seed = mj.at("seed").get<std::uint64_t>();
    model.manifest.config_digest = mj.at("config_digest").get<std::string>();
    model.manifest.steps = mj.at("steps").get<std::int64_t>();
    model.manifest.learning_rate = mj.at("learning_rate").get<double>();
    model.manifest.beta1 = mj.at("beta1").get<double>();
    model.manifest.beta2 = mj.at("beta2").get<double>();
    model.manifest.epsilon = mj.at("epsilon").get<double>();

    if (!is_ge2e(model.loss_config)) {
      int rows = loss_class_count(model.loss_config);
      if (const auto* a = std::get_if<AamscConfig>(&model.loss_config)) rows *= a->subcenters;
      if (model.classifier.weight.rows() != static_cast<std::size_t>(rows) ||
          model.classifier.weight.cols() != static_cast<std::size_t>(mlp.output_dim()))
        throw ValidationError("model: classifier shape inconsistent with loss config");
      const bool ce = std::holds_alternative<CeConfig>(model.loss_config);
      if (model.classifier.bias.size() != (ce ? static_cast<std::size_t>(rows) : 0))
        throw ValidationError("model: classifier bias inconsistent with loss config");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: bad field: ") + e.what(), 0);
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  io::write_file(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
  return parse_model(io::read_file(path));
}

std::string serialize_loss_log(std::span<const TrainLogEntry> log) {
  std::string out = "step,loss\n";
  for (const auto& e : log) out += std::to_string(e.step) + "," + io::format_real(e.loss) + "\n";
  return out;
}

}  // namespace nldbench
