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

#include "nldbench/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "nldbench/errors.h"
#include "nldbench/eval.h"
#include "nldbench/io.h"
#include "nldbench/rng.h"

namespace nldbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kConfigFormatVersion = 1;

// Typed access to a config object with field paths in every error.
class Fields {
 public:
  Fields(const json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object()) throw ConfigError("config field '" + path_ + "': expected an object");
    for (const auto& [key, value] : obj.items())
      if (!allowed.contains(key))
        throw ConfigError("config field '" + name(key) + "': unknown field");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& raw(const std::string& key) const { return obj_.at(key); }
  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!obj_.contains(key)) return fallback;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config field '" + name(key) + "': wrong type");
    }
  }

 private:
  const json& obj_;
  std::string path_;
};

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError("config field '" + field + "': " + msg);
}

LossConfig parse_loss(const json& j, const std::string& path) {
  const Fields f(j, path, {"type", "classes", "s", "m", "K", "easy_margin", "w", "b"});
  require(f.has("type"), path + ".type", "missing");
  const auto type = f.get<std::string>("type", "");
  try {
    return loss_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + path + ".type': " + e.what());
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + "': wrong type in loss parameters");
  }
}

struct Artifact {
  std::string path;  // relative to the run directory
  std::string sha256;
};

json load_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) return json::object();
  try {
    return json::parse(io::read_file(p));
  } catch (const json::exception&) {
    return json::object();
  }
}

void record_stage(const fs::path& dir, const RunConfig& cfg, std::uint64_t seed,
                  const std::string& stage, const std::vector<fs::path>& files, double seconds,
                  json extra = json::object()) {
  json manifest = load_manifest(dir);
  manifest["tool_version"] = kToolVersion;
  manifest["config_digest"] = run_config_digest(cfg);
  manifest["seed"] = seed;
  json artifacts = json::array();
  for (const auto& f : files) {
    // Validated by re-reading what was written.
    artifacts.push_back({{"path", fs::relative(f, dir).generic_string()},
                         {"sha256", io::sha256_file(f)}});
  }
  extra["artifacts"] = artifacts;
  extra["seconds"] = seconds;
  manifest["stages"][stage] = extra;
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_config_copy(const RunConfig& cfg, const fs::path& dir) {
  io::write_file(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void forward(const WarningSink& warn, const std::vector<std::string>& warnings,
             const std::string& prefix) {
  if (!warn) return;
  for (const auto& w : warnings) warn(prefix + w);
}

std::uint64_t stage_seed(std::uint64_t seed, const char* stage) {
  return Rng::derive(seed, stage).next_u64();
}

void check_model_matches(const TrainedModel& model, const Dataset& ds) {
  if (model.embedder.input_dim() != ds.feature_dim)
    throw ValidationError("model input dim " + std::to_string(model.embedder.input_dim()) +
                          " does not match dataset feature dim " +
                          std::to_string(ds.feature_dim));
  if (!is_ge2e(model.loss_config) && loss_class_count(model.loss_config) != ds.class_count)
    throw ValidationError("model covers " + std::to_string(loss_class_count(model.loss_config)) +
                          " classes but dataset has " + std::to_string(ds.class_count));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

RunConfig parse_run_config(const json& j) {
  const Fields top(j, "", {"format_version", "dataset", "noise", "train", "detect", "eval", "seeds"});
  require(top.get<int>("format_version", -1) == kConfigFormatVersion, "format_version",
          "must be " + std::to_string(kConfigFormatVersion));
  RunConfig cfg;
  if (top.has("dataset")) {
    const Fields f(top.raw("dataset"), "dataset",
                   {"classes", "per_class", "latent_dim", "feature_dim", "within_class_spread",
                    "aux_classes", "aux_per_class", "heldout_classes", "heldout_per_class"});
    auto& g = cfg.dataset.generator;
    g.class_count = f.get("classes", g.class_count);
    g.per_class = f.get("per_class", g.per_class);
    g.latent_dim = f.get("latent_dim", g.latent_dim);
    g.feature_dim = f.get("feature_dim", g.feature_dim);
    g.within_class_spread = f.get("within_class_spread", g.within_class_spread);
    cfg.dataset.aux_classes = f.get("aux_classes", cfg.dataset.aux_classes);
    cfg.dataset.aux_per_class = f.get("aux_per_class", cfg.dataset.aux_per_class);
    cfg.dataset.heldout_classes = f.get("heldout_classes", cfg.dataset.heldout_classes);
    cfg.dataset.heldout_per_class = f.get("heldout_per_class", cfg.dataset.heldout_per_class);
  }
  if (top.has("noise")) {
    const Fields f(top.raw("noise"), "noise", {"kind", "level"});
    try {
      cfg.noise.kind = parse_noise_kind(f.get<std::string>("kind", "permute"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config field 'noise.kind': ") + e.what());
    }
    cfg.noise.level = f.get("level", cfg.noise.level);
  }
  if (top.has("train")) {
    const Fields f(top.raw("train"), "train",
                   {"loss", "total_steps", "speakers_per_batch", "utterances_per_speaker",
                    "easy_margin_fraction", "learning_rate", "beta1", "beta2", "epsilon",
                    "hidden_dims", "embed_dim"});
    auto& t = cfg.train;
    if (f.has("loss")) t.loss = parse_loss(f.raw("loss"), "train.loss");
    t.total_steps = f.get("total_steps", t.total_steps);
    t.speakers_per_batch = f.get("speakers_per_batch", t.speakers_per_batch);
    t.utterances_per_speaker = f.get("utterances_per_speaker", t.utterances_per_speaker);
    t.easy_margin_fraction = f.get("easy_margin_fraction", t.easy_margin_fraction);
    t.learning_rate = f.get("learning_rate", t.learning_rate);
    t.beta1 = f.get("beta1", t.beta1);
    t.beta2 = f.get("beta2", t.beta2);
    t.epsilon = f.get("epsilon", t.epsilon);
    t.hidden_dims = f.get("hidden_dims", t.hidden_dims);
    t.embed_dim = f.get("embed_dim", t.embed_dim);
  }
  if (top.has("detect")) {
    const Fields f(top.raw("detect"), "detect", {"methods", "q", "temperature", "histogram_bins"});
    if (f.has("methods")) {
      cfg.detect.methods.clear();
      for (const auto& m : f.get<std::vector<std::string>>("methods", {})) {
        try {
          cfg.detect.methods.push_back(parse_nld_method(m));
        } catch (const ConfigError& e) {
          throw ConfigError(std::string("config field 'detect.methods': ") + e.what());
        }
      }
    }
    if (f.has("q")) cfg.detect.q = f.get<double>("q", 0.0);
    cfg.detect.temperature = f.get("temperature", cfg.detect.temperature);
    cfg.detect.histogram_bins = f.get("histogram_bins", cfg.detect.histogram_bins);
  }
  if (top.has("eval")) {
    const Fields f(top.raw("eval"), "eval", {"pairs_per_kind"});
    cfg.eval.pairs_per_kind = f.get("pairs_per_kind", cfg.eval.pairs_per_kind);
  }
  cfg.seeds = top.get("seeds", cfg.seeds);
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": malformed JSON: " + e.what());
  }
  return parse_run_config(j);
}

void validate_run_config(const RunConfig& cfg) {
  const auto& g = cfg.dataset.generator;
  require(g.class_count >= 2, "dataset.classes", "must be >= 2");
  require(g.per_class >= 2, "dataset.per_class", "must be >= 2");
  require(g.latent_dim >= 1, "dataset.latent_dim", "must be >= 1");
  require(g.feature_dim >= g.latent_dim, "dataset.feature_dim", "must be >= latent_dim");
  require(g.within_class_spread >= 0.0 && std::isfinite(g.within_class_spread),
          "dataset.within_class_spread", "must be finite and >= 0");
  require(cfg.dataset.aux_classes >= 2, "dataset.aux_classes", "must be >= 2");
  require(cfg.dataset.aux_per_class >= 2, "dataset.aux_per_class", "must be >= 2");
  require(cfg.dataset.heldout_classes >= 2, "dataset.heldout_classes", "must be >= 2");
  require(cfg.dataset.heldout_per_class >= 2, "dataset.heldout_per_class", "must be >= 2");
  require(cfg.dataset.heldout_classes <= cfg.dataset.aux_classes, "dataset.heldout_classes",
          "must be <= dataset.aux_classes");
  require(cfg.noise.level >= 0.0 && cfg.noise.level <= 100.0, "noise.level",
          "must lie in [0, 100]");

  const int loss_classes = loss_class_count(cfg.train.loss);
  require(is_ge2e(cfg.train.loss) || loss_classes == 0 || loss_classes == g.class_count,
          "train.loss.classes", "must equal dataset.classes");
  try {
    validate_train_config(train_config_for(cfg, 0, g.class_count));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config field 'train': ") + e.what());
  }
  require(cfg.train.speakers_per_batch <= g.class_count, "train.speakers_per_batch",
          "cannot exceed dataset.classes");

  require(!cfg.detect.methods.empty(), "detect.methods", "must not be empty");
  if (cfg.detect.q)
    require(*cfg.detect.q > 0.0 && *cfg.detect.q <= 100.0, "detect.q", "must lie in (0, 100]");
  require(cfg.detect.temperature > 0.0, "detect.temperature", "must be > 0");
  require(cfg.detect.histogram_bins >= 2, "detect.histogram_bins", "must be >= 2");
  require(cfg.eval.pairs_per_kind >= 1, "eval.pairs_per_kind", "must be >= 1");
  require(!cfg.seeds.empty(), "seeds", "must not be empty");
}

json run_config_to_json(const RunConfig& cfg) {
  const auto& g = cfg.dataset.generator;
  json methods = json::array();
  for (auto m : cfg.detect.methods) methods.push_back(to_string(m));
  json train = train_config_to_json(cfg.train);
  train.erase("seed");
  json detect = {{"methods", methods},
                 {"temperature", cfg.detect.temperature},
                 {"histogram_bins", cfg.detect.histogram_bins}};
  if (cfg.detect.q) detect["q"] = *cfg.detect.q;
  return {{"format_version", kConfigFormatVersion},
          {"dataset",
           {{"classes", g.class_count},
            {"per_class", g.per_class},
            {"latent_dim", g.latent_dim},
            {"feature_dim", g.feature_dim},
            {"within_class_spread", g.within_class_spread},
            {"aux_classes", cfg.dataset.aux_classes},
            {"aux_per_class", cfg.dataset.aux_per_class},
            {"heldout_classes", cfg.dataset.heldout_classes},
            {"heldout_per_class", cfg.dataset.heldout_per_class}}},
          {"noise", {{"kind", to_string(cfg.noise.kind)}, {"level", cfg.noise.level}}},
          {"train", train},
          {"detect", detect},
          {"eval", {{"pairs_per_kind", cfg.eval.pairs_per_kind}}},
          {"seeds", cfg.seeds}};
}

std::string run_config_digest(const RunConfig& cfg) {
  json j = run_config_to_json(cfg);
  j.erase("seeds");
  return config_digest(j);
}

TrainConfig train_config_for(const RunConfig& cfg, std::uint64_t seed, int class_count) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  std::visit(
      [&](auto& c) {
        if constexpr (requires { c.class_count; }) {
          if (c.class_count == 0) c.class_count = class_count;
        }
      },
      t.loss);
  return t;
}

SimulatedData simulate_run(const RunConfig& cfg, std::uint64_t seed) {
  SimulatedData d;
  const auto& p = cfg.dataset;
  d.clean = generate_corpus(p.generator, stage_seed(seed, "simulate/clean"));
  d.aux = generate_companion(d.clean, p.aux_classes, p.aux_per_class,
                             stage_seed(seed, "simulate/aux"), d.clean.classes);
  // Held-out speakers are drawn from the auxiliary population, never from training classes.
  d.heldout = resample_corpus(d.aux, p.heldout_classes, p.heldout_per_class,
                              stage_seed(seed, "simulate/heldout"));
  const NoiseSpec spec{cfg.noise.kind, cfg.noise.level, seed};
  d.noisy = cfg.noise.kind == NoiseKind::Permute
                ? apply_permute_noise(d.clean.dataset, spec)
                : apply_openset_noise(d.clean.dataset, d.aux.dataset, spec);
  return d;
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

SimulateSummary cmd_simulate(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                             const WarningSink&) {
  const Stopwatch clock;
  const SimulatedData d = simulate_run(cfg, seed);
  const fs::path dir = paths.dir;
  const std::vector<fs::path> files = {dir / "clean.jsonl", dir / "aux.jsonl",
                                       dir / "noisy.jsonl", dir / "heldout.jsonl",
                                       dir / "config.json"};
  save_dataset(d.clean.dataset, files[0]);
  save_dataset(d.aux.dataset, files[1]);
  save_dataset(d.noisy, files[2]);
  save_dataset(d.heldout.dataset, files[3]);
  write_config_copy(cfg, dir);
  for (std::size_t i = 0; i < 4; ++i) load_dataset(files[i]);
  SimulateSummary summary{d.noisy.size(), d.noisy.noisy_count()};
  record_stage(dir, cfg, seed, "simulate", files, clock.seconds(),
               {{"utterances", summary.utterances}, {"noisy_count", summary.noisy_count}});
  return summary;
}

void cmd_train(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
               const WarningSink& warn) {
  const Stopwatch clock;
  const Dataset ds = load_dataset(paths.dataset_path());
  const TrainConfig tcfg = train_config_for(cfg, seed, ds.class_count);
  const TrainResult result = train(ds, tcfg);
  forward(warn, result.warnings, "train: ");
  const fs::path model_file = paths.dir / "model.json";
  const fs::path log_file = paths.dir / "loss.csv";
  save_model(result.model, model_file);
  io::write_file(log_file, serialize_loss_log(result.log));
  write_config_copy(cfg, paths.dir);
  if (!(load_model(model_file) == result.model))
    throw ValidationError("train: model file did not round-trip");
  record_stage(paths.dir, cfg, seed, "train", {model_file, log_file, paths.dir / "config.json"},
               clock.seconds(),
               {{"dataset_sha256", io::sha256_file(paths.dataset_path())},
                {"easy_margin_steps", uses_margin(tcfg.loss) ? easy_margin_steps(tcfg) : 0}});
}

std::vector<DetectionResult> cmd_detect(const RunConfig& cfg, std::uint64_t seed,
                                        const RunPaths& paths, const WarningSink& warn) {
  const Stopwatch clock;
  const double q = cfg.detection_q();
  if (!(q > 0.0 && q <= 100.0))
    throw ConfigError("config field 'detect.q': must lie in (0, 100] (got " +
                      io::format_real(q) + ")");
  const Dataset ds = load_dataset(paths.dataset_path());
  const TrainedModel model = load_model(paths.model_path());
  check_model_matches(model, ds);

  const RealMatrix embeddings = embed_dataset(model.embedder, ds);
  const CentroidBank bank = compute_centroids(embeddings, ds);
  forward(warn, bank.warnings, "detect: ");

  struct Output {
    std::string name;
    std::string content;
  };
  std::vector<Output> outputs;
  std::vector<DetectionResult> results;
  for (const NldMethod method : cfg.detect.methods) {
    ScoreSet scores;
    if (method == NldMethod::IntraClass) {
      scores = intra_inconsistency(embeddings, ds, bank);
    } else if (is_ge2e(model.loss_config)) {
      const CentroidClassifier cls(bank, cfg.detect.temperature, ds.class_count);
      forward(warn, cls.warnings(), "detect: ");
      scores = inter_inconsistency(embeddings, ds,
                                   [&cls](std::span<const double> x) { return cls.confidence(x); });
    } else {
      scores = inter_inconsistency(embeddings, ds, head_classifier(model));
    }
    forward(warn, scores.warnings, "detect: ");
    DetectionResult r = detection_precision(rank_and_select(scores.scores, q, ds.size()), ds);
    r.method = method;
    const Histogram hist = export_score_histogram(scores.scores, ds, cfg.detect.histogram_bins);
    forward(warn, hist.warnings, "detect: ");

    const std::string m = to_string(method);
    json report = {{"method", m},
                   {"q", q},
                   {"selected_count", r.predicted_noisy.size()},
                   {"precision", optional_json(r.precision)},
                   {"recall", optional_json(r.recall)},
                   {"seed", seed},
                   {"config_digest", run_config_digest(cfg)},
                   {"model_digest", io::sha256_file(paths.model_path())},
                   {"selected_ids", r.predicted_noisy}};
    outputs.push_back({"scores_" + m + ".csv", scores_csv(scores.scores, ds)});
    outputs.push_back({"detection_" + m + ".json", report.dump(2) + "\n"});
    outputs.push_back({"histogram_" + m + ".csv", histogram_csv(hist)});
    results.push_back(std::move(r));
  }
  std::vector<fs::path> files;
  for (const auto& o : outputs) {
    io::write_file(paths.dir / o.name, o.content);
    files.push_back(paths.dir / o.name);
  }
  write_config_copy(cfg, paths.dir);
  files.push_back(paths.dir / "config.json");
  record_stage(paths.dir, cfg, seed, "detect", files, clock.seconds());
  return results;
}

EerResult cmd_eval(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                   const WarningSink& warn) {
  const Stopwatch clock;
  const TrainedModel model = load_model(paths.model_path());
  const Dataset heldout = load_dataset(paths.heldout_path());
  if (model.embedder.input_dim() != heldout.feature_dim)
    throw ValidationError("model input dim does not match held-out feature dim");
  const std::vector<Trial> trials = generate_trials(heldout, cfg.eval.pairs_per_kind, seed);
  const TrialScores scored = score_trials(model, heldout, trials);
  const EerResult eer = compute_eer(scored);
  forward(warn, eer.warnings, "eval: ");
  json report = {{"eer", eer.eer},
                 {"threshold", eer.threshold},
                 {"trial_count", eer.trial_count},
                 {"dropped_trials", scored.dropped},
                 {"interpolation", "linear"},
                 {"model_digest", io::sha256_file(paths.model_path())}};
  const fs::path trials_file = paths.dir / "trials.csv";
  const fs::path report_file = paths.dir / "eer.json";
  io::write_file(trials_file, trials_csv(trials));
  io::write_file(report_file, report.dump(2) + "\n");
  write_config_copy(cfg, paths.dir);
  record_stage(paths.dir, cfg, seed, "eval", {trials_file, report_file, paths.dir / "config.json"},
               clock.seconds());
  return eer;
}

RetrainReport cmd_retrain(const RunConfig& cfg, std::uint64_t seed, const RunPaths& paths,
                          const WarningSink& warn) {
  const Stopwatch clock;
  const Dataset ds = load_dataset(paths.dataset_path());
  const TrainedModel before = load_model(paths.model_path());
  check_model_matches(before, ds);
  const Dataset heldout = load_dataset(paths.heldout_path());
  const fs::path detection_file =
      paths.detection.value_or(paths.dir / ("detection_" + to_string(cfg.detect.methods.front()) + ".json"));
  json det;
  try {
    det = json::parse(io::read_file(detection_file));
  } catch (const json::exception& e) {
    throw ParseError("detection report " + detection_file.string() + ": " + e.what(), 0);
  }
  DetectionResult detection;
  try {
    detection.method = parse_nld_method(det.at("method").get<std::string>());
    detection.q_used = det.at("q").get<double>();
    detection.predicted_noisy = det.at("selected_ids").get<std::vector<std::int64_t>>();
  } catch (const json::exception& e) {
    throw ParseError("detection report " + detection_file.string() + ": " + e.what(), 0);
  }
  if (detection.predicted_noisy.size() != det.value("selected_count", std::size_t{0}))
    throw ValidationError("detection report: selected_count disagrees with selected_ids");
  std::unordered_set<std::int64_t> ids;
  for (const auto& u : ds.utterances) ids.insert(u.utt_id);
  for (auto id : detection.predicted_noisy)
    if (!ids.contains(id))
      throw ValidationError("detection report does not match dataset: unknown utt_id " +
                            std::to_string(id));

  const TrainConfig tcfg = train_config_for(cfg, seed, ds.class_count);
  const std::vector<Trial> trials = generate_trials(heldout, cfg.eval.pairs_per_kind, seed);
  RetrainReport report = retrain_after_removal(ds, detection, tcfg, heldout, trials, &before);
  forward(warn, report.warnings, "retrain: ");

  const fs::path model_file = paths.dir / "model_retrained.json";
  const fs::path report_file = paths.dir / "retrain.json";
  save_model(report.after_model, model_file);
  auto eer_json = [](const EerResult& e) {
    return json{{"eer", e.eer}, {"threshold", e.threshold}, {"trial_count", e.trial_count}};
  };
  json out = {{"method", to_string(detection.method)},
              {"q", detection.q_used},
              {"removed_count", report.removed_count},
              {"unmatched_ids", report.unmatched_ids},
              {"dropped_classes", report.dropped_classes},
              {"before", eer_json(report.before)},
              {"after", eer_json(report.after)},
              {"model_before_sha256", io::sha256_file(paths.model_path())},
              {"model_after_sha256", io::sha256_file(model_file)},
              {"seed", seed},
              {"config_digest", run_config_digest(cfg)}};
  io::write_file(report_file, out.dump(2) + "\n");
  record_stage(paths.dir, cfg, seed, "retrain", {model_file, report_file},
               clock.seconds());
  return report;
}

std::string cmd_report(const fs::path& root, const WarningSink& warn) {
  if (!fs::is_directory(root)) throw ConfigError("report: " + root.string() + " is not a directory");
  std::vector<fs::path> runs;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "manifest.json")
      runs.push_back(entry.path().parent_path());
  std::sort(runs.begin(), runs.end());
  if (runs.empty()) throw ConfigError("report: no runs found under " + root.string());

  struct Cell {
    std::vector<std::optional<double>> precision;
    std::vector<std::optional<double>> eer;
  };
  using Key = std::tuple<std::string, double, std::string, std::string>;
  std::map<Key, Cell> cells;

  auto read_number = [](const fs::path& file, const char* field) -> std::optional<double> {
    if (!fs::exists(file)) return std::nullopt;
    try {
      const json j = json::parse(io::read_file(file));
      if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
      return j.at(field).get<double>();
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };

  for (const auto& run : runs) {
    RunConfig cfg;
    try {
      cfg = load_run_config(run / "config.json");
    } catch (const std::exception& e) {
      if (warn) warn("report: skipping " + run.string() + ": " + e.what());
      continue;
    }
    const auto eer = read_number(run / "eer.json", "eer");
    if (!eer && warn) warn("report: " + run.string() + " has no EER report");
    for (const NldMethod m : cfg.detect.methods) {
      const auto precision = read_number(run / ("detection_" + to_string(m) + ".json"), "precision");
      if (!precision && warn)
        warn("report: " + run.string() + " has no " + to_string(m) + " detection report");
      Cell& cell = cells[{to_string(cfg.noise.kind), cfg.noise.level, loss_name(cfg.train.loss),
                          to_string(m)}];
      cell.precision.push_back(precision);
      cell.eer.push_back(eer);
    }
  }

  auto mean = [](const std::vector<std::optional<double>>& v) -> std::string {
    double total = 0.0;
    for (const auto& x : v) {
      if (!x) return "missing";
      total += *x;
    }
    return io::format_real(total / static_cast<double>(v.size()));
  };
  std::string csv = "noise_kind,noise_level,loss,method,runs,precision,eer\n";
  for (const auto& [key, cell] : cells) {
    const auto& [kind, level, loss, method] = key;
    csv += kind + "," + io::format_real(level) + "," + loss + "," + method + "," +
           std::to_string(cell.precision.size()) + "," + mean(cell.precision) + "," +
           mean(cell.eer) + "\n";
  }
  io::write_file(root / "report.csv", csv);
  return csv;
}

}  // namespace nldbench
