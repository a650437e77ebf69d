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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nldbench/errors.h"
#include "nldbench/pipeline.h"

namespace fs = std::filesystem;
using namespace nldbench;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string dataset;
  std::string model;
  std::string heldout;
  std::string detection;
  std::vector<std::string> methods;
  std::string retrain_method;
  std::optional<double> q;
};

void add_common(CLI::App* cmd, Options& opt, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opt.config, "Run config (JSON)");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out, "Output directory")->required();
  cmd->add_option("--seed", opt.seed, "Run a single seed instead of the config's seed list");
  cmd->add_flag("--quiet", opt.quiet, "Suppress warnings and progress output");
}

RunPaths paths_for(const Options& opt, std::uint64_t seed) {
  RunPaths p;
  p.dir = seed_dir(opt.out, seed);
  if (!opt.dataset.empty()) p.dataset = opt.dataset;
  if (!opt.model.empty()) p.model = opt.model;
  if (!opt.heldout.empty()) p.heldout = opt.heldout;
  if (!opt.detection.empty())
    p.detection = opt.detection;
  else if (!opt.retrain_method.empty())
    p.detection = p.dir / ("detection_" + to_string(parse_nld_method(opt.retrain_method)) + ".json");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nldbench: label-noise simulation, embedder training and noisy label detection"};
  app.require_subcommand(1);
  Options opt;

  auto* simulate = app.add_subcommand("simulate", "Write clean, auxiliary, noised and held-out datasets");
  add_common(simulate, opt);

  auto* train_cmd = app.add_subcommand("train", "Train an embedder on the noised dataset");
  add_common(train_cmd, opt);
  train_cmd->add_option("--dataset", opt.dataset, "Dataset file (default <run>/noisy.jsonl)");

  auto* detect = app.add_subcommand("detect", "Score, rank and select noisy labels");
  add_common(detect, opt);
  detect->add_option("--dataset", opt.dataset, "Dataset file (default <run>/noisy.jsonl)");
  detect->add_option("--model", opt.model, "Model file (default <run>/model.json)");
  detect->add_option("--method", opt.methods, "intra and/or inter (overrides config)");
  detect->add_option("--q", opt.q, "Selection level in percent, (0, 100]");

  auto* eval = app.add_subcommand("eval", "Equal error rate on held-out trials");
  add_common(eval, opt);
  eval->add_option("--model", opt.model, "Model file (default <run>/model.json)");
  eval->add_option("--heldout", opt.heldout, "Held-out dataset (default <run>/heldout.jsonl)");

  auto* retrain = app.add_subcommand("retrain", "Retrain after removing detected samples");
  add_common(retrain, opt);
  retrain->add_option("--dataset", opt.dataset, "Dataset file (default <run>/noisy.jsonl)");
  retrain->add_option("--model", opt.model, "Noisy-trained model (default <run>/model.json)");
  retrain->add_option("--heldout", opt.heldout, "Held-out dataset (default <run>/heldout.jsonl)");
  retrain->add_option("--detection", opt.detection,
                      "Detection report (default <run>/detection_<first method>.json)");
  retrain->add_option("--method", opt.retrain_method, "Detection method whose report is used")
      ->excludes("--detection");

  auto* report = app.add_subcommand("report", "Aggregate runs under --out into report.csv");
  add_common(report, opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help prints and succeeds; every usage error exits 2.
    return app.exit(e) == 0 ? 0 : 2;
  }

  const bool quiet = opt.quiet;
  const WarningSink warn = [quiet](const std::string& msg) {
    if (!quiet) std::cerr << "warning: " << msg << "\n";
  };
  auto info = [quiet](const std::string& msg) {
    if (!quiet) std::cerr << msg << "\n";
  };

  try {
    if (report->parsed()) {
      const std::string csv = cmd_report(opt.out, warn);
      if (!quiet) std::cout << csv;
      return 0;
    }

    RunConfig cfg = load_run_config(opt.config);
    if (!opt.methods.empty()) {
      cfg.detect.methods.clear();
      for (const auto& m : opt.methods) cfg.detect.methods.push_back(parse_nld_method(m));
    }
    if (opt.q) {
      if (!(*opt.q > 0.0 && *opt.q <= 100.0))
        throw ConfigError("--q: must lie in (0, 100]");
      cfg.detect.q = opt.q;
    }
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (opt.seed) seeds = {*opt.seed};
    const bool overrides = !opt.dataset.empty() || !opt.model.empty() || !opt.heldout.empty() ||
                           !opt.detection.empty();
    if (overrides && seeds.size() > 1)
      throw ConfigError("input path overrides need a single seed (--seed)");

    for (const auto seed : seeds) {
      const RunPaths paths = paths_for(opt, seed);
      const std::string tag = "[seed " + std::to_string(seed) + "] ";
      if (simulate->parsed()) {
        const auto s = cmd_simulate(cfg, seed, paths, warn);
        info(tag + "simulated " + std::to_string(s.utterances) + " utterances, " +
             std::to_string(s.noisy_count) + " noisy");
      } else if (train_cmd->parsed()) {
        cmd_train(cfg, seed, paths, warn);
        info(tag + "trained " + (paths.dir / "model.json").string());
      } else if (detect->parsed()) {
        for (const auto& r : cmd_detect(cfg, seed, paths, warn))
          info(tag + to_string(r.method) + ": selected " + std::to_string(r.predicted_noisy.size()) +
               ", precision " + (r.precision ? std::to_string(*r.precision) : "n/a"));
      } else if (eval->parsed()) {
        const auto e = cmd_eval(cfg, seed, paths, warn);
        info(tag + "EER " + std::to_string(e.eer) + " over " + std::to_string(e.trial_count) +
             " trials");
      } else if (retrain->parsed()) {
        const auto r = cmd_retrain(cfg, seed, paths, warn);
        info(tag + "removed " + std::to_string(r.removed_count) + ", EER " +
             std::to_string(r.before.eer) + " -> " + std::to_string(r.after.eer));
      }
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
