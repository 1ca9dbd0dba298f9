// Copyright 2026 The CorneaField Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Every subcommand forwards to the C interface, prints
// its JSON report on stdout, and exits with the library status code.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "corneafield/corneafield.h"

namespace {

struct Flags {
  std::string config;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<int> steps;
  bool no_texture = false;
  bool no_pose_opt = false;
  bool no_radial = false;
  bool gt_poses = false;
  bool quiet = false;
  int orbit = 0;
  std::vector<double> eye;
  std::vector<double> target;
};

nlohmann::json options(const Flags& f) {
  nlohmann::json j = {{"config", f.config},          {"dataset", f.dataset},
                      {"out", f.out},                {"checkpoint", f.checkpoint},
                      {"no_texture", f.no_texture},  {"no_pose_opt", f.no_pose_opt},
                      {"no_radial", f.no_radial},    {"ground_truth_poses", f.gt_poses},
                      {"orbit", f.orbit},            {"quiet", f.quiet}};
  if (f.seed) j["seed"] = *f.seed;
  if (f.noise) j["noise"] = *f.noise;
  if (f.steps) j["steps"] = *f.steps;
  if (!f.eye.empty()) j["eye"] = f.eye;
  if (!f.target.empty()) j["target"] = f.target;
  return j;
}

int dispatch(cf_status (*fn)(const char*, char**), const Flags& f) {
  char* report = nullptr;
  const cf_status st = fn(options(f).dump().c_str(), &report);
  if (st != CF_OK) {
    std::fprintf(stderr, "error: %s\n", cf_last_error());
    return static_cast<int>(st);
  }
  std::printf("%s\n", report);
  cf_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radiance fields from corneal reflections"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cf_version()));
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config with optional synth/train sections");
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_flag("--quiet", f.quiet, "suppress progress output");
  };

  CLI::App* synth = app.add_subcommand("synth", "render a synthetic dataset");
  common(synth);
  synth->add_option("--out", f.out, "dataset directory")->required();
  synth->add_option("--noise", f.noise, "relative limbus-radius noise level");

  auto train_flags = [&](CLI::App* sub) {
    sub->add_option("--steps", f.steps, "optimization steps");
    sub->add_flag("--no-texture", f.no_texture, "disable the iris texture field");
    sub->add_flag("--no-pose-opt", f.no_pose_opt, "freeze cornea placements");
    sub->add_flag("--no-radial", f.no_radial, "disable the radial regularizer");
    sub->add_flag("--gt-poses", f.gt_poses, "use sidecar placements (simulator data only)");
  };

  CLI::App* train = app.add_subcommand("train", "fit a field to a dataset");
  common(train);
  train_flags(train);
  train->add_option("--dataset", f.dataset, "dataset directory or manifest")->required();
  train->add_option("--out", f.out, "run directory")->required();

  CLI::App* render = app.add_subcommand("render", "render views of a trained field");
  render->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  render->add_option("--out", f.out, "output directory")->required();
  render->add_option("--orbit", f.orbit, "number of orbit views");
  render->add_option("--eye", f.eye, "camera position x y z")->expected(3);
  render->add_option("--target", f.target, "look-at point x y z")->expected(3);

  CLI::App* eval = app.add_subcommand("eval", "score a trained field against ground truth");
  common(eval);
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  eval->add_option("--dataset", f.dataset, "simulator dataset")->required();
  eval->add_option("--out", f.out, "directory receiving metrics.jsonl");

  CLI::App* ablate = app.add_subcommand("ablate", "pose-optimization ablation over noise levels");
  common(ablate);
  train_flags(ablate);
  ablate->add_option("--out", f.out, "output directory")->required();
  ablate->add_option("--noise", f.noise, "single noise level instead of the config list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(CF_ERR_ARGUMENT);
  }

  if (*synth) return dispatch(&cf_run_synth, f);
  if (*train) return dispatch(&cf_run_train, f);
  if (*render) return dispatch(&cf_run_render, f);
  if (*eval) return dispatch(&cf_run_eval, f);
  if (*ablate) return dispatch(&cf_run_ablate, f);
  return static_cast<int>(CF_ERR_ARGUMENT);
}
