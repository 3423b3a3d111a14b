// Copyright 2026 The RUM Authors
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

// Command-line front end: train, eval, export, params, sample.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "rum/export.hpp"
#include "rum/trainer.hpp"

namespace {

// One --<key> flag per RunConfig field, applied after any --config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat key=value config file");
    for (const auto& [key, fallback] : rum::RunConfig{}.entries())
      app->add_option("--" + key, values[key], "default: " + fallback);
  }

  rum::RunConfig resolve(rum::RunConfig base = {}) const {
    if (!file.empty()) rum::apply_config_file(base, file);
    for (const auto& [key, value] : values)
      if (!value.empty()) base.set(key, value);
    base.validate();
    return base;
  }
};

void print_eval(const rum::EvalResult& r) {
  std::printf("loss=%.17g accuracy=%.17g scored=%lld\n", r.loss, r.accuracy,
              static_cast<long long>(r.scored));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RUM recurrent cells: training, evaluation and kernel export"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model on a synthetic task");
  ConfigFlags train_flags;
  train_flags.attach(train);
  std::string resume_from;
  train->add_option("--resume", resume_from, "continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a seeded task stream");
  std::string eval_ckpt;
  int eval_batches = 0;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--batches", eval_batches, "default: the run's val_batches");
  auto* seed_opt = eval->add_option("--seed", eval_seed, "default: the run's validation seed");

  auto* exp = app.add_subcommand("export", "write a checkpoint tensor as CSV and PGM heatmap");
  rum::HeatmapSpec heat;
  double lo = 0.0, hi = 0.0;
  exp->add_option("--checkpoint", heat.checkpoint)->required();
  exp->add_option("--tensor", heat.tensor, "tensor name, or W_hh.update / W_hh.target");
  exp->add_option("--out", heat.out, "output prefix")->required();
  auto* lo_opt = exp->add_option("--min", lo);
  auto* hi_opt = exp->add_option("--max", hi);

  auto* params = app.add_subcommand("params", "count trainable parameters of a configuration");
  ConfigFlags param_flags;
  param_flags.attach(params);

  auto* sample = app.add_subcommand("sample", "write one generated task batch as CSV");
  ConfigFlags sample_flags;
  sample_flags.attach(sample);
  std::string sample_out;
  sample->add_option("--file", sample_out, "output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      rum::TrainOptions options;
      options.log = &std::cout;
      std::cout << rum::MetricsLog::kHeader << '\n';
      if (resume_from.empty()) {
        rum::train(train_flags.resolve(), options);
      } else {
        const auto ckpt = rum::load_checkpoint(resume_from);
        rum::resume(ckpt, train_flags.resolve(ckpt.config), options);
      }
    } else if (eval->parsed()) {
      const auto ckpt = rum::load_checkpoint(eval_ckpt);
      const int batches = eval_batches > 0 ? eval_batches : ckpt.config.val_batches;
      const std::uint64_t seed = seed_opt->count() ? eval_seed : ckpt.config.validation_seed();
      print_eval(rum::evaluate(ckpt, seed, batches));
    } else if (exp->parsed()) {
      if (lo_opt->count()) heat.min = lo;
      if (hi_opt->count()) heat.max = hi;
      const auto r = rum::export_heatmap(heat);
      std::printf("wrote %s and %s (%lldx%lld, bounds [%.6g, %.6g])\n", r.csv.c_str(),
                  r.pgm.c_str(), static_cast<long long>(r.matrix.shape().rows()),
                  static_cast<long long>(r.matrix.shape().cols()), r.min, r.max);
      if (r.matrix.rank() == 2 && r.matrix.shape().rows() == r.matrix.shape().cols() &&
          r.matrix.shape().rows() > 1) {
        const auto d = rum::diag_dominance(r.matrix);
        if (d.unbounded)
          std::printf("diag_dominance=unbounded\n");
        else
          std::printf("diag_dominance=%.6g\n", d.ratio);
      }
    } else if (params->parsed()) {
      const auto config = param_flags.resolve();
      for (const auto& [name, shape] : rum::model_layout(config.model()))
        std::printf("%-12s %-14s %lld\n", name.c_str(), shape.str().c_str(),
                    static_cast<long long>(shape.size()));
      std::printf("total %lld\n", static_cast<long long>(rum::count_params(config)));
    } else if (sample->parsed()) {
      const auto config = sample_flags.resolve();
      rum::Rng rng(config.seed);
      const auto batch = config.generate(rng);
      if (sample_out.empty()) {
        rum::write_batch_csv(batch, std::cout);
      } else {
        std::ofstream os(sample_out);
        rum::write_batch_csv(batch, os);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
