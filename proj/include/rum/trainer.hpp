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

#pragma once

// Run configuration, checkpoint file format and the training/evaluation loop.
//
// Checkpoint layout (all integers little-endian):
//   bytes 0-7   magic "RUMCKPT1"
//   bytes 8-15  uint64 header length H
//   next H      UTF-8 JSON header: config, iteration, rng, optimizer and a
//               tensor directory of {name, shape, offset}
//   remainder   float64 payloads in directory order; offsets count from the
//               first payload byte

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rum/cells.hpp"
#include "rum/optim.hpp"
#include "rum/tasks.hpp"

namespace rum {

enum class TaskKind { Copying, Recall };

struct RunConfig {
  TaskKind task = TaskKind::Copying;
  CellKind cell = CellKind::Rum;
  Index hidden = 100;
  int lambda = 0;
  std::optional<double> eta;
  int T = 100;
  int copy_len = 10;
  int symbols = 8;
  Index batch = 128;
  OptimizerConfig optimizer;
  double clip = 0.0;  // 0 disables clipping
  std::int64_t iterations = 2000;
  std::int64_t eval_every = 100;
  int val_batches = 4;
  std::int64_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::uint64_t seed = 1;
  std::string out = "run";
  bool wall_clock = true;  // false records 0 in the seconds column

  /// Applies one key=value setting; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  /// Ordered key/value pairs; feeding them back through set() reproduces *this.
  std::vector<std::pair<std::string, std::string>> entries() const;

  void validate() const;

  ModelSpec model() const;
  std::uint64_t validation_seed() const { return seed ^ 0x9e3779b97f4a7c15ULL; }
  TaskBatch generate(Rng& rng) const;
};

/// Reads flat key=value text ('#' starts a comment) into `config`.
void apply_config_text(RunConfig& config, std::istream& is);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

struct MetricsRecord {
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

class MetricsLog {
 public:
  static constexpr const char* kHeader = "iteration,train_loss,val_loss,val_acc,seconds";

  void append(const MetricsRecord& record);
  const std::vector<MetricsRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  const MetricsRecord& back() const { return records_.back(); }

  static std::string format(const MetricsRecord& record);

 private:
  std::vector<MetricsRecord> records_;
};

struct Checkpoint {
  RunConfig config;
  ParameterList params;
  OptimizerState optimizer;
  std::int64_t iteration = 0;
  std::string rng_state;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Every tensor stored in a checkpoint file, keyed by name.
std::map<std::string, Tensor> read_checkpoint_tensors(const std::filesystem::path& path);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  // Called after each evaluation; returning false stops training there.
  std::function<bool(const MetricsRecord&)> on_eval;
  bool write_files = true;
  std::ostream* log = nullptr;
};

struct TrainResult {
  MetricsLog metrics;
  Checkpoint checkpoint;
};

/// Fresh run from config.seed.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Continues `from` until config.iterations. Model-defining fields must match.
TrainResult resume(const Checkpoint& from, const RunConfig& config,
                   const TrainOptions& options = {});

/// Fresh initialization of a run's model, optimizer and rng (iteration 0).
Checkpoint initial_checkpoint(const RunConfig& config);

struct EvalResult {
  double loss = 0.0;      // mean nats per scored position
  double accuracy = 0.0;  // argmax hits over scored positions
  std::int64_t scored = 0;
};

/// Loss and accuracy of time-major logits against a batch's targets.
EvalResult score_logits(const Tensor& logits, const ClassTargets& targets);

EvalResult evaluate(const ModelSpec& spec, const ParameterList& params,
                    const std::vector<TaskBatch>& batches);

/// Evaluates on `num_batches` batches drawn from a stream seeded with `stream_seed`.
EvalResult evaluate(const Checkpoint& checkpoint, std::uint64_t stream_seed, int num_batches);

std::vector<TaskBatch> validation_batches(const RunConfig& config);

Index count_params(const RunConfig& config);

}  // namespace rum
