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

#include "rum/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace rum {

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + value + "'");
}

const char* task_name(TaskKind t) { return t == TaskKind::Copying ? "copying" : "recall"; }

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "task") {
    if (value == "copying") task = TaskKind::Copying;
    else if (value == "recall") task = TaskKind::Recall;
    else throw std::invalid_argument("config: unknown task '" + value + "'");
  } else if (key == "cell") {
    cell = parse_cell(value);
  } else if (key == "hidden") {
    hidden = parse_integer<Index>(key, value);
  } else if (key == "lambda") {
    lambda = parse_integer<int>(key, value);
  } else if (key == "eta") {
    if (value == "none" || value == "disabled" || value == "N/A")
      eta.reset();
    else
      eta = parse_real(key, value);
  } else if (key == "T") {
    T = parse_integer<int>(key, value);
  } else if (key == "copy_len") {
    copy_len = parse_integer<int>(key, value);
  } else if (key == "symbols") {
    symbols = parse_integer<int>(key, value);
  } else if (key == "batch") {
    batch = parse_integer<Index>(key, value);
  } else if (key == "optimizer") {
    optimizer.kind = parse_optimizer(value);
  } else if (key == "lr") {
    optimizer.lr = parse_real(key, value);
  } else if (key == "decay") {
    optimizer.decay = parse_real(key, value);
  } else if (key == "beta1") {
    optimizer.beta1 = parse_real(key, value);
  } else if (key == "beta2") {
    optimizer.beta2 = parse_real(key, value);
  } else if (key == "eps") {
    optimizer.eps = parse_real(key, value);
  } else if (key == "clip") {
    clip = parse_real(key, value);
  } else if (key == "iterations") {
    iterations = parse_integer<std::int64_t>(key, value);
  } else if (key == "eval_every") {
    eval_every = parse_integer<std::int64_t>(key, value);
  } else if (key == "val_batches") {
    val_batches = parse_integer<int>(key, value);
  } else if (key == "checkpoint_every") {
    checkpoint_every = parse_integer<std::int64_t>(key, value);
  } else if (key == "seed") {
    seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "out") {
    out = value;
  } else if (key == "wall_clock") {
    wall_clock = parse_bool(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  return {
      {"task", task_name(task)},
      {"cell", cell_name(cell)},
      {"hidden", std::to_string(hidden)},
      {"lambda", std::to_string(lambda)},
      {"eta", eta ? format_double(*eta) : "none"},
      {"T", std::to_string(T)},
      {"copy_len", std::to_string(copy_len)},
      {"symbols", std::to_string(symbols)},
      {"batch", std::to_string(batch)},
      {"optimizer", optimizer_name(optimizer.kind)},
      {"lr", format_double(optimizer.lr)},
      {"decay", format_double(optimizer.decay)},
      {"beta1", format_double(optimizer.beta1)},
      {"beta2", format_double(optimizer.beta2)},
      {"eps", format_double(optimizer.eps)},
      {"clip", format_double(clip)},
      {"iterations", std::to_string(iterations)},
      {"eval_every", std::to_string(eval_every)},
      {"val_batches", std::to_string(val_batches)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"seed", std::to_string(seed)},
      {"out", out},
      {"wall_clock", wall_clock ? "true" : "false"},
  };
}

void RunConfig::validate() const {
  if (hidden < 1 || batch < 1 || T < 1 || copy_len < 1 || symbols < 1)
    throw std::invalid_argument("config: sizes must be positive");
  if (iterations < 0 || eval_every < 1 || val_batches < 1 || checkpoint_every < 0)
    throw std::invalid_argument("config: iteration counts out of range");
  if (lambda != 0 && lambda != 1) throw std::invalid_argument("config: lambda must be 0 or 1");
  if (cell != CellKind::Rum && (lambda != 0 || eta))
    throw std::invalid_argument("config: lambda and eta apply to the rum cell only");
  if (eta && !(*eta > 0.0)) throw std::invalid_argument("config: eta must be positive");
  if (!(optimizer.lr > 0.0) || !(optimizer.eps > 0.0) || clip < 0.0)
    throw std::invalid_argument("config: optimizer hyperparameters out of range");
  if (task == TaskKind::Recall) recall_vocab(T);
}

ModelSpec RunConfig::model() const {
  validate();
  ModelSpec spec;
  spec.cell = cell;
  spec.config.hidden_size = hidden;
  spec.config.lambda = lambda;
  spec.config.eta = eta;
  if (task == TaskKind::Copying) {
    spec.config.input_size = symbols + 2;
    spec.vocab_out = symbols + 1;
  } else {
    const auto v = recall_vocab(T);
    spec.config.input_size = v.size;
    spec.vocab_out = v.size;
  }
  return spec;
}

TaskBatch RunConfig::generate(Rng& rng) const {
  if (task == TaskKind::Copying) return gen_copying(symbols, copy_len, T, batch, rng);
  return gen_recall(T, batch, rng);
}

void apply_config_text(RunConfig& config, std::istream& is) {
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key=value");
    config.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path.string());
  apply_config_text(config, is);
}

// ---------------------------------------------------------------------------
// Metrics

void MetricsLog::append(const MetricsRecord& r) {
  if (!records_.empty() && r.iteration <= records_.back().iteration)
    throw std::invalid_argument("metrics: iterations must increase");
  records_.push_back(r);
}

std::string MetricsLog::format(const MetricsRecord& r) {
  return std::to_string(r.iteration) + "," + format_double(r.train_loss) + "," +
         format_double(r.val_loss) + "," + format_double(r.val_acc) + "," +
         format_double(r.seconds);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult score_logits(const Tensor& logits, const ClassTargets& targets) {
  EvalResult r;
  r.loss = softmax_cross_entropy(logits, targets).loss;
  std::int64_t hits = 0;
  for (Index i = 0; i < logits.shape().rows(); ++i) {
    if (!targets.counts(static_cast<std::size_t>(i))) continue;
    ++r.scored;
    Index best = 0;
    for (Index j = 1; j < logits.shape().cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (best == targets.ids[static_cast<std::size_t>(i)]) ++hits;
  }
  r.accuracy = r.scored ? static_cast<double>(hits) / static_cast<double>(r.scored) : 0.0;
  return r;
}

EvalResult evaluate(const ModelSpec& spec, const ParameterList& params,
                    const std::vector<TaskBatch>& batches) {
  EvalResult total;
  double loss_sum = 0.0, hit_sum = 0.0;
  for (const TaskBatch& batch : batches) {
    if (batch.vocab_in != spec.config.input_size || batch.vocab_out != spec.vocab_out)
      throw ShapeError("evaluate: task vocabulary does not match the model");
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& p : params) vars.push_back(ad::constant(tape, p.value, p.name));
    const auto un = unroll(tape, spec, vars, batch.tokens());
    const EvalResult r = score_logits(un.logits.value(), batch.time_major_targets());
    loss_sum += r.loss * static_cast<double>(r.scored);
    hit_sum += r.accuracy * static_cast<double>(r.scored);
    total.scored += r.scored;
  }
  if (total.scored) {
    total.loss = loss_sum / static_cast<double>(total.scored);
    total.accuracy = hit_sum / static_cast<double>(total.scored);
  }
  return total;
}

std::vector<TaskBatch> validation_batches(const RunConfig& config) {
  Rng rng(config.validation_seed());
  std::vector<TaskBatch> out;
  for (int i = 0; i < config.val_batches; ++i) out.push_back(config.generate(rng));
  return out;
}

EvalResult evaluate(const Checkpoint& checkpoint, std::uint64_t stream_seed, int num_batches) {
  Rng rng(stream_seed);
  std::vector<TaskBatch> batches;
  for (int i = 0; i < num_batches; ++i) batches.push_back(checkpoint.config.generate(rng));
  return evaluate(checkpoint.config.model(), checkpoint.params, batches);
}

Index count_params(const RunConfig& config) { return count_model_params(config.model()); }

// ---------------------------------------------------------------------------
// Training

Checkpoint initial_checkpoint(const RunConfig& config) {
  Checkpoint c;
  c.config = config;
  Rng rng(config.seed);
  c.params = initialize_model(config.model(), rng);
  std::vector<Tensor> values;
  for (const auto& p : c.params) values.push_back(p.value);
  c.optimizer = OptimizerState::create(config.optimizer, values);
  c.rng_state = rng.state();
  return c;
}

namespace {

std::filesystem::path metrics_path(const RunConfig& c) {
  return std::filesystem::path(c.out) / "metrics.csv";
}

std::filesystem::path checkpoint_path(const RunConfig& c) {
  return std::filesystem::path(c.out) / "checkpoint.rumckpt";
}

TrainResult run(Checkpoint state, const RunConfig& config, const TrainOptions& options,
                bool fresh) {
  const ModelSpec spec = config.model();
  Rng rng;
  rng.restore(state.rng_state);
  state.optimizer.config = config.optimizer;
  state.config = config;
  const auto val = validation_batches(config);

  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (auto& p : state.params) {
    names.push_back(p.name);
    values.push_back(std::move(p.value));
  }

  std::ofstream metrics_file;
  if (options.write_files) {
    std::filesystem::create_directories(config.out);
    const auto path = metrics_path(config);
    const bool new_file = fresh || !std::filesystem::exists(path);
    metrics_file.open(path, new_file ? std::ios::trunc : std::ios::app);
    if (!metrics_file) throw std::runtime_error("cannot write " + path.string());
    if (new_file) metrics_file << MetricsLog::kHeader << '\n';
  }

  auto snapshot = [&] {
    Checkpoint c = state;
    c.params.clear();
    for (std::size_t k = 0; k < values.size(); ++k) c.params.push_back({names[k], values[k]});
    c.rng_state = rng.state();
    return c;
  };

  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tensor> grads(values.size());
  while (state.iteration < config.iterations) {
    const TaskBatch batch = config.generate(rng);
    double train_loss = 0.0;
    try {
      ad::Tape tape;
      std::vector<ad::Var> vars;
      vars.reserve(values.size());
      for (std::size_t k = 0; k < values.size(); ++k)
        vars.push_back(ad::parameter(tape, values[k], names[k]));
      const auto un = unroll(tape, spec, vars, batch.tokens());
      auto targets = std::make_shared<const ClassTargets>(batch.time_major_targets());
      const ad::Var loss = ad::softmax_cross_entropy(un.logits, targets);
      train_loss = loss.value().item();
      const ad::GradMap g = ad::backward(tape, loss.id());
      for (std::size_t k = 0; k < values.size(); ++k) {
        grads[k] = g.contains(vars[k].id()) ? g.at(vars[k].id()) : Tensor(values[k].shape());
        if (!grads[k].all_finite())
          throw NonFiniteError("non-finite gradient for parameter " + names[k]);
      }
    } catch (const NonFiniteError& e) {
      throw TrainingError("iteration " + std::to_string(state.iteration + 1) + ": " + e.what());
    }
    if (config.clip > 0.0) clip_by_global_norm(grads, config.clip);
    apply_update(values, grads, state.optimizer);
    ++state.iteration;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (!values[k].all_finite())
        throw TrainingError("iteration " + std::to_string(state.iteration) +
                            ": non-finite value in parameter " + names[k]);

    bool stop = false;
    if (state.iteration % config.eval_every == 0 || state.iteration == config.iterations) {
      ParameterList current;
      for (std::size_t k = 0; k < values.size(); ++k) current.push_back({names[k], values[k]});
      const EvalResult ev = evaluate(spec, current, val);
      MetricsRecord rec;
      rec.iteration = state.iteration;
      rec.train_loss = train_loss;
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;
      if (config.wall_clock)
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.metrics.append(rec);
      const std::string line = MetricsLog::format(rec);
      if (metrics_file.is_open()) metrics_file << line << std::endl;
      if (options.log) *options.log << line << std::endl;
      if (options.on_eval && !options.on_eval(rec)) stop = true;
    }
    if (options.write_files && config.checkpoint_every > 0 &&
        state.iteration % config.checkpoint_every == 0)
      save_checkpoint(snapshot(), checkpoint_path(config));
    if (stop) break;
  }

  result.checkpoint = snapshot();
  if (options.write_files) save_checkpoint(result.checkpoint, checkpoint_path(config));
  return result;
}

}  // namespace

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  tune_allocator();
  return run(initial_checkpoint(config), config, options, true);
}

TrainResult resume(const Checkpoint& from, const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const RunConfig& old = from.config;
  if (old.task != config.task || old.cell != config.cell || old.hidden != config.hidden ||
      old.lambda != config.lambda || old.eta != config.eta || old.T != config.T ||
      old.copy_len != config.copy_len || old.symbols != config.symbols ||
      old.optimizer.kind != config.optimizer.kind)
    throw std::invalid_argument("resume: config changes the model or task of the checkpoint");
  tune_allocator();
  return run(from, config, options, false);
}

}  // namespace rum
