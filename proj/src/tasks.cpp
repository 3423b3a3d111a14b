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

#include "rum/tasks.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rum {

ClassTargets TaskBatch::time_major_targets() const {
  ClassTargets t;
  const auto n = static_cast<std::size_t>(batch * length);
  t.ids.resize(n);
  t.mask.resize(n);
  for (Index s = 0; s < length; ++s)
    for (Index b = 0; b < batch; ++b) {
      const auto row = static_cast<std::size_t>(s * batch + b);
      t.ids[row] = target(b, s);
      t.mask[row] = scored(b, s) ? 1 : 0;
    }
  return t;
}

void TaskBatch::validate() const {
  const auto n = static_cast<std::size_t>(batch * length);
  if (inputs.size() != n || targets.size() != n || mask.size() != n)
    throw std::invalid_argument("task batch: buffer sizes disagree with (batch, length)");
  for (std::size_t i = 0; i < n; ++i) {
    if (inputs[i] < 0 || inputs[i] >= vocab_in)
      throw std::out_of_range("task batch: input id " + std::to_string(inputs[i]));
    if (targets[i] < 0 || targets[i] >= vocab_out)
      throw std::out_of_range("task batch: target id " + std::to_string(targets[i]));
  }
}

TaskBatch gen_copying(int n, int copy_len, int delay, Index batch, Rng& rng) {
  if (n < 1 || copy_len < 1 || delay < 1 || batch < 1)
    throw std::invalid_argument("gen_copying: n, copy_len, T and batch must be positive");
  const int blank = n, marker = n + 1;
  TaskBatch out;
  out.batch = batch;
  out.length = delay + 2 * copy_len;
  out.vocab_in = n + 2;
  out.vocab_out = n + 1;
  const auto total = static_cast<std::size_t>(batch * out.length);
  out.inputs.assign(total, blank);
  out.targets.assign(total, blank);
  out.mask.assign(total, 1);
  for (Index b = 0; b < batch; ++b) {
    int* in = out.inputs.data() + b * out.length;
    int* tg = out.targets.data() + b * out.length;
    for (int i = 0; i < copy_len; ++i) {
      const int symbol = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      in[i] = symbol;
      tg[out.length - copy_len + i] = symbol;
    }
    in[copy_len + delay - 1] = marker;
  }
  return out;
}

double copying_baseline(int n, int copy_len, int delay) {
  return copy_len * std::log(static_cast<double>(n)) / static_cast<double>(delay + 2 * copy_len);
}

RecallVocab recall_vocab(int length) {
  if (length < 4 || length % 2 != 0)
    throw std::invalid_argument("recall: T must be even and at least 4, got " +
                                std::to_string(length));
  const int chars = length / 2;
  return {chars, chars, chars + 10, chars + 11};
}

TaskBatch gen_recall(int length, Index batch, Rng& rng) {
  const RecallVocab v = recall_vocab(length);
  if (batch < 1) throw std::invalid_argument("gen_recall: batch must be positive");
  TaskBatch out;
  out.batch = batch;
  out.length = length + 3;
  out.vocab_in = v.size;
  out.vocab_out = v.size;
  const auto total = static_cast<std::size_t>(batch * out.length);
  out.inputs.assign(total, v.query);
  out.targets.assign(total, 0);
  out.mask.assign(total, 0);
  std::vector<int> chars(static_cast<std::size_t>(v.chars));
  std::vector<int> numbers(static_cast<std::size_t>(v.chars));
  for (Index b = 0; b < batch; ++b) {
    std::iota(chars.begin(), chars.end(), 0);
    for (std::size_t i = chars.size() - 1; i > 0; --i)
      std::swap(chars[i], chars[rng.uniform_int(i + 1)]);
    for (int& x : numbers) x = v.first_number + static_cast<int>(rng.uniform_int(10));
    const auto key = static_cast<std::size_t>(rng.uniform_int(chars.size()));

    int* in = out.inputs.data() + b * out.length;
    for (std::size_t i = 0; i < chars.size(); ++i) {
      in[2 * i] = chars[i];
      in[2 * i + 1] = numbers[i];
    }
    in[length] = v.query;
    in[length + 1] = v.query;
    in[length + 2] = chars[key];
    const auto last = static_cast<std::size_t>(b * out.length + out.length - 1);
    out.targets[last] = numbers[key];
    out.mask[last] = 1;
  }
  return out;
}

double recall_chance(int length) {
  recall_vocab(length);
  return 0.1;
}

void write_batch_csv(const TaskBatch& batch, std::ostream& os) {
  auto field = [&](auto value_at, Index b) {
    for (Index t = 0; t < batch.length; ++t) {
      if (t) os << ' ';
      os << value_at(b, t);
    }
  };
  os << "inputs,targets,mask\n";
  for (Index b = 0; b < batch.batch; ++b) {
    field([&](Index i, Index t) { return batch.input(i, t); }, b);
    os << ',';
    field([&](Index i, Index t) { return batch.target(i, t); }, b);
    os << ',';
    field([&](Index i, Index t) { return batch.scored(i, t) ? 1 : 0; }, b);
    os << '\n';
  }
}

}  // namespace rum
