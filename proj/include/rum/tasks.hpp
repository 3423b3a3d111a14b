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

// Synthetic memorization tasks.
//
// Copying: `copy_len` data symbols from {0..n-1}, T-1 blanks (id n), one marker
// (id n+1), then copy_len blanks. The target is blank everywhere except the
// last copy_len steps, which repeat the data. Every position is scored.
//
// Associative recall: T/2 (character, number) pairs using each character of a
// T/2-letter alphabet once, then "??" and a key character; the single scored
// target is the number that followed the key. Characters take ids [0, T/2),
// numbers [T/2, T/2 + 10), and '?' is T/2 + 10.

#include <cstdint>
#include <ostream>
#include <vector>

#include "rum/cells.hpp"
#include "rum/tensor.hpp"

namespace rum {

struct TaskBatch {
  Index batch = 0;
  Index length = 0;
  std::vector<int> inputs;          // (batch, length) row-major
  std::vector<int> targets;         // (batch, length) row-major
  std::vector<std::uint8_t> mask;   // (batch, length) row-major
  Index vocab_in = 0;
  Index vocab_out = 0;

  int input(Index b, Index t) const { return inputs[static_cast<std::size_t>(b * length + t)]; }
  int target(Index b, Index t) const { return targets[static_cast<std::size_t>(b * length + t)]; }
  bool scored(Index b, Index t) const { return mask[static_cast<std::size_t>(b * length + t)] != 0; }

  TokenBatch tokens() const { return {batch, length, inputs}; }

  /// Targets reordered to match unrolled logits (row t * batch + b).
  ClassTargets time_major_targets() const;

  /// Throws if any id is outside its vocabulary or sizes disagree.
  void validate() const;
};

TaskBatch gen_copying(int n, int copy_len, int delay, Index batch, Rng& rng);

/// Mean loss per position of the best predictor that ignores the input.
double copying_baseline(int n, int copy_len, int delay);

struct RecallVocab {
  int chars;
  int first_number;
  int query;
  int size;
};

RecallVocab recall_vocab(int length);

TaskBatch gen_recall(int length, Index batch, Rng& rng);

/// Accuracy of guessing uniformly among the ten numbers.
double recall_chance(int length);

/// One line per sequence: inputs, targets and mask as space-separated ids.
void write_batch_csv(const TaskBatch& batch, std::ostream& os);

}  // namespace rum
