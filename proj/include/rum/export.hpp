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

// Kernel visualization: raw CSV dumps, 8-bit grayscale PGM heatmaps and a
// diagonal-dominance diagnostic.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "rum/tensor.hpp"

namespace rum {

struct HeatmapSpec {
  std::filesystem::path checkpoint;
  // A stored tensor name, or "W_hh.update" / "W_hh.target" for the halves of
  // W_hh that feed the update gate and the memory target.
  std::string tensor = "W_hh.target";
  std::optional<double> min;  // both unset: symmetric bounds around zero
  std::optional<double> max;
  std::filesystem::path out;  // writes <out>.csv and <out>.pgm
};

struct HeatmapResult {
  std::filesystem::path csv;
  std::filesystem::path pgm;
  double min = 0.0;
  double max = 0.0;
  Tensor matrix;
};

HeatmapResult export_heatmap(const HeatmapSpec& spec);

/// Looks up `name` among checkpoint tensors, resolving the W_hh half aliases.
Tensor select_tensor(const std::map<std::string, Tensor>& tensors, const std::string& name);

/// Symmetric bounds [-m, m] with m = max |x| (or [-1, 1] for an all-zero tensor).
std::pair<double, double> symmetric_bounds(const Tensor& t);

/// Rows of comma-separated values with 17 significant digits.
void write_csv(const Tensor& t, std::ostream& os);
Tensor read_csv(std::istream& is);

/// Binary P5 image; value v maps to floor(255 (v - lo) / (hi - lo)), clamped.
void write_pgm(const Tensor& t, double lo, double hi, std::ostream& os);

struct DiagDominance {
  double ratio = 0.0;      // mean |diag| / mean |off-diag|
  bool unbounded = false;  // off-diagonal entries are all zero
};

DiagDominance diag_dominance(const Tensor& square);

}  // namespace rum
