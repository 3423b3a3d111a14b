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

#include "rum/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rum/trainer.hpp"

namespace rum {

Tensor select_tensor(const std::map<std::string, Tensor>& tensors, const std::string& name) {
  auto half = [&](bool target) {
    const auto it = tensors.find("W_hh");
    if (it == tensors.end()) throw std::invalid_argument("checkpoint has no W_hh tensor");
    const Tensor& w = it->second;
    const Index n = w.shape().rows();
    if (w.rank() != 2 || w.shape().cols() != 2 * n)
      throw ShapeError("W_hh is not (N_h, 2 N_h); halves are defined for rum cells only");
    Tensor out(Shape{n, n});
    out.matrix() = w.matrix().middleCols(target ? n : 0, n);
    return out;
  };
  if (name == "W_hh.update") return half(false);
  if (name == "W_hh.target") return half(true);
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("checkpoint has no tensor '" + name + "'");
  return it->second;
}

std::pair<double, double> symmetric_bounds(const Tensor& t) {
  double m = 0.0;
  for (double x : t.data()) m = std::max(m, std::abs(x));
  if (m == 0.0) m = 1.0;
  return {-m, m};
}

void write_csv(const Tensor& t, std::ostream& os) {
  char buf[40];
  for (Index i = 0; i < t.shape().batch() * t.shape().rows(); ++i) {
    for (Index j = 0; j < t.shape().cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", t.matrix()(i, j));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

Tensor read_csv(std::istream& is) {
  std::vector<double> values;
  Index rows = 0, cols = -1;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Index n = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++n;
    }
    if (cols >= 0 && n != cols) throw ShapeError("read_csv: ragged rows");
    cols = n;
    ++rows;
  }
  if (rows == 0) throw ShapeError("read_csv: no data");
  return Tensor(Shape{rows, cols}, std::move(values));
}

void write_pgm(const Tensor& t, double lo, double hi, std::ostream& os) {
  if (!(lo < hi)) throw std::invalid_argument("write_pgm: bounds must satisfy min < max");
  const Index rows = t.shape().batch() * t.shape().rows();
  const Index cols = t.shape().cols();
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  const auto m = t.matrix();
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      const double level = std::floor(255.0 * (m(i, j) - lo) / (hi - lo));
      os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(level, 0.0, 255.0))));
    }
}

DiagDominance diag_dominance(const Tensor& t) {
  if (t.rank() != 2 || t.shape().rows() != t.shape().cols())
    throw ShapeError("diag_dominance: expected a square matrix, got " + t.shape().str());
  const Index n = t.shape().rows();
  if (n < 2) throw ShapeError("diag_dominance: a 1x1 matrix has no off-diagonal entries");
  double diag = 0.0, off = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) (i == j ? diag : off) += std::abs(t(i, j));
  diag /= static_cast<double>(n);
  off /= static_cast<double>(n * (n - 1));
  DiagDominance d;
  if (off == 0.0) {
    d.unbounded = diag > 0.0;
    d.ratio = d.unbounded ? std::numeric_limits<double>::infinity() : 1.0;
  } else {
    d.ratio = diag / off;
  }
  return d;
}

HeatmapResult export_heatmap(const HeatmapSpec& spec) {
  HeatmapResult r;
  r.matrix = select_tensor(read_checkpoint_tensors(spec.checkpoint), spec.tensor);
  if (spec.min.has_value() != spec.max.has_value())
    throw std::invalid_argument("export: give both --min and --max or neither");
  if (spec.min) {
    r.min = *spec.min;
    r.max = *spec.max;
  } else {
    std::tie(r.min, r.max) = symmetric_bounds(r.matrix);
  }
  if (!(r.min < r.max)) throw std::invalid_argument("export: bounds must satisfy min < max");
  r.csv = spec.out.string() + ".csv";
  r.pgm = spec.out.string() + ".pgm";
  if (spec.out.has_parent_path()) std::filesystem::create_directories(spec.out.parent_path());
  std::ofstream csv(r.csv);
  std::ofstream pgm(r.pgm, std::ios::binary);
  if (!csv || !pgm) throw std::runtime_error("export: cannot write under " + spec.out.string());
  write_csv(r.matrix, csv);
  write_pgm(r.matrix, r.min, r.max, pgm);
  return r;
}

}  // namespace rum
