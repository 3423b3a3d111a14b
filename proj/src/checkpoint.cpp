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

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rum/trainer.hpp"

namespace rum {

namespace {

using Json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'R', 'U', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t x) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return x;
}

void write_f64(std::ostream& os, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) write_u64(os, std::bit_cast<std::uint64_t>(v));
  }
}

void read_f64(std::istream& is, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
  } else {
    for (double& v : values) v = std::bit_cast<double>(read_u64(is));
  }
}

struct Directory {
  Json header;
  std::vector<std::pair<std::string, Shape>> tensors;
  std::streamoff payload_start = 0;
};

Directory read_directory(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path.string() + ": not a RUMCKPT1 checkpoint");
  const std::uint64_t length = read_u64(is);
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw std::runtime_error(path.string() + ": truncated header");
  Directory d;
  d.header = Json::parse(text);
  d.payload_start = is.tellg();
  std::int64_t expected = 0;
  for (const auto& entry : d.header.at("tensors")) {
    const auto extents = entry.at("shape").get<std::vector<Index>>();
    if (entry.at("offset").get<std::int64_t>() != expected)
      throw std::runtime_error(path.string() + ": tensor offsets are not contiguous");
    Shape shape = Shape::from(extents);
    expected += shape.size() * static_cast<std::int64_t>(sizeof(double));
    d.tensors.emplace_back(entry.at("name").get<std::string>(), shape);
  }
  return d;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& p : c.params) tensors.emplace_back(p.name, &p.value);
  for (std::size_t k = 0; k < c.optimizer.first.size(); ++k)
    tensors.emplace_back("optimizer.first/" + c.params.at(k).name, &c.optimizer.first[k]);
  for (std::size_t k = 0; k < c.optimizer.second.size(); ++k)
    tensors.emplace_back("optimizer.second/" + c.params.at(k).name, &c.optimizer.second[k]);

  Json header;
  header["format"] = "RUMCKPT1";
  Json config = Json::object();
  for (const auto& [k, v] : c.config.entries()) config[k] = v;
  header["config"] = config;
  header["iteration"] = c.iteration;
  header["rng"] = {{"algorithm", Rng::kAlgorithm}, {"state", c.rng_state}};
  const auto& oc = c.optimizer.config;
  header["optimizer"] = {{"kind", optimizer_name(oc.kind)}, {"lr", oc.lr},
                         {"decay", oc.decay},                {"beta1", oc.beta1},
                         {"beta2", oc.beta2},                {"eps", oc.eps},
                         {"step", c.optimizer.step}};
  Json dir = Json::array();
  std::int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    dir.push_back({{"name", name}, {"shape", t->shape().extents()}, {"offset", offset}});
    offset += t->size() * static_cast<std::int64_t>(sizeof(double));
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kMagic, 8);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) write_f64(os, t->data());
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::map<std::string, Tensor> read_checkpoint_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  const Directory d = read_directory(is, path);
  std::map<std::string, Tensor> out;
  for (const auto& [name, shape] : d.tensors) {
    Tensor t(shape);
    read_f64(is, t.data());
    out.emplace(name, std::move(t));
  }
  return out;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  const Directory d = read_directory(is, path);

  Checkpoint c;
  for (const auto& [key, value] : d.header.at("config").items())
    c.config.set(key, value.get<std::string>());
  c.iteration = d.header.at("iteration").get<std::int64_t>();
  const auto& rng = d.header.at("rng");
  if (rng.at("algorithm").get<std::string>() != Rng::kAlgorithm)
    throw std::runtime_error(path.string() + ": unsupported rng algorithm");
  c.rng_state = rng.at("state").get<std::string>();
  const auto& opt = d.header.at("optimizer");
  c.optimizer.config.kind = parse_optimizer(opt.at("kind").get<std::string>());
  c.optimizer.config.lr = opt.at("lr").get<double>();
  c.optimizer.config.decay = opt.at("decay").get<double>();
  c.optimizer.config.beta1 = opt.at("beta1").get<double>();
  c.optimizer.config.beta2 = opt.at("beta2").get<double>();
  c.optimizer.config.eps = opt.at("eps").get<double>();
  c.optimizer.step = opt.at("step").get<std::int64_t>();

  for (const auto& [name, shape] : d.tensors) {
    Tensor t(shape);
    read_f64(is, t.data());
    if (name.rfind("optimizer.first/", 0) == 0)
      c.optimizer.first.push_back(std::move(t));
    else if (name.rfind("optimizer.second/", 0) == 0)
      c.optimizer.second.push_back(std::move(t));
    else
      c.params.push_back({name, std::move(t)});
  }
  const auto layout = model_layout(c.config.model());
  if (layout.size() != c.params.size())
    throw std::runtime_error(path.string() + ": parameter set does not match its config");
  for (std::size_t k = 0; k < layout.size(); ++k)
    if (layout[k].first != c.params[k].name || !(layout[k].second == c.params[k].value.shape()))
      throw std::runtime_error(path.string() + ": unexpected tensor " + c.params[k].name);
  return c;
}

}  // namespace rum
