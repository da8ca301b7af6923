// Copyright 2026 The Birdseye Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "birdseye/backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace birdseye {

std::size_t ParameterTensor::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

ParameterSet::ParameterSet(std::vector<ParameterTensor> tensors)
    : tensors_(std::move(tensors)) {
  for (const auto& t : tensors_) {
    if (t.values.size() != t.numel()) {
      throw ShapeMismatch("parameter '" + t.name + "' has " +
                          std::to_string(t.values.size()) + " values for " +
                          std::to_string(t.numel()) + " elements");
    }
  }
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

const ParameterTensor& ParameterSet::at(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw InvalidInput("no parameter named '" + std::string(name) + "'");
}

ParameterTensor& ParameterSet::at(std::string_view name) {
  return const_cast<ParameterTensor&>(std::as_const(*this).at(name));
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out = *this;
  for (auto& t : out.tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name ||
        tensors_[i].shape != other.tensors_[i].shape) {
      return false;
    }
  }
  return true;
}

bool ParameterSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

LatentTensor add_noise(const LatentTensor& z0, const LatentTensor& eps, int t,
                       const NoiseSchedule& sched) {
  if (!(z0.shape() == eps.shape())) {
    throw ShapeMismatch("add_noise: latent " + to_string(z0.shape()) + " vs noise " +
                        to_string(eps.shape()));
  }
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  LatentTensor out(z0.shape());
  auto o = out.values();
  auto x = z0.values();
  auto n = eps.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * n[i];
  return out;
}

double denoising_loss(const DenoiserBackend& backend, const LatentTensor& z0,
                      const TextEmbedding& e, int t, const LatentTensor& eps) {
  const LatentTensor x_t = add_noise(z0, eps, t, backend.schedule());
  const LatentTensor pred = backend.predict_noise(x_t, t, e);
  if (!(pred.shape() == eps.shape())) throw ShapeMismatch("denoising_loss: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - eps.values()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

LatentTensor gaussian_latent(LatentShape shape, Rng& rng) {
  LatentTensor z(shape);
  for (double& v : z.values()) v = rng.normal();
  return z;
}

namespace {

constexpr char kCheckpointMagic[8] = {'B', 'E', 'A', 'D', 'A', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

}  // namespace

void write_adapter_checkpoint(const std::string& path, const AdapterCheckpoint& ckpt) {
  nlohmann::json layers = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.params.tensors()) {
    layers.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.numel();
  }
  const nlohmann::json manifest = {{"version", kCheckpointVersion},
                                   {"backend", ckpt.backend},
                                   {"rank", ckpt.rank},
                                   {"dtype", "float32-le"},
                                   {"layers", layers}};
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  const auto header_len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : ckpt.params.tensors()) {
    for (double v : t.values) {
      const auto f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

AdapterCheckpoint read_adapter_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint32_t header_len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError(path + " is not an adapter checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(&version), 4) ||
      !in.read(reinterpret_cast<char*>(&header_len), 4)) {
    throw IoError("truncated checkpoint " + path);
  }
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw IoError("truncated checkpoint " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint manifest: " + e.what());
  }
  if (!manifest.contains("version") || manifest["version"] != kCheckpointVersion) {
    throw IoError(path + ": checkpoint manifest lacks a supported version");
  }
  AdapterCheckpoint ckpt;
  ckpt.backend = manifest.at("backend").get<std::string>();
  ckpt.rank = manifest.at("rank").get<int>();
  std::vector<ParameterTensor> tensors;
  for (const auto& layer : manifest.at("layers")) {
    ParameterTensor t;
    t.name = layer.at("name").get<std::string>();
    t.shape = layer.at("shape").get<std::vector<int>>();
    t.values.resize(t.numel());
    for (double& v : t.values) {
      float f = 0.0f;
      if (!in.read(reinterpret_cast<char*>(&f), 4)) {
        throw IoError("truncated checkpoint data in " + path);
      }
      v = f;
    }
    tensors.push_back(std::move(t));
  }
  ckpt.params = ParameterSet(std::move(tensors));
  return ckpt;
}

}  // namespace birdseye
