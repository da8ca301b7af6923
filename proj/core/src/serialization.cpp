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

#include "birdseye/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace birdseye {

using nlohmann::json;

void to_json(json& j, const ImageBuffer& img) {
  j = json{{"width", img.width()},
           {"height", img.height()},
           {"data", std::vector<std::uint8_t>(img.data().begin(), img.data().end())}};
}

void from_json(const json& j, ImageBuffer& img) {
  img = ImageBuffer(j.at("width").get<int>(), j.at("height").get<int>(),
                    j.at("data").get<std::vector<std::uint8_t>>());
}

void to_json(json& j, const LatentShape& shape) {
  j = json::array({shape.channels, shape.height, shape.width});
}

void from_json(const json& j, LatentShape& shape) {
  shape = {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()};
}

void to_json(json& j, const LatentTensor& z) {
  j = json{{"shape", z.shape()},
           {"data", std::vector<double>(z.values().begin(), z.values().end())}};
}

void from_json(const json& j, LatentTensor& z) {
  z = LatentTensor(j.at("shape").get<LatentShape>(),
                   j.at("data").get<std::vector<double>>());
}

void to_json(json& j, const TextEmbedding& e) {
  j = json{{"tokens", e.tokens()},
           {"dim", e.dim()},
           {"data", std::vector<double>(e.values().begin(), e.values().end())}};
}

void from_json(const json& j, TextEmbedding& e) {
  e = TextEmbedding(j.at("tokens").get<int>(), j.at("dim").get<int>(),
                    j.at("data").get<std::vector<double>>());
}

void to_json(json& j, const NoiseSchedule& s) {
  j = json{{"kind", s.kind()},
           {"alpha_bar",
            std::vector<double>(s.alpha_bars().begin(), s.alpha_bars().end())}};
}

void from_json(const json& j, NoiseSchedule& s) {
  s = NoiseSchedule(j.at("alpha_bar").get<std::vector<double>>(),
                    j.at("kind").get<std::string>());
}

void to_json(json& j, const FinetuneSchedule& s) {
  j = json{{"stage_a_embed_iters", s.stage_a_embed_iters},
           {"stage_a_embed_lr", s.stage_a_embed_lr},
           {"stage_a_adapter_iters", s.stage_a_adapter_iters},
           {"stage_a_adapter_lr", s.stage_a_adapter_lr},
           {"stage_b_embed_iters", s.stage_b_embed_iters},
           {"stage_b_adapter_iters", s.stage_b_adapter_iters},
           {"seed", s.seed}};
}

void from_json(const json& j, FinetuneSchedule& s) {
  j.at("stage_a_embed_iters").get_to(s.stage_a_embed_iters);
  j.at("stage_a_embed_lr").get_to(s.stage_a_embed_lr);
  j.at("stage_a_adapter_iters").get_to(s.stage_a_adapter_iters);
  j.at("stage_a_adapter_lr").get_to(s.stage_a_adapter_lr);
  j.at("stage_b_embed_iters").get_to(s.stage_b_embed_iters);
  j.at("stage_b_adapter_iters").get_to(s.stage_b_adapter_iters);
  j.at("seed").get_to(s.seed);
  s.validate();
}

void to_json(json& j, const ValueRange& r) {
  if (r.per_pair) {
    j = "per_pair";
  } else {
    j = json{{"lo", r.lo}, {"hi", r.hi}};
  }
}

void from_json(const json& j, ValueRange& r) {
  if (j.is_string()) {
    if (j.get<std::string>() != "per_pair") {
      throw InvalidInput("unknown value range '" + j.get<std::string>() + "'");
    }
    r = ValueRange::union_min_max();
  } else {
    r = ValueRange::fixed(j.at("lo").get<double>(), j.at("hi").get<double>());
  }
}

void to_json(json& j, const GuidanceConfig& g) {
  j = json{{"kind", std::string(to_string(g.kind))},
           {"lambda", g.lambda},
           {"num_bins", g.num_bins},
           {"soft_bandwidth", g.soft_bandwidth},
           {"value_range", g.value_range}};
}

void from_json(const json& j, GuidanceConfig& g) {
  g.kind = parse_guidance_kind(j.at("kind").get<std::string>());
  j.at("lambda").get_to(g.lambda);
  j.at("num_bins").get_to(g.num_bins);
  j.at("soft_bandwidth").get_to(g.soft_bandwidth);
  j.at("value_range").get_to(g.value_range);
  g.validate();
}

namespace {

constexpr char kEmbeddingMagic[4] = {'B', 'E', 'T', 'X'};
constexpr std::uint32_t kEmbeddingVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError("truncated file " + path);
  }
  return v;
}

}  // namespace

void write_embedding(const std::string& path, const TextEmbedding& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kEmbeddingMagic, 4);
  put<std::uint32_t>(out, kEmbeddingVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tokens()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(e.dim()));
  for (double v : e.values()) put<double>(out, v);
  if (!out) throw IoError("failed writing " + path);
}

TextEmbedding read_embedding(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw IoError(path + " is not a text-embedding file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kEmbeddingVersion) {
    throw IoError(path + ": unsupported embedding version " + std::to_string(version));
  }
  const auto tokens = get<std::uint32_t>(in, path);
  const auto dim = get<std::uint32_t>(in, path);
  std::vector<double> data(static_cast<std::size_t>(tokens) * dim);
  for (double& v : data) v = get<double>(in, path);
  return TextEmbedding(static_cast<int>(tokens), static_cast<int>(dim), std::move(data));
}

}  // namespace birdseye
