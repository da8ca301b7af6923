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

#pragma once

#include <nlohmann/json.hpp>

#include "birdseye/domain.hpp"

// JSON encodings of the domain types. Doubles are written with round-trip
// precision, so decode(encode(x)) == x for every finite value.
namespace birdseye {

void to_json(nlohmann::json& j, const ImageBuffer& img);
void from_json(const nlohmann::json& j, ImageBuffer& img);

void to_json(nlohmann::json& j, const LatentShape& shape);
void from_json(const nlohmann::json& j, LatentShape& shape);

void to_json(nlohmann::json& j, const LatentTensor& z);
void from_json(const nlohmann::json& j, LatentTensor& z);

void to_json(nlohmann::json& j, const TextEmbedding& e);
void from_json(const nlohmann::json& j, TextEmbedding& e);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

void to_json(nlohmann::json& j, const FinetuneSchedule& s);
void from_json(const nlohmann::json& j, FinetuneSchedule& s);

void to_json(nlohmann::json& j, const ValueRange& r);
void from_json(const nlohmann::json& j, ValueRange& r);

void to_json(nlohmann::json& j, const GuidanceConfig& g);
void from_json(const nlohmann::json& j, GuidanceConfig& g);

/// Binary text-embedding file: "BETX", u32 version, u32 tokens, u32 dim,
/// then tokens*dim little-endian float64 values.
void write_embedding(const std::string& path, const TextEmbedding& e);
TextEmbedding read_embedding(const std::string& path);

}  // namespace birdseye
