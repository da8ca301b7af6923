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

#include "birdseye/domain.hpp"

#include <algorithm>
#include <cmath>

namespace birdseye {

ImageBuffer::ImageBuffer(int width, int height)
    : ImageBuffer(width, height,
                  std::vector<std::uint8_t>(
                      width > 0 && height > 0
                          ? static_cast<std::size_t>(width) * height * kChannels
                          : 0)) {}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0) {
    throw InvalidInput("image dimensions must be positive, got " +
                       std::to_string(width) + "x" + std::to_string(height));
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw InvalidInput("image data length does not match width*height*3");
  }
}

ImageBuffer ImageBuffer::filled(int width, int height, std::uint8_t r,
                                std::uint8_t g, std::uint8_t b) {
  ImageBuffer img(width, height);
  auto px = img.data();
  for (std::size_t i = 0; i < px.size(); i += kChannels) {
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }
  return img;
}

std::string to_string(const LatentShape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) +
         "x" + std::to_string(shape.width);
}

LatentTensor::LatentTensor(LatentShape shape)
    : LatentTensor(shape, std::vector<double>(shape.size(), 0.0)) {}

LatentTensor::LatentTensor(LatentShape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw InvalidInput("latent shape must be positive, got " + to_string(shape));
  }
  if (data_.size() != shape.size()) {
    throw ShapeMismatch("latent data length " + std::to_string(data_.size()) +
                        " does not match shape " + to_string(shape));
  }
}

bool LatentTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

TextEmbedding::TextEmbedding(int tokens, int dim)
    : TextEmbedding(tokens, dim,
                    std::vector<double>(tokens > 0 && dim > 0
                                            ? static_cast<std::size_t>(tokens) * dim
                                            : 0)) {}

TextEmbedding::TextEmbedding(int tokens, int dim, std::vector<double> data)
    : tokens_(tokens), dim_(dim), data_(std::move(data)) {
  if (tokens <= 0 || dim <= 0) {
    throw InvalidInput("text embedding shape must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(tokens) * dim) {
    throw ShapeMismatch("text embedding data length does not match tokens*dim");
  }
}

bool TextEmbedding::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double distance(const TextEmbedding& a, const TextEmbedding& b) {
  if (a.tokens() != b.tokens() || a.dim() != b.dim()) {
    throw ShapeMismatch("text embeddings differ in shape");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, std::string kind)
    : alpha_bar_(std::move(alpha_bar)), kind_(std::move(kind)) {
  if (alpha_bar_.empty()) throw ScheduleError("noise schedule is empty");
  if (!(alpha_bar_[0] <= 1.0)) throw ScheduleError("alpha_bar[0] exceeds 1");
  for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t] > 0.0) || !std::isfinite(alpha_bar_[t])) {
      throw ScheduleError("alpha_bar[" + std::to_string(t) + "] is not positive");
    }
    if (t > 0 && !(alpha_bar_[t] < alpha_bar_[t - 1])) {
      throw ScheduleError("alpha_bar is not strictly decreasing at t=" +
                          std::to_string(t));
    }
  }
}

namespace {

std::vector<double> cumulative_alphas(const std::vector<double>& betas) {
  std::vector<double> out(betas.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    prod *= 1.0 - betas[i];
    out[i] = prod;
  }
  return out;
}

}  // namespace

NoiseSchedule NoiseSchedule::scaled_linear(int num_train_steps, double beta_start,
                                           double beta_end) {
  if (num_train_steps < 2) throw ScheduleError("need at least 2 train steps");
  std::vector<double> betas(num_train_steps);
  const double a = std::sqrt(beta_start);
  const double b = std::sqrt(beta_end);
  for (int i = 0; i < num_train_steps; ++i) {
    const double s = a + (b - a) * i / (num_train_steps - 1);
    betas[i] = s * s;
  }
  return NoiseSchedule(cumulative_alphas(betas), "scaled_linear");
}

NoiseSchedule NoiseSchedule::linear(int num_train_steps, double beta_start,
                                    double beta_end) {
  if (num_train_steps < 2) throw ScheduleError("need at least 2 train steps");
  std::vector<double> betas(num_train_steps);
  for (int i = 0; i < num_train_steps; ++i) {
    betas[i] = beta_start + (beta_end - beta_start) * i / (num_train_steps - 1);
  }
  return NoiseSchedule(cumulative_alphas(betas), "linear");
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t >= num_train_steps()) {
    throw ScheduleError("timestep " + std::to_string(t) + " outside [0, " +
                        std::to_string(num_train_steps()) + ")");
  }
  return alpha_bar_[t];
}

void FinetuneSchedule::validate() const {
  if (stage_a_embed_iters < 0 || stage_a_adapter_iters < 0 ||
      stage_b_embed_iters < 0 || stage_b_adapter_iters < 0) {
    throw InvalidInput("finetune iteration counts must be non-negative");
  }
  if (!(stage_a_embed_lr > 0.0) || !(stage_a_adapter_lr > 0.0)) {
    throw InvalidInput("finetune learning rates must be positive");
  }
}

FinetuneSchedule FinetuneSchedule::none(std::uint64_t seed) {
  FinetuneSchedule s;
  s.stage_a_embed_iters = 0;
  s.stage_a_adapter_iters = 0;
  s.stage_b_embed_iters = 0;
  s.stage_b_adapter_iters = 0;
  s.seed = seed;
  return s;
}

std::string_view to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::kMutualInformation:
      return "mi";
    case GuidanceKind::kL2:
      return "l2";
    case GuidanceKind::kWasserstein:
      return "wasserstein";
    case GuidanceKind::kNone:
      return "none";
  }
  return "none";
}

GuidanceKind parse_guidance_kind(std::string_view text) {
  if (text == "mi") return GuidanceKind::kMutualInformation;
  if (text == "l2") return GuidanceKind::kL2;
  if (text == "wasserstein") return GuidanceKind::kWasserstein;
  if (text == "none") return GuidanceKind::kNone;
  throw InvalidInput("unknown guidance kind '" + std::string(text) + "'");
}

void GuidanceConfig::validate() const {
  if (num_bins < 2) throw InvalidInput("num_bins must be at least 2");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidInput("guidance lambda must be finite and non-negative");
  }
  if (!(soft_bandwidth >= 0.0) || !std::isfinite(soft_bandwidth)) {
    throw InvalidInput("soft_bandwidth must be finite and non-negative");
  }
  if (!value_range.per_pair && !(value_range.hi > value_range.lo)) {
    throw InvalidInput("fixed value range requires hi > lo");
  }
}

std::string build_target_prompt(std::string_view view_label,
                                std::string_view caption) {
  if (caption.empty()) throw InvalidInput("caption must not be empty");
  if (view_label.empty()) throw InvalidInput("view label must not be empty");
  std::string out(view_label);
  out += ", ";
  out += caption;
  return out;
}

}  // namespace birdseye
