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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "birdseye/errors.hpp"

namespace birdseye {

/// 8-bit RGB image, row-major, interleaved channels.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  /// Zero-filled image. Throws InvalidInput on non-positive dimensions.
  ImageBuffer(int width, int height);
  ImageBuffer(int width, int height, std::vector<std::uint8_t> data);
  /// Image filled with a single colour.
  static ImageBuffer filled(int width, int height, std::uint8_t r,
                            std::uint8_t g, std::uint8_t b);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct LatentShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

std::string to_string(const LatentShape& shape);

/// C x H x W latent grid stored channel-major.
class LatentTensor {
 public:
  LatentTensor() = default;
  explicit LatentTensor(LatentShape shape);
  LatentTensor(LatentShape shape, std::vector<double> data);

  const LatentShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool all_finite() const;

  friend bool operator==(const LatentTensor&, const LatentTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  LatentShape shape_;
  std::vector<double> data_;
};

/// Sequence of token vectors produced by a text encoder.
class TextEmbedding {
 public:
  TextEmbedding() = default;
  TextEmbedding(int tokens, int dim);
  TextEmbedding(int tokens, int dim, std::vector<double> data);

  int tokens() const { return tokens_; }
  int dim() const { return dim_; }
  std::size_t size() const { return data_.size(); }

  double& at(int token, int d) { return data_[static_cast<std::size_t>(token) * dim_ + d]; }
  double at(int token, int d) const {
    return data_[static_cast<std::size_t>(token) * dim_ + d];
  }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool all_finite() const;

  friend bool operator==(const TextEmbedding&, const TextEmbedding&) = default;

 private:
  int tokens_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

/// Euclidean distance between two embeddings of the same shape.
double distance(const TextEmbedding& a, const TextEmbedding& b);

/// Cumulative signal fractions alpha_bar[t] for t in [0, T).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Validates monotonicity; throws ScheduleError otherwise.
  NoiseSchedule(std::vector<double> alpha_bar, std::string kind);

  /// Stable-diffusion style: betas linear in sqrt space.
  static NoiseSchedule scaled_linear(int num_train_steps = 1000,
                                     double beta_start = 0.00085,
                                     double beta_end = 0.012);
  static NoiseSchedule linear(int num_train_steps = 1000,
                              double beta_start = 1e-4, double beta_end = 0.02);

  int num_train_steps() const { return static_cast<int>(alpha_bar_.size()); }
  /// Throws ScheduleError when t is out of range.
  double alpha_bar(int t) const;
  std::span<const double> alpha_bars() const { return alpha_bar_; }
  const std::string& kind() const { return kind_; }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::vector<double> alpha_bar_;
  std::string kind_;
};

/// Iteration counts and learning rates of the two finetuning stages.
/// Stage A targets the input image, stage B its perspective-warped copy.
struct FinetuneSchedule {
  int stage_a_embed_iters = 1000;
  double stage_a_embed_lr = 1e-3;
  int stage_a_adapter_iters = 500;
  double stage_a_adapter_lr = 2e-4;
  int stage_b_embed_iters = 500;
  int stage_b_adapter_iters = 250;
  std::uint64_t seed = 0;

  void validate() const;
  static FinetuneSchedule none(std::uint64_t seed = 0);

  friend bool operator==(const FinetuneSchedule&, const FinetuneSchedule&) = default;
};

enum class GuidanceKind { kMutualInformation, kL2, kWasserstein, kNone };

std::string_view to_string(GuidanceKind kind);
/// Accepts "mi", "l2", "wasserstein", "none".
GuidanceKind parse_guidance_kind(std::string_view text);

/// Histogram value range: either fixed bounds or min/max over both inputs.
struct ValueRange {
  bool per_pair = true;
  double lo = -1.0;
  double hi = 1.0;

  static ValueRange fixed(double lo, double hi) { return {false, lo, hi}; }
  static ValueRange union_min_max() { return {}; }

  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

struct GuidanceConfig {
  GuidanceKind kind = GuidanceKind::kMutualInformation;
  double lambda = 1e-5;
  int num_bins = 64;
  /// Kernel standard deviation in units of bin width; 0 selects hard binning.
  double soft_bandwidth = 0.5;
  ValueRange value_range;

  void validate() const;
  bool soft() const { return soft_bandwidth > 0.0; }

  friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

/// "<view label>, <caption>", e.g. "aerial view, a cosy living room".
std::string build_target_prompt(std::string_view view_label,
                                std::string_view caption);

inline constexpr std::string_view kAerialView = "aerial view";

}  // namespace birdseye
