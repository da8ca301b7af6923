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

#include <cstdint>
#include <memory>

#include "birdseye/backend.hpp"

namespace birdseye {

struct ToyConfig {
  std::uint64_t seed = 0;
  int rank = 2;
  int hidden = 32;
  /// Spread of the latent prior the noise head assumes around the text mean.
  double prior_std = 0.15;
};

/// Small deterministic latent diffusion model.
///
/// Latents are 4x8x8: the 64x64 input is reduced to a 16x16 grid of 4x4
/// block luma values, mapped to [-1, 1] and folded space-to-depth into four
/// channels. The noise predictor is a two-layer affine network conditioned on
/// a sinusoidal timestep embedding and the mean text token, with a closed-form
/// Gaussian noise head centred on a text-dependent latent mean. Each affine
/// map carries a rank-`rank` additive adapter whose up factor starts at zero.
class ToyBackend final : public DenoiserBackend {
 public:
  static constexpr int kImageSize = 64;
  static constexpr int kTokens = 4;
  static constexpr int kEmbedDim = 16;
  static constexpr int kTimeDim = 8;

  explicit ToyBackend(ToyConfig config = {});

  std::string name() const override { return "toy"; }
  LatentShape latent_shape() const override { return {4, 8, 8}; }
  int image_size() const override { return kImageSize; }
  const NoiseSchedule& schedule() const override { return schedule_; }

  TextEmbedding encode_text(std::string_view text) const override;
  /// Requires a 64x64 image.
  LatentTensor encode_image(const ImageBuffer& img) const override;
  /// Gray 64x64 image of constant 4x4 blocks.
  ImageBuffer decode_latents(const LatentTensor& z) const override;
  LatentTensor predict_noise(const LatentTensor& x_t, int t,
                             const TextEmbedding& e) const override;
  DenoiseGradients denoising_gradients(const LatentTensor& x_t, int t,
                                       const TextEmbedding& e, const LatentTensor& eps,
                                       GradientRequest request) const override;

  AdapterCheckpoint adapter_checkpoint() const override;
  void load_adapter(const AdapterCheckpoint& ckpt) override;
  void reset_adapter() override;
  std::string base_fingerprint() const override;

  const ToyConfig& config() const { return config_; }

  /// Frozen base weights.
  struct Impl;

 private:
  ToyConfig config_;
  NoiseSchedule schedule_;
  std::shared_ptr<const Impl> base_;
  ParameterSet initial_adapter_;
  ParameterSet adapter_;
};

}  // namespace birdseye
