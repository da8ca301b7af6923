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

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "birdseye/domain.hpp"
#include "birdseye/rng.hpp"

namespace birdseye {

/// Named parameter array.
struct ParameterTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  std::size_t numel() const;
  friend bool operator==(const ParameterTensor&, const ParameterTensor&) = default;
};

/// Ordered collection of parameter arrays (adapter weights or their
/// gradients).
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<ParameterTensor> tensors);

  std::vector<ParameterTensor>& tensors() { return tensors_; }
  const std::vector<ParameterTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const;

  const ParameterTensor& at(std::string_view name) const;
  ParameterTensor& at(std::string_view name);

  /// Same names and shapes, all values zero.
  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;
  bool all_finite() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<ParameterTensor> tensors_;
};

/// Adapter weights together with the metadata needed to reload them.
struct AdapterCheckpoint {
  std::string backend;
  int rank = 0;
  ParameterSet params;

  friend bool operator==(const AdapterCheckpoint&, const AdapterCheckpoint&) = default;
};

/// Which gradients a training step needs.
struct GradientRequest {
  bool embedding = false;
  bool adapter = false;
};

struct DenoiseGradients {
  double loss = 0.0;
  /// Present when requested.
  TextEmbedding d_embedding;
  ParameterSet d_adapter;
};

/// A latent diffusion model: text encoder, image codec, noise predictor and a
/// set of trainable low-rank adapter weights on top of frozen base weights.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual std::string name() const = 0;
  virtual LatentShape latent_shape() const = 0;
  /// Square input resolution expected by encode_image.
  virtual int image_size() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;

  virtual TextEmbedding encode_text(std::string_view text) const = 0;
  virtual LatentTensor encode_image(const ImageBuffer& img) const = 0;
  virtual ImageBuffer decode_latents(const LatentTensor& z) const = 0;
  /// Noise estimate for x_t at timestep t; same shape as x_t.
  virtual LatentTensor predict_noise(const LatentTensor& x_t, int t,
                                     const TextEmbedding& e) const = 0;

  /// mean((predict_noise(x_t, t, e) - eps)^2) and the requested gradients.
  virtual DenoiseGradients denoising_gradients(const LatentTensor& x_t, int t,
                                               const TextEmbedding& e,
                                               const LatentTensor& eps,
                                               GradientRequest request) const = 0;

  virtual AdapterCheckpoint adapter_checkpoint() const = 0;
  /// Throws InvalidInput if the layout does not match.
  virtual void load_adapter(const AdapterCheckpoint& ckpt) = 0;
  /// Restores the initial adapter, under which the model equals its base.
  virtual void reset_adapter() = 0;
  /// Digest of the frozen base weights.
  virtual std::string base_fingerprint() const = 0;

  ParameterSet adapter_params() const { return adapter_checkpoint().params; }
};

/// sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
LatentTensor add_noise(const LatentTensor& z0, const LatentTensor& eps, int t,
                       const NoiseSchedule& sched);

/// Mean squared error between the backend's noise estimate for
/// add_noise(z0, eps, t) and eps.
double denoising_loss(const DenoiserBackend& backend, const LatentTensor& z0,
                      const TextEmbedding& e, int t, const LatentTensor& eps);

/// Standard-normal latent drawn from `rng`.
LatentTensor gaussian_latent(LatentShape shape, Rng& rng);

/// Adapter checkpoint file: "BEADAPT1", u32 format version, u32 manifest
/// length, JSON manifest (version, backend, rank, layer names, shapes and
/// offsets), then every tensor as little-endian float32 in manifest order.
void write_adapter_checkpoint(const std::string& path, const AdapterCheckpoint& ckpt);
AdapterCheckpoint read_adapter_checkpoint(const std::string& path);

}  // namespace birdseye
