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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "birdseye/backend.hpp"
#include "birdseye/homography.hpp"

namespace birdseye {

/// Adaptive-moment gradient descent over a flat parameter vector.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(std::size_t size, double lr, Config config);
  Adam(std::size_t size, double lr) : Adam(size, lr, Config{}) {}

  /// One update of `params` in place.
  void step(std::span<double> params, std::span<const double> grads);
  int steps_taken() const { return steps_; }

 private:
  double lr_;
  Config config_;
  std::vector<double> m_;
  std::vector<double> v_;
  int steps_ = 0;
};

/// Fixed (timestep, noise) pairs used to score a model without training
/// randomness, so losses are comparable across runs.
struct LossProbe {
  int t = 0;
  LatentTensor eps;
};

std::vector<LossProbe> make_loss_probes(const DenoiserBackend& backend, std::size_t count,
                                        std::uint64_t seed);
/// Mean denoising loss of the backend's current adapter over `probes`.
double probe_loss(const DenoiserBackend& backend, const LatentTensor& z0,
                  const TextEmbedding& e, std::span<const LossProbe> probes);

/// Gradient steps on the text embedding with the model frozen. Each step draws
/// a fresh timestep and noise from `seed`. Per-step losses are appended to
/// `losses` when given. Throws DivergenceError on a non-finite loss.
TextEmbedding optimize_text_embedding(const DenoiserBackend& backend, const LatentTensor& z_target,
                                      const TextEmbedding& e_init, int iters, double lr,
                                      std::uint64_t seed, std::vector<double>* losses = nullptr,
                                      std::string_view stage = "embedding");

/// Gradient steps on the backend's adapter weights at a fixed embedding. The
/// adapter is updated in place and returned.
AdapterCheckpoint finetune_adapter(DenoiserBackend& backend, const LatentTensor& z_target,
                                   const TextEmbedding& e_fixed, int iters, double lr,
                                   std::uint64_t seed, std::vector<double>* losses = nullptr,
                                   std::string_view stage = "adapter");

/// How the second-stage target image is derived from the input.
enum class SecondStageView { kInversePerspective, kRotation45 };

struct FinetuneOptions {
  SecondStageView view = SecondStageView::kInversePerspective;
  std::size_t probe_count = 64;
};

struct LossCurves {
  std::vector<double> stage_a_embed;
  std::vector<double> stage_a_adapter;
  std::vector<double> stage_b_embed;
  std::vector<double> stage_b_adapter;
};

struct FinetuneResult {
  TextEmbedding e_S;
  TextEmbedding e_opt;
  TextEmbedding e_H;
  AdapterCheckpoint initial_adapter;
  AdapterCheckpoint checkpoint;
  /// Input resized to the backend resolution.
  ImageBuffer source;
  /// Second-stage target image (IPM or rotation of `source`).
  ImageBuffer second_view;
  LossCurves curves;
  /// Held-out probe losses on the source latent: (e_S, initial adapter) and
  /// (e_opt, final adapter).
  double probe_loss_before = 0.0;
  double probe_loss_after = 0.0;
  /// Last stage that finished: "start", "stage_a_embed", ..., "stage_b_adapter".
  std::string completed_stage = "start";
};

/// Two-stage test-time finetuning. Stage A fits e_opt from encode_text(t_S)
/// and then the adapter, both towards the input latent; stage B continues
/// from e_opt to e_H and keeps training the same adapter, towards the latent
/// of the second view. `on_stage` (optional) sees the partial result after
/// every stage so callers can persist progress.
FinetuneResult two_stage_finetune(
    DenoiserBackend& backend, const ImageBuffer& I_S, std::string_view t_S,
    const IPMConfig& ipm_cfg, const FinetuneSchedule& sched, const FinetuneOptions& options = {},
    const std::function<void(const FinetuneResult&)>& on_stage = {});

}  // namespace birdseye
