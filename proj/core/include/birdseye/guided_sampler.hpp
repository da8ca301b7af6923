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
#include <vector>

#include "birdseye/backend.hpp"

namespace birdseye {

/// (z_t - sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t). Throws
/// ScheduleError when alpha_bar_t <= 0.
LatentTensor predict_x0(const LatentTensor& z_t, const LatentTensor& eps_hat, int t,
                        const NoiseSchedule& sched);
LatentTensor predict_x0(const LatentTensor& z_t, const LatentTensor& eps_hat, double alpha_bar);

struct GuidanceUpdate {
  LatentTensor z;
  /// Norm of the applied displacement z - z_t.
  double norm = 0.0;
};

/// One guidance update of z_t given its extrapolated clean latent z0_t. The
/// functional's gradient with respect to z0_t is carried back to z_t through
/// the extrapolation, a factor 1/sqrt(alpha_bar). MI is ascended, L2 and
/// Wasserstein distances are descended, and kind none or lambda 0 return z_t
/// unchanged. Throws GuidanceFailure(step) on a non-finite gradient.
GuidanceUpdate guidance_step(const LatentTensor& z_t, const LatentTensor& z0_t,
                             const LatentTensor& z_S, const GuidanceConfig& cfg,
                             double alpha_bar, std::size_t step = 0);

/// Uniformly spaced descending timesteps, ending at T/steps - 1.
std::vector<int> sampling_timesteps(int num_train_steps, int steps);

struct SamplerStep {
  std::size_t index = 0;
  int t = 0;
  bool guided = false;
  double guidance_norm = 0.0;
  /// MI between the step's clean-latent estimate (after guidance) and z_S.
  double mi = 0.0;
};

struct SamplerOptions {
  int steps = 50;
  double cfg_scale = 1.0;
  /// Prompt used for the unconditional branch of classifier-free guidance.
  std::string negative_prompt;
};

/// Deterministic (eta = 0) DDIM sampling from a seeded Gaussian latent, with
/// classifier-free guidance and a guidance update at every step but the last.
/// When `trace` is given, one entry per step is appended.
LatentTensor guided_sample(const DenoiserBackend& backend, const TextEmbedding& e_T,
                           const LatentTensor& z_S, const GuidanceConfig& cfg,
                           const SamplerOptions& options, std::uint64_t seed,
                           std::vector<SamplerStep>* trace = nullptr);

/// Guidance strength that is effective for the toy backend's latent scale.
double toy_guidance_lambda(GuidanceKind kind);

}  // namespace birdseye
