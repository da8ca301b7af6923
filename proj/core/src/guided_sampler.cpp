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

#include "birdseye/guided_sampler.hpp"

#include <cmath>

#include "birdseye/histogram_mi.hpp"

namespace birdseye {

LatentTensor predict_x0(const LatentTensor& z_t, const LatentTensor& eps_hat, double alpha_bar) {
  if (!(alpha_bar > 0.0) || alpha_bar > 1.0) {
    throw ScheduleError("predict_x0 needs 0 < alpha_bar <= 1, got " + std::to_string(alpha_bar));
  }
  if (!(z_t.shape() == eps_hat.shape())) {
    throw ShapeMismatch("predict_x0: latent " + to_string(z_t.shape()) + " vs noise " +
                        to_string(eps_hat.shape()));
  }
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  LatentTensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = (z_t.values()[i] - b * eps_hat.values()[i]) / a;
  }
  return out;
}

LatentTensor predict_x0(const LatentTensor& z_t, const LatentTensor& eps_hat, int t,
                        const NoiseSchedule& sched) {
  return predict_x0(z_t, eps_hat, sched.alpha_bar(t));
}

GuidanceUpdate guidance_step(const LatentTensor& z_t, const LatentTensor& z0_t,
                             const LatentTensor& z_S, const GuidanceConfig& cfg,
                             double alpha_bar, std::size_t step) {
  cfg.validate();
  if (!(z_t.shape() == z0_t.shape()) || !(z_t.shape() == z_S.shape())) {
    throw ShapeMismatch("guidance_step: latent shapes differ");
  }
  if (cfg.kind == GuidanceKind::kNone || cfg.lambda == 0.0) return {z_t, 0.0};
  if (!(alpha_bar > 0.0)) throw ScheduleError("guidance_step needs alpha_bar > 0");
  if (!z0_t.all_finite()) throw GuidanceFailure(step);

  const auto x = z0_t.values();
  const auto ref = z_S.values();
  std::vector<double> grad;
  double sign = -1.0;
  switch (cfg.kind) {
    case GuidanceKind::kMutualInformation:
      grad = mi_gradient(x, ref, cfg);
      sign = 1.0;
      break;
    case GuidanceKind::kL2:
      grad = l2_gradient(x, ref);
      break;
    case GuidanceKind::kWasserstein:
      grad = wasserstein_gradient(x, ref, cfg);
      break;
    case GuidanceKind::kNone:
      break;
  }
  const double scale = sign * cfg.lambda / std::sqrt(alpha_bar);
  GuidanceUpdate u{z_t, 0.0};
  double sq = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw GuidanceFailure(step);
    const double d = scale * grad[i];
    u.z.values()[i] += d;
    sq += d * d;
  }
  u.norm = std::sqrt(sq);
  return u;
}

std::vector<int> sampling_timesteps(int num_train_steps, int steps) {
  if (steps < 1) throw InvalidInput("sampling needs at least one step");
  if (steps > num_train_steps) {
    throw InvalidInput("more sampling steps than training timesteps");
  }
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const auto kk = static_cast<long long>(steps - k);
    ts[static_cast<std::size_t>(k)] = static_cast<int>(kk * num_train_steps / steps) - 1;
  }
  return ts;
}

LatentTensor guided_sample(const DenoiserBackend& backend, const TextEmbedding& e_T,
                           const LatentTensor& z_S, const GuidanceConfig& cfg,
                           const SamplerOptions& options, std::uint64_t seed,
                           std::vector<SamplerStep>* trace) {
  cfg.validate();
  if (!(z_S.shape() == backend.latent_shape())) {
    throw ShapeMismatch("source latent " + to_string(z_S.shape()) + " does not match backend " +
                        to_string(backend.latent_shape()));
  }
  const NoiseSchedule& sched = backend.schedule();
  const auto ts = sampling_timesteps(sched.num_train_steps(), options.steps);
  const bool use_cfg = options.cfg_scale != 1.0;
  const TextEmbedding e_uncond =
      use_cfg ? backend.encode_text(options.negative_prompt) : TextEmbedding{};

  Rng rng(derive_seed(seed, "sampler-init"));
  LatentTensor z = gaussian_latent(backend.latent_shape(), rng);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const bool last = i + 1 == ts.size();
    const double ab = sched.alpha_bar(t);
    const double ab_prev = last ? 1.0 : sched.alpha_bar(ts[i + 1]);

    LatentTensor eps = backend.predict_noise(z, t, e_T);
    if (use_cfg) {
      const LatentTensor eps_u = backend.predict_noise(z, t, e_uncond);
      for (std::size_t k = 0; k < eps.size(); ++k) {
        eps.values()[k] = eps_u.values()[k] + options.cfg_scale * (eps.values()[k] - eps_u.values()[k]);
      }
    }
    LatentTensor z0 = predict_x0(z, eps, ab);
    SamplerStep rec{i, t, false, 0.0, 0.0};
    if (!last) {
      GuidanceUpdate g = guidance_step(z, z0, z_S, cfg, ab, i);
      if (g.norm > 0.0) {
        rec.guided = true;
        rec.guidance_norm = g.norm;
        z = std::move(g.z);
        z0 = predict_x0(z, eps, ab);
      }
    }
    if (trace) {
      rec.mi = mutual_information(z0.values(), z_S.values(), cfg);
      trace->push_back(rec);
    }
    const double a = std::sqrt(ab_prev);
    const double b = std::sqrt(1.0 - ab_prev);
    for (std::size_t k = 0; k < z.size(); ++k) {
      z.values()[k] = a * z0.values()[k] + b * eps.values()[k];
    }
  }
  return z;
}

double toy_guidance_lambda(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::kMutualInformation:
      return 0.1;
    case GuidanceKind::kL2:
      return 1e-2;
    case GuidanceKind::kWasserstein:
      return 1.0;
    case GuidanceKind::kNone:
      return 0.0;
  }
  return 0.0;
}

}  // namespace birdseye
