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

#include "birdseye/finetune.hpp"

#include <cmath>

#include "birdseye/image_io.hpp"

namespace birdseye {

Adam::Adam(std::size_t size, double lr, Config config)
    : lr_(lr), config_(config), m_(size, 0.0), v_(size, 0.0) {
  if (!(lr > 0.0)) throw InvalidInput("learning rate must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeMismatch("optimizer was built for " + std::to_string(m_.size()) + " parameters");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, steps_);
  const double c2 = 1.0 - std::pow(config_.beta2, steps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
  }
}

namespace {

LossProbe draw_probe(const DenoiserBackend& backend, Rng& rng) {
  LossProbe p;
  p.t = static_cast<int>(rng.index(static_cast<std::uint64_t>(backend.schedule().num_train_steps())));
  p.eps = gaussian_latent(backend.latent_shape(), rng);
  return p;
}

void check_target(const DenoiserBackend& backend, const LatentTensor& z) {
  if (!(z.shape() == backend.latent_shape())) {
    throw ShapeMismatch("target latent " + to_string(z.shape()) + " does not match backend " +
                        to_string(backend.latent_shape()));
  }
}

void check_iters(int iters) {
  if (iters < 0) throw InvalidInput("iteration count must be non-negative");
}

std::vector<double> flatten(const ParameterSet& p) {
  std::vector<double> out;
  out.reserve(p.numel());
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

void unflatten(std::span<const double> flat, ParameterSet& p) {
  std::size_t k = 0;
  for (auto& t : p.tensors()) {
    for (double& v : t.values) v = flat[k++];
  }
}

}  // namespace

std::vector<LossProbe> make_loss_probes(const DenoiserBackend& backend, std::size_t count,
                                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, "loss-probes"));
  std::vector<LossProbe> probes;
  probes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) probes.push_back(draw_probe(backend, rng));
  return probes;
}

double probe_loss(const DenoiserBackend& backend, const LatentTensor& z0,
                  const TextEmbedding& e, std::span<const LossProbe> probes) {
  if (probes.empty()) throw InvalidInput("no loss probes");
  double sum = 0.0;
  for (const auto& p : probes) sum += denoising_loss(backend, z0, e, p.t, p.eps);
  return sum / static_cast<double>(probes.size());
}

TextEmbedding optimize_text_embedding(const DenoiserBackend& backend, const LatentTensor& z_target,
                                      const TextEmbedding& e_init, int iters, double lr,
                                      std::uint64_t seed, std::vector<double>* losses,
                                      std::string_view stage) {
  check_iters(iters);
  check_target(backend, z_target);
  TextEmbedding e = e_init;
  if (iters == 0) return e;
  Adam adam(e.size(), lr);
  Rng rng(seed);
  for (int i = 0; i < iters; ++i) {
    const LossProbe p = draw_probe(backend, rng);
    const LatentTensor x_t = add_noise(z_target, p.eps, p.t, backend.schedule());
    const DenoiseGradients g =
        backend.denoising_gradients(x_t, p.t, e, p.eps, {.embedding = true});
    if (!std::isfinite(g.loss) || !g.d_embedding.all_finite()) {
      throw DivergenceError(std::string(stage), static_cast<std::size_t>(i));
    }
    if (losses) losses->push_back(g.loss);
    adam.step(e.values(), g.d_embedding.values());
  }
  return e;
}

AdapterCheckpoint finetune_adapter(DenoiserBackend& backend, const LatentTensor& z_target,
                                   const TextEmbedding& e_fixed, int iters, double lr,
                                   std::uint64_t seed, std::vector<double>* losses,
                                   std::string_view stage) {
  check_iters(iters);
  check_target(backend, z_target);
  AdapterCheckpoint ckpt = backend.adapter_checkpoint();
  if (iters == 0) return ckpt;
  std::vector<double> flat = flatten(ckpt.params);
  Adam adam(flat.size(), lr);
  Rng rng(seed);
  for (int i = 0; i < iters; ++i) {
    const LossProbe p = draw_probe(backend, rng);
    const LatentTensor x_t = add_noise(z_target, p.eps, p.t, backend.schedule());
    const DenoiseGradients g =
        backend.denoising_gradients(x_t, p.t, e_fixed, p.eps, {.adapter = true});
    if (!std::isfinite(g.loss) || !g.d_adapter.all_finite()) {
      throw DivergenceError(std::string(stage), static_cast<std::size_t>(i));
    }
    if (losses) losses->push_back(g.loss);
    adam.step(flat, flatten(g.d_adapter));
    unflatten(flat, ckpt.params);
    backend.load_adapter(ckpt);
  }
  return ckpt;
}

FinetuneResult two_stage_finetune(DenoiserBackend& backend, const ImageBuffer& I_S,
                                  std::string_view t_S, const IPMConfig& ipm_cfg,
                                  const FinetuneSchedule& sched, const FinetuneOptions& options,
                                  const std::function<void(const FinetuneResult&)>& on_stage) {
  sched.validate();
  if (t_S.empty()) throw InvalidInput("source caption is empty");
  auto report = [&](FinetuneResult& r, const char* stage) {
    r.completed_stage = stage;
    if (on_stage) on_stage(r);
  };

  FinetuneResult r;
  const int size = backend.image_size();
  r.source = (I_S.width() == size && I_S.height() == size) ? I_S : center_crop_resize(I_S, size);
  r.second_view = options.view == SecondStageView::kRotation45
                      ? compute_rotation(r.source, 45.0, ipm_cfg)
                      : compute_ipm(r.source, ipm_cfg);
  const LatentTensor z_S = backend.encode_image(r.source);
  const LatentTensor z_H = backend.encode_image(r.second_view);
  r.e_S = backend.encode_text(t_S);
  r.initial_adapter = backend.adapter_checkpoint();
  const auto probes = make_loss_probes(backend, options.probe_count, sched.seed);
  r.probe_loss_before = probe_loss(backend, z_S, r.e_S, probes);
  r.e_opt = r.e_S;
  r.e_H = r.e_S;
  r.checkpoint = r.initial_adapter;
  report(r, "start");

  r.e_opt = optimize_text_embedding(backend, z_S, r.e_S, sched.stage_a_embed_iters,
                                    sched.stage_a_embed_lr,
                                    derive_seed(sched.seed, "stage_a_embed"),
                                    &r.curves.stage_a_embed, "stage_a_embed");
  r.e_H = r.e_opt;
  report(r, "stage_a_embed");

  r.checkpoint = finetune_adapter(backend, z_S, r.e_opt, sched.stage_a_adapter_iters,
                                  sched.stage_a_adapter_lr,
                                  derive_seed(sched.seed, "stage_a_adapter"),
                                  &r.curves.stage_a_adapter, "stage_a_adapter");
  report(r, "stage_a_adapter");

  r.e_H = optimize_text_embedding(backend, z_H, r.e_opt, sched.stage_b_embed_iters,
                                  sched.stage_a_embed_lr,
                                  derive_seed(sched.seed, "stage_b_embed"),
                                  &r.curves.stage_b_embed, "stage_b_embed");
  report(r, "stage_b_embed");

  r.checkpoint = finetune_adapter(backend, z_H, r.e_H, sched.stage_b_adapter_iters,
                                  sched.stage_a_adapter_lr,
                                  derive_seed(sched.seed, "stage_b_adapter"),
                                  &r.curves.stage_b_adapter, "stage_b_adapter");
  r.probe_loss_after = probe_loss(backend, z_S, r.e_opt, probes);
  report(r, "stage_b_adapter");
  return r;
}

}  // namespace birdseye
