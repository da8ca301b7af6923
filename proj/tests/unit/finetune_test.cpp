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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "birdseye/toy_backend.hpp"
#include "oracles.hpp"

namespace birdseye {
namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

FinetuneSchedule short_schedule(std::uint64_t seed) {
  FinetuneSchedule s;
  s.stage_a_embed_iters = 200;
  s.stage_a_adapter_iters = 100;
  s.stage_b_embed_iters = 100;
  s.stage_b_adapter_iters = 50;
  s.seed = seed;
  return s;
}

// Toy backend whose gradients turn non-finite after a number of calls.
class PoisonedBackend final : public DenoiserBackend {
 public:
  explicit PoisonedBackend(int healthy_calls) : healthy_(healthy_calls) {}

  std::string name() const override { return toy_.name(); }
  LatentShape latent_shape() const override { return toy_.latent_shape(); }
  int image_size() const override { return toy_.image_size(); }
  const NoiseSchedule& schedule() const override { return toy_.schedule(); }
  TextEmbedding encode_text(std::string_view t) const override { return toy_.encode_text(t); }
  LatentTensor encode_image(const ImageBuffer& i) const override { return toy_.encode_image(i); }
  ImageBuffer decode_latents(const LatentTensor& z) const override {
    return toy_.decode_latents(z);
  }
  LatentTensor predict_noise(const LatentTensor& x, int t, const TextEmbedding& e) const override {
    return toy_.predict_noise(x, t, e);
  }
  DenoiseGradients denoising_gradients(const LatentTensor& x, int t, const TextEmbedding& e,
                                       const LatentTensor& eps,
                                       GradientRequest req) const override {
    auto g = toy_.denoising_gradients(x, t, e, eps, req);
    if (calls_++ >= healthy_) g.loss = std::numeric_limits<double>::quiet_NaN();
    return g;
  }
  AdapterCheckpoint adapter_checkpoint() const override { return toy_.adapter_checkpoint(); }
  void load_adapter(const AdapterCheckpoint& c) override { toy_.load_adapter(c); }
  void reset_adapter() override { toy_.reset_adapter(); }
  std::string base_fingerprint() const override { return toy_.base_fingerprint(); }

 private:
  ToyBackend toy_;
  int healthy_;
  mutable int calls_ = 0;
};

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const std::vector<double> g = {0.5, -10.0, 1e-3};
  Adam adam(3, 0.1);
  adam.step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -1.9, 1e-6);
  EXPECT_NEAR(p[2], 2.9, 1e-4);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> p = testing::normal_vector(10, 3, 5.0);
  Adam adam(p.size(), 0.05);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> g(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) g[k] = 2.0 * (p[k] - static_cast<double>(k));
    adam.step(p, g);
  }
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], static_cast<double>(k), 1e-2);
}

TEST(OptimizeTextEmbedding, ZeroItersReturnsInit) {
  ToyBackend toy;
  const auto z = toy.encode_image(testing::smooth_image(64, 64));
  const auto e = toy.encode_text("a barn");
  EXPECT_EQ(optimize_text_embedding(toy, z, e, 0, 1e-2, 1), e);
  EXPECT_THROW(optimize_text_embedding(toy, z, e, -1, 1e-2, 1), InvalidInput);
}

TEST(OptimizeTextEmbedding, LossFallsByHalfIn200Steps) {
  ToyBackend toy;
  const auto z = toy.encode_image(testing::smooth_image(64, 64));
  std::vector<double> losses;
  optimize_text_embedding(toy, z, toy.encode_text("a barn"), 200, 1e-2, 0, &losses);
  ASSERT_EQ(losses.size(), 200u);
  const double first = mean(std::span(losses).first(10));
  const double last = mean(std::span(losses).last(10));
  EXPECT_LT(last, 0.5 * first) << first << " -> " << last;
}

TEST(OptimizeTextEmbedding, LeavesModelUntouched) {
  ToyBackend toy;
  const auto z = toy.encode_image(testing::smooth_image(64, 64));
  const auto before = toy.adapter_checkpoint();
  const auto fingerprint = toy.base_fingerprint();
  optimize_text_embedding(toy, z, toy.encode_text("a barn"), 50, 1e-2, 0);
  EXPECT_EQ(toy.adapter_checkpoint(), before);
  EXPECT_EQ(toy.base_fingerprint(), fingerprint);
}

TEST(OptimizeTextEmbedding, NonFiniteLossReportsIteration) {
  PoisonedBackend poisoned(7);
  const auto z = poisoned.encode_image(testing::smooth_image(64, 64));
  try {
    optimize_text_embedding(poisoned, z, poisoned.encode_text("x"), 20, 1e-2, 0, nullptr,
                            "stage_a_embed");
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.iteration(), 7u);
    EXPECT_EQ(e.stage(), "stage_a_embed");
  }
}

TEST(FinetuneAdapter, ZeroItersKeepsInitialAdapter) {
  ToyBackend toy;
  const auto z = toy.encode_image(testing::smooth_image(64, 64));
  const auto before = toy.adapter_checkpoint();
  EXPECT_EQ(finetune_adapter(toy, z, toy.encode_text("a"), 0, 2e-4, 1), before);
  EXPECT_EQ(toy.adapter_checkpoint(), before);
}

TEST(FinetuneAdapter, BaseStaysFrozenAndAdapterMoves) {
  ToyBackend toy;
  const auto z = toy.encode_image(testing::smooth_image(64, 64));
  const auto e = toy.encode_text("a tower");
  const auto fingerprint = toy.base_fingerprint();
  Rng rng(4);
  const auto x = add_noise(z, gaussian_latent(toy.latent_shape(), rng), 300, toy.schedule());
  const auto base_pred = toy.predict_noise(x, 300, e);
  const auto ckpt = finetune_adapter(toy, z, e, 100, 1e-3, 2);
  EXPECT_EQ(toy.base_fingerprint(), fingerprint);
  EXPECT_EQ(toy.adapter_checkpoint(), ckpt);
  EXPECT_NE(ckpt, ToyBackend().adapter_checkpoint());
  toy.reset_adapter();
  EXPECT_EQ(toy.predict_noise(x, 300, e), base_pred);
}

TEST(FinetuneAdapter, NonFiniteLossReportsIteration) {
  PoisonedBackend poisoned(3);
  const auto z = poisoned.encode_image(testing::smooth_image(64, 64));
  try {
    finetune_adapter(poisoned, z, poisoned.encode_text("x"), 10, 1e-3, 0, nullptr, "stage_b");
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.iteration(), 3u);
    EXPECT_EQ(e.stage(), "stage_b");
  }
}

TEST(TwoStageFinetune, EmptyScheduleIsNoOp) {
  ToyBackend toy;
  const auto before = toy.adapter_checkpoint();
  const auto r = two_stage_finetune(toy, testing::smooth_image(80, 64), "a church", IPMConfig{},
                                    FinetuneSchedule::none(3));
  EXPECT_EQ(r.e_opt, r.e_S);
  EXPECT_EQ(r.e_H, r.e_S);
  EXPECT_EQ(r.e_S, toy.encode_text("a church"));
  EXPECT_EQ(r.checkpoint, before);
  EXPECT_EQ(toy.adapter_checkpoint(), before);
  EXPECT_EQ(r.source.width(), 64);
  EXPECT_EQ(r.completed_stage, "stage_b_adapter");
}

TEST(TwoStageFinetune, ReducesHeldOutLoss) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ToyBackend toy(ToyConfig{.seed = seed});
    const auto fingerprint = toy.base_fingerprint();
    const auto r = two_stage_finetune(toy, testing::smooth_image(64, 64, 0.1 * seed),
                                      "a lighthouse", IPMConfig{}, FinetuneSchedule{.seed = seed});
    EXPECT_LT(r.probe_loss_after, 0.5 * r.probe_loss_before) << "seed " << seed;
    EXPECT_EQ(toy.base_fingerprint(), fingerprint);
    EXPECT_EQ(r.curves.stage_a_embed.size(), 1000u);
    EXPECT_EQ(r.curves.stage_a_adapter.size(), 500u);
    EXPECT_EQ(r.curves.stage_b_embed.size(), 500u);
    EXPECT_EQ(r.curves.stage_b_adapter.size(), 250u);
  }
}

TEST(TwoStageFinetune, IsDeterministic) {
  ToyBackend a;
  ToyBackend b;
  const auto img = testing::smooth_image(64, 64);
  const auto ra = two_stage_finetune(a, img, "a mill", IPMConfig{}, short_schedule(5));
  const auto rb = two_stage_finetune(b, img, "a mill", IPMConfig{}, short_schedule(5));
  EXPECT_EQ(ra.e_opt, rb.e_opt);
  EXPECT_EQ(ra.e_H, rb.e_H);
  EXPECT_EQ(ra.checkpoint, rb.checkpoint);
  EXPECT_EQ(ra.curves.stage_b_adapter, rb.curves.stage_b_adapter);
}

TEST(TwoStageFinetune, EmbeddingsStayInVicinity) {
  const auto img = testing::smooth_image(64, 64);
  double prev_a = std::numeric_limits<double>::infinity();
  double prev_b = std::numeric_limits<double>::infinity();
  for (double lr : {1e-2, 1e-3, 1e-4, 1e-5}) {
    ToyBackend toy;
    auto sched = short_schedule(1);
    sched.stage_a_embed_lr = lr;
    const auto r = two_stage_finetune(toy, img, "a pier", IPMConfig{}, sched);
    const double da = distance(r.e_opt, r.e_S);
    const double db = distance(r.e_H, r.e_opt);
    EXPECT_TRUE(std::isfinite(da) && da > 0.0);
    EXPECT_TRUE(std::isfinite(db) && db > 0.0);
    EXPECT_LT(da, prev_a) << lr;
    EXPECT_LT(db, prev_b) << lr;
    prev_a = da;
    prev_b = db;
  }
}

TEST(TwoStageFinetune, ReportsStagesInOrder) {
  ToyBackend toy;
  std::vector<std::string> stages;
  two_stage_finetune(toy, testing::smooth_image(64, 64), "a dam", IPMConfig{},
                     short_schedule(2), {},
                     [&](const FinetuneResult& r) { stages.push_back(r.completed_stage); });
  EXPECT_EQ(stages, (std::vector<std::string>{"start", "stage_a_embed", "stage_a_adapter",
                                              "stage_b_embed", "stage_b_adapter"}));
}

TEST(TwoStageFinetune, SecondViewFollowsOption) {
  ToyBackend toy;
  const auto img = testing::smooth_image(64, 64);
  auto sched = FinetuneSchedule::none(0);
  const auto ipm = two_stage_finetune(toy, img, "a", IPMConfig{}, sched);
  FinetuneOptions rot;
  rot.view = SecondStageView::kRotation45;
  const auto rotated = two_stage_finetune(toy, img, "a", IPMConfig{}, sched, rot);
  EXPECT_EQ(ipm.second_view, compute_ipm(img, IPMConfig{}));
  EXPECT_EQ(rotated.second_view, compute_rotation(img, 45.0, IPMConfig{}));
}

TEST(TwoStageFinetune, NoSecondStageMatchesStageAOnly) {
  const auto img = testing::smooth_image(64, 64);
  auto sched = short_schedule(4);
  sched.stage_b_embed_iters = 0;
  sched.stage_b_adapter_iters = 0;
  ToyBackend toy;
  const auto r = two_stage_finetune(toy, img, "a mast", IPMConfig{}, sched);
  EXPECT_EQ(r.e_H, r.e_opt);
  EXPECT_TRUE(r.curves.stage_b_embed.empty());

  ToyBackend manual;
  const auto z = manual.encode_image(img);
  const auto e_opt = optimize_text_embedding(manual, z, manual.encode_text("a mast"), 200, 1e-3,
                                             derive_seed(4, "stage_a_embed"));
  EXPECT_EQ(e_opt, r.e_opt);
  EXPECT_EQ(finetune_adapter(manual, z, e_opt, 100, 2e-4, derive_seed(4, "stage_a_adapter")),
            r.checkpoint);
}

}  // namespace
}  // namespace birdseye
