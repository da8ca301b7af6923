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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "birdseye/histogram_mi.hpp"
#include "birdseye/toy_backend.hpp"
#include "oracles.hpp"

namespace birdseye {
namespace {

LatentTensor random_latent(LatentShape shape, std::uint64_t seed, double scale = 1.0) {
  return LatentTensor(shape, testing::normal_vector(shape.size(), seed, scale));
}

GuidanceConfig guidance(GuidanceKind kind, double lambda) {
  GuidanceConfig g;
  g.kind = kind;
  g.lambda = lambda;
  return g;
}

struct ToyScene {
  ToyBackend toy;
  LatentTensor z_S = toy.encode_image(testing::smooth_image(64, 64, 0.3));
  TextEmbedding e_T = toy.encode_text("aerial view, a farmhouse");
};

TEST(PredictX0, UnitAlphaBarReturnsInput) {
  const auto z = random_latent({2, 3, 3}, 1);
  EXPECT_EQ(predict_x0(z, random_latent({2, 3, 3}, 2), 1.0), z);
}

TEST(PredictX0, ZeroNoiseQuarterAlphaBarDoubles) {
  const auto z = random_latent({2, 3, 3}, 1);
  const auto x0 = predict_x0(z, LatentTensor({2, 3, 3}), 0.25);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_DOUBLE_EQ(x0.values()[i], 2 * z.values()[i]);
}

TEST(PredictX0, InvertsAddNoise) {
  const auto sched = NoiseSchedule::scaled_linear(1000);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = static_cast<int>(rng.index(1000));
    const auto z0 = random_latent({4, 8, 8}, 100 + trial);
    const auto eps = random_latent({4, 8, 8}, 500 + trial);
    const auto back = predict_x0(add_noise(z0, eps, t, sched), eps, t, sched);
    for (std::size_t i = 0; i < z0.size(); ++i) {
      ASSERT_NEAR(back.values()[i], z0.values()[i], 1e-12) << "t=" << t;
    }
  }
}

TEST(PredictX0, RejectsNonPositiveAlphaBar) {
  const auto z = random_latent({1, 2, 2}, 1);
  EXPECT_THROW(predict_x0(z, z, 0.0), ScheduleError);
  EXPECT_THROW(predict_x0(z, z, -0.5), ScheduleError);
  EXPECT_THROW(predict_x0(z, random_latent({1, 2, 3}, 1), 0.5), ShapeMismatch);
}

TEST(GuidanceStep, ZeroLambdaIsBitExactIdentity) {
  const auto z = random_latent({4, 8, 8}, 1);
  const auto z0 = random_latent({4, 8, 8}, 2);
  const auto zs = random_latent({4, 8, 8}, 3);
  for (auto kind : {GuidanceKind::kMutualInformation, GuidanceKind::kL2,
                    GuidanceKind::kWasserstein, GuidanceKind::kNone}) {
    const auto u = guidance_step(z, z0, zs, guidance(kind, 0.0), 0.5);
    EXPECT_EQ(u.z, z);
    EXPECT_EQ(u.norm, 0.0);
  }
  EXPECT_EQ(guidance_step(z, z0, zs, guidance(GuidanceKind::kNone, 1.0), 0.5).z, z);
}

TEST(GuidanceStep, MiUpdateIncreasesMiForSmallLambda) {
  const GuidanceConfig base = guidance(GuidanceKind::kMutualInformation, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto z = random_latent({4, 8, 8}, seed);
    const auto eps = random_latent({4, 8, 8}, seed + 100);
    const auto zs = random_latent({4, 8, 8}, seed + 200);
    const double ab = 0.4;
    const auto z0 = predict_x0(z, eps, ab);
    const double before = mutual_information(z0.values(), zs.values(), base);
    const auto grad = mi_gradient(z0.values(), zs.values(), base);
    // Step small enough that the clean estimate moves by ~1e-4 of its scale.
    const double lambda = 1e-4 * ab / testing::norm2(grad) * std::sqrt(z.size());
    auto cfg = base;
    cfg.lambda = lambda;
    const auto u = guidance_step(z, z0, zs, cfg, ab, 0);
    const double after = mutual_information(predict_x0(u.z, eps, ab).values(), zs.values(), base);
    EXPECT_GT(after, before) << "seed " << seed;
  }
}

TEST(GuidanceStep, DistanceUpdatesDecreaseDistance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto z = random_latent({4, 8, 8}, seed);
    const auto eps = random_latent({4, 8, 8}, seed + 100);
    const auto zs = random_latent({4, 8, 8}, seed + 200, 0.5);
    const double ab = 0.6;
    const auto z0 = predict_x0(z, eps, ab);
    const auto l2 = guidance_step(z, z0, zs, guidance(GuidanceKind::kL2, 1e-3), ab);
    EXPECT_LT(l2_distance(predict_x0(l2.z, eps, ab).values(), zs.values()),
              l2_distance(z0.values(), zs.values()));
    const GuidanceConfig w = guidance(GuidanceKind::kWasserstein, 1e-3);
    const auto ws = guidance_step(z, z0, zs, w, ab);
    EXPECT_LT(wasserstein_distance(predict_x0(ws.z, eps, ab).values(), zs.values(), w),
              wasserstein_distance(z0.values(), zs.values(), w));
  }
}

TEST(GuidanceStep, NonFiniteInputReportsStep) {
  auto z0 = random_latent({1, 4, 4}, 2);
  z0.values()[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    guidance_step(random_latent({1, 4, 4}, 1), z0, random_latent({1, 4, 4}, 3),
                  guidance(GuidanceKind::kL2, 1.0), 0.5, 17);
    FAIL() << "expected guidance failure";
  } catch (const GuidanceFailure& e) {
    EXPECT_EQ(e.step(), 17u);
  }
}

TEST(SamplingTimesteps, UniformDescending) {
  const auto ts = sampling_timesteps(1000, 50);
  ASSERT_EQ(ts.size(), 50u);
  EXPECT_EQ(ts.front(), 999);
  EXPECT_EQ(ts.back(), 19);
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_EQ(ts[i - 1] - ts[i], 20);
  EXPECT_EQ(sampling_timesteps(1000, 1), std::vector<int>{999});
  EXPECT_THROW(sampling_timesteps(1000, 0), InvalidInput);
  EXPECT_THROW(sampling_timesteps(10, 11), InvalidInput);
}

TEST(GuidedSample, GuidanceOffEquivalence) {
  ToyScene s;
  for (auto kind :
       {GuidanceKind::kMutualInformation, GuidanceKind::kL2, GuidanceKind::kWasserstein}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const auto off = guided_sample(s.toy, s.e_T, s.z_S, guidance(GuidanceKind::kNone, 0.1),
                                     SamplerOptions{}, seed);
      const auto zero =
          guided_sample(s.toy, s.e_T, s.z_S, guidance(kind, 0.0), SamplerOptions{}, seed);
      EXPECT_EQ(off, zero);
    }
  }
}

TEST(GuidedSample, SingleStepNeverGuides) {
  ToyScene s;
  std::vector<SamplerStep> trace;
  SamplerOptions one;
  one.steps = 1;
  const auto guided = guided_sample(s.toy, s.e_T, s.z_S,
                                    guidance(GuidanceKind::kMutualInformation, 10.0), one, 4,
                                    &trace);
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_FALSE(trace[0].guided);
  EXPECT_EQ(guided, guided_sample(s.toy, s.e_T, s.z_S, guidance(GuidanceKind::kNone, 0.0), one, 4));
}

TEST(GuidedSample, FinalStepIsUnguided) {
  ToyScene s;
  std::vector<SamplerStep> trace;
  const auto cfg = guidance(GuidanceKind::kMutualInformation,
                            toy_guidance_lambda(GuidanceKind::kMutualInformation));
  guided_sample(s.toy, s.e_T, s.z_S, cfg, SamplerOptions{}, 9, &trace);
  ASSERT_EQ(trace.size(), 50u);
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    EXPECT_TRUE(trace[i].guided) << i;
    EXPECT_GT(trace[i].guidance_norm, 0.0) << i;
  }
  EXPECT_FALSE(trace.back().guided);
  EXPECT_EQ(trace.back().guidance_norm, 0.0);
  EXPECT_EQ(trace.back().t, 19);
}

TEST(GuidedSample, DeterministicPerSeed) {
  ToyScene s;
  const auto cfg = guidance(GuidanceKind::kMutualInformation, 0.1);
  SamplerOptions opts;
  opts.cfg_scale = 3.0;
  const auto a = guided_sample(s.toy, s.e_T, s.z_S, cfg, opts, 21);
  const auto b = guided_sample(s.toy, s.e_T, s.z_S, cfg, opts, 21);
  const auto c = guided_sample(s.toy, s.e_T, s.z_S, cfg, opts, 22);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(a, guided_sample(s.toy, s.e_T, s.z_S, cfg, SamplerOptions{}, 21));
}

TEST(GuidedSample, RejectsMismatchedSource) {
  ToyScene s;
  EXPECT_THROW(guided_sample(s.toy, s.e_T, random_latent({4, 8, 9}, 1), GuidanceConfig{},
                             SamplerOptions{}, 0),
               ShapeMismatch);
}

// Paired comparison of guided against unguided sampling over 20 seeds.
struct Paired {
  int improved = 0;
  double mean_off = 0.0;
  double mean_on = 0.0;
};

template <typename Score>
Paired paired(const ToyScene& s, const GuidanceConfig& cfg, Score score) {
  Paired p;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double off = score(guided_sample(s.toy, s.e_T, s.z_S, guidance(GuidanceKind::kNone, 0),
                                           SamplerOptions{}, seed));
    const double on = score(guided_sample(s.toy, s.e_T, s.z_S, cfg, SamplerOptions{}, seed));
    p.improved += on > off;
    p.mean_off += off / 20;
    p.mean_on += on / 20;
  }
  return p;
}

TEST(GuidedSample, MiGuidanceRaisesMi) {
  ToyScene s;
  const GuidanceConfig measure;
  const auto p = paired(s, guidance(GuidanceKind::kMutualInformation,
                                    toy_guidance_lambda(GuidanceKind::kMutualInformation)),
                        [&](const LatentTensor& z) {
                          return mutual_information(z.values(), s.z_S.values(), measure);
                        });
  EXPECT_GT(p.mean_on, p.mean_off);
  EXPECT_GE(p.improved, 18);
}

TEST(GuidedSample, L2GuidanceLowersDistance) {
  ToyScene s;
  const auto p = paired(s, guidance(GuidanceKind::kL2, toy_guidance_lambda(GuidanceKind::kL2)),
                        [&](const LatentTensor& z) {
                          return -l2_distance(z.values(), s.z_S.values());
                        });
  EXPECT_GT(p.mean_on, p.mean_off);
  EXPECT_GE(p.improved, 18);
}

TEST(GuidedSample, WassersteinGuidanceLowersDistance) {
  ToyScene s;
  const auto cfg =
      guidance(GuidanceKind::kWasserstein, toy_guidance_lambda(GuidanceKind::kWasserstein));
  const auto p = paired(s, cfg, [&](const LatentTensor& z) {
    return -wasserstein_distance(z.values(), s.z_S.values(), cfg);
  });
  EXPECT_GT(p.mean_on, p.mean_off);
}

TEST(GuidedSample, MiRisesMonotonicallyWithSmallLambda) {
  ToyScene s;
  const GuidanceConfig measure;
  const double l0 = toy_guidance_lambda(GuidanceKind::kMutualInformation);
  double prev = -std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, l0 / 10, l0}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto z = guided_sample(s.toy, s.e_T, s.z_S,
                                   guidance(GuidanceKind::kMutualInformation, lambda),
                                   SamplerOptions{}, seed);
      mean += mutual_information(z.values(), s.z_S.values(), measure) / 20;
    }
    EXPECT_GE(mean, prev) << lambda;
    prev = mean;
  }
}

}  // namespace
}  // namespace birdseye
