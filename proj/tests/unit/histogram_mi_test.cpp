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

#include "birdseye/histogram_mi.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"

namespace birdseye {
namespace {

using testing::finite_difference_gradient;
using testing::normal_vector;
using testing::relative_error;
using testing::uniform_vector;

GuidanceConfig soft_cfg(int bins, double bandwidth = 0.5) {
  GuidanceConfig cfg;
  cfg.num_bins = bins;
  cfg.soft_bandwidth = bandwidth;
  return cfg;
}

GuidanceConfig hard_cfg(int bins) { return soft_cfg(bins, 0.0); }

GuidanceConfig fixed_cfg(int bins, double lo, double hi, double bandwidth) {
  GuidanceConfig cfg = soft_cfg(bins, bandwidth);
  cfg.value_range = ValueRange::fixed(lo, hi);
  return cfg;
}

TEST(FlattenLatents, SingleElement) {
  const LatentTensor z({1, 1, 1}, {3.5});
  EXPECT_EQ(flatten_latents(z), std::vector<double>{3.5});
}

TEST(FlattenLatents, ChannelMajorOrder) {
  LatentTensor z({2, 1, 2});
  z.at(0, 0, 0) = 1;
  z.at(0, 0, 1) = 2;
  z.at(1, 0, 0) = 3;
  z.at(1, 0, 1) = 4;
  EXPECT_EQ(flatten_latents(z), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(unflatten_latents(flatten_latents(z), z.shape()), z);
}

TEST(SoftHistogram, OneSamplePerBinCentreIsUniform) {
  const int bins = 8;
  auto cfg = fixed_cfg(bins, 0.0, 8.0, 0.05);
  std::vector<double> v;
  for (int b = 0; b < bins; ++b) v.push_back(b + 0.5);
  const Pdf1D pdf = soft_histogram(v, cfg);
  for (double p : pdf.p) EXPECT_NEAR(p, 1.0 / bins, 1e-12);
}

TEST(SoftHistogram, IdenticalSamplesCollapseToCentreBin) {
  const std::vector<double> v(50, 2.25);
  const Pdf1D pdf = soft_histogram(v, soft_cfg(16));
  for (int b = 0; b < 16; ++b) EXPECT_NEAR(pdf.p[b], b == 8 ? 1.0 : 0.0, 1e-12);
}

TEST(SoftHistogram, UniformSamplesGiveFlatHistogram) {
  const auto v = uniform_vector(10000, 11, -3.0, 5.0);
  const Pdf1D pdf = soft_histogram(v, soft_cfg(16));
  EXPECT_NEAR(pdf.sum(), 1.0, 1e-9);
  for (double p : pdf.p) EXPECT_NEAR(p, 1.0 / 16, 0.02);
}

TEST(SoftHistogram, SumsToOneAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = normal_vector(200, seed, 3.0);
    for (const auto& cfg : {soft_cfg(64), soft_cfg(16, 1.5), hard_cfg(32)}) {
      const Pdf1D pdf = soft_histogram(v, cfg);
      EXPECT_NEAR(pdf.sum(), 1.0, 1e-9);
      for (double p : pdf.p) EXPECT_GE(p, 0.0);
    }
  }
}

TEST(SoftHistogram, FixedRangeClampsOutliers) {
  const std::vector<double> v = {-10.0, 0.5, 10.0};
  const Pdf1D pdf = soft_histogram(v, fixed_cfg(4, 0.0, 1.0, 0.0));
  EXPECT_DOUBLE_EQ(pdf.p[0], 1.0 / 3);
  EXPECT_DOUBLE_EQ(pdf.p[2], 1.0 / 3);
  EXPECT_DOUBLE_EQ(pdf.p[3], 1.0 / 3);
}

TEST(JointHistogram, IdenticalVariablesConcentrateOnDiagonal) {
  const auto x = uniform_vector(2000, 5);
  double previous_off = 1.0;
  for (double bw : {0.5, 0.2, 0.05, 0.01}) {
    const Pdf2D pxy = joint_histogram(x, x, soft_cfg(16, bw));
    double off = 0.0;
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        if (i != j) off += pxy.at(i, j);
      }
    }
    EXPECT_LT(off, previous_off);
    previous_off = off;
  }
  EXPECT_LT(previous_off, 1e-3);
}

TEST(JointHistogram, IndependentUniformFactorizes) {
  const auto x = uniform_vector(100000, 1);
  const auto y = uniform_vector(100000, 2);
  const auto cfg = soft_cfg(16);
  const Pdf2D pxy = joint_histogram(x, y, cfg);
  const Pdf1D mx = pxy.marginal_x();
  const Pdf1D my = pxy.marginal_y();
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(pxy.at(i, j), mx.p[i] * my.p[j], 0.01);
  }
}

TEST(JointHistogram, SinglePairIsOneBlob) {
  const std::vector<double> x = {0.3};
  const std::vector<double> y = {0.7};
  const Pdf2D pxy = joint_histogram(x, y, fixed_cfg(8, 0.0, 1.0, 0.5));
  double total = 0.0;
  for (double p : pxy.p) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  // Peak at (bin of 0.3, bin of 0.7).
  const auto peak = std::max_element(pxy.p.begin(), pxy.p.end()) - pxy.p.begin();
  EXPECT_EQ(peak, 2 * 8 + 5);
}

TEST(JointHistogram, MarginalsMatchSoftHistogramOnSharedFrame) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = normal_vector(300, seed);
    const auto y = normal_vector(300, seed + 100, 2.0);
    const auto cfg = soft_cfg(32, 0.7);
    const BinFrame frame = resolve_frame(x, y, cfg);
    const Pdf2D pxy = joint_histogram(x, y, cfg);
    const Pdf1D hx = soft_histogram(x, cfg, frame);
    const Pdf1D hy = soft_histogram(y, cfg, frame);
    const Pdf1D mx = pxy.marginal_x();
    const Pdf1D my = pxy.marginal_y();
    for (int b = 0; b < 32; ++b) {
      EXPECT_NEAR(mx.p[b], hx.p[b], 1e-6);
      EXPECT_NEAR(my.p[b], hy.p[b], 1e-6);
    }
  }
}

TEST(JointHistogram, LengthMismatchThrows) {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> y = {1, 2};
  EXPECT_THROW(joint_histogram(x, y, soft_cfg(8)), ShapeMismatch);
  EXPECT_THROW(mutual_information(x, y, soft_cfg(8)), ShapeMismatch);
}

TEST(Entropy, KnownValues) {
  EXPECT_NEAR(entropy(Pdf1D{{0.25, 0.25, 0.25, 0.25}}), std::log(4.0), 1e-10);
  EXPECT_NEAR(entropy(Pdf1D{{1.0, 0.0, 0.0}}), 0.0, 1e-10);
  EXPECT_NEAR(entropy(Pdf1D{{0.5, 0.5, 0.0, 0.0}}), std::log(2.0), 1e-10);
  EXPECT_NEAR(entropy(Pdf2D{2, {0.25, 0.25, 0.25, 0.25}}), std::log(4.0), 1e-10);
}

TEST(MutualInformation, SelfInformationEqualsEntropyUnderHardBinning) {
  const auto x = normal_vector(1000, 3);
  const auto cfg = hard_cfg(16);
  const auto terms = mutual_information_terms(x, x, cfg);
  EXPECT_EQ(terms.mi, terms.h_x);
  EXPECT_EQ(terms.h_xy, terms.h_x);
}

TEST(MutualInformation, HardBinningMatchesCountingOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = normal_vector(500, seed);
    auto y = normal_vector(500, seed + 50);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.6 * x[i] + 0.4 * y[i];
    const auto cfg = fixed_cfg(12, -4.0, 4.0, 0.0);
    EXPECT_NEAR(mutual_information(x, y, cfg),
                testing::hard_binned_mi(x, y, 12, -4.0, 4.0), 1e-9);
  }
}

TEST(MutualInformation, IndependentSamplesNearZero) {
  const auto x = uniform_vector(100000, 21);
  const auto y = uniform_vector(100000, 22);
  EXPECT_LT(mutual_information(x, y, soft_cfg(16)), 0.02);
  EXPECT_LT(mutual_information(x, y, hard_cfg(16)), 0.02);
}

TEST(MutualInformation, MonotoneBijectionOnBinsGivesFullInformation) {
  // Samples on bin centres of [0, 16); y mirrors x, so bins map one-to-one.
  Rng rng(4);
  std::vector<double> x(4000), y(4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(rng.index(16)) + 0.5;
    y[i] = 16.0 - x[i];
  }
  const auto cfg = fixed_cfg(16, 0.0, 16.0, 0.0);
  const double h = testing::hard_binned_entropy(x, 16, 0.0, 16.0);
  EXPECT_NEAR(mutual_information(x, y, cfg), h, 1e-9);
}

TEST(MutualInformation, SymmetricBoundedPermutationInvariant) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = normal_vector(256, seed);
    auto y = normal_vector(256, seed + 1000);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += (seed % 3) * x[i];
    const auto cfg = soft_cfg(16 + static_cast<int>(seed % 3) * 24);
    const auto terms = mutual_information_terms(x, y, cfg);
    EXPECT_NEAR(terms.mi, mutual_information(y, x, cfg), 1e-9);
    EXPECT_GE(terms.mi, -1e-6);
    EXPECT_LE(terms.mi, std::min(terms.h_x, terms.h_y) + 1e-6);

    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.index(i + 1)]);
    }
    std::vector<double> px(x.size()), py(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      px[i] = x[perm[i]];
      py[i] = y[perm[i]];
    }
    EXPECT_NEAR(mutual_information(px, py, cfg), terms.mi, 1e-12);
  }
}

TEST(MutualInformation, PerPairRangeIsScaleInvariant) {
  const auto x = normal_vector(512, 8);
  const auto y = normal_vector(512, 9);
  std::vector<double> sx(x), sy(y);
  for (double& v : sx) v *= 37.5;
  for (double& v : sy) v *= 37.5;
  const auto cfg = soft_cfg(32);
  EXPECT_NEAR(mutual_information(sx, sy, cfg), mutual_information(x, y, cfg), 1e-9);
}

TEST(MutualInformation, SoftConvergesToHardAsBandwidthShrinks) {
  const auto x = normal_vector(10000, 30);
  auto y = normal_vector(10000, 31);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.8 * x[i] + 0.6 * y[i];
  const double hard = mutual_information(x, y, hard_cfg(16));
  EXPECT_NEAR(mutual_information(x, y, soft_cfg(16, 0.01)), hard, 0.01);
}

TEST(MiGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto z = normal_vector(100, seed);
    auto z_ref = normal_vector(100, seed + 500);
    for (std::size_t i = 0; i < z.size(); ++i) z_ref[i] += 0.7 * z[i];
    const auto cfg = soft_cfg(16);
    const auto analytic = mi_gradient(z, z_ref, cfg);
    const auto numeric = finite_difference_gradient(
        [&](std::span<const double> v) { return mutual_information(v, z_ref, cfg); }, z);
    EXPECT_LT(relative_error(analytic, numeric), 1e-3) << "seed " << seed;
  }
}

TEST(MiGradient, FixedRangeMatchesFiniteDifferences) {
  const auto z = normal_vector(100, 77);
  const auto z_ref = normal_vector(100, 78);
  const auto cfg = fixed_cfg(24, -2.0, 2.0, 0.8);
  const auto analytic = mi_gradient(z, z_ref, cfg);
  const auto numeric = finite_difference_gradient(
      [&](std::span<const double> v) { return mutual_information(v, z_ref, cfg); }, z);
  EXPECT_LT(relative_error(analytic, numeric), 1e-3);
}

TEST(MiGradient, VanishesAtIndependentSymmetricConfiguration) {
  // Every combination of two levels appears equally often: the joint
  // factorizes, I is at its minimum and the gradient is zero.
  std::vector<double> z, z_ref;
  for (int rep = 0; rep < 8; ++rep) {
    for (double a : {-1.0, 1.0}) {
      for (double b : {-1.0, 1.0}) {
        z.push_back(a);
        z_ref.push_back(b);
      }
    }
  }
  const auto g = mi_gradient(z, z_ref, fixed_cfg(16, -2.0, 2.0, 0.5));
  EXPECT_LT(testing::norm2(g), 1e-6);
}

TEST(MiGradient, ShapeAndFiniteness) {
  const auto z = normal_vector(256, 1);
  const auto z_ref = normal_vector(256, 2);
  const auto g = mi_gradient(z, z_ref, soft_cfg(64));
  ASSERT_EQ(g.size(), z.size());
  for (double v : g) EXPECT_TRUE(std::isfinite(v));
}

TEST(MiGradient, HardBinningIsRejected) {
  const auto z = normal_vector(10, 1);
  EXPECT_THROW(mi_gradient(z, z, hard_cfg(8)), UnsupportedGradient);
}

TEST(L2, KnownValues) {
  const std::vector<double> a = {1.0, 0.0};
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_EQ(l2_distance(a, a), 0.0);
  EXPECT_EQ(l2_gradient(a, a), zero);
  EXPECT_EQ(l2_distance(a, zero), 1.0);
  EXPECT_EQ(l2_gradient(a, zero), (std::vector<double>{2.0, 0.0}));
  EXPECT_THROW(l2_distance(a, std::vector<double>{1.0}), ShapeMismatch);
}

TEST(L2, GradientMatchesFiniteDifferences) {
  const auto z = normal_vector(100, 3);
  const auto z_ref = normal_vector(100, 4);
  const auto numeric = finite_difference_gradient(
      [&](std::span<const double> v) { return l2_distance(v, z_ref); }, z);
  EXPECT_LT(relative_error(l2_gradient(z, z_ref), numeric), 1e-3);
}

TEST(Wasserstein, IdenticalInputsAreZero) {
  const auto z = normal_vector(100, 3);
  EXPECT_NEAR(wasserstein_distance(z, z, soft_cfg(16)), 0.0, 1e-15);
}

TEST(Wasserstein, DeltasKBinsApart) {
  const double width = 0.25;
  for (int k = 1; k < 8; ++k) {
    Pdf1D p{std::vector<double>(8, 0.0)};
    Pdf1D q{std::vector<double>(8, 0.0)};
    p.p[0] = 1.0;
    q.p[k] = 1.0;
    EXPECT_NEAR(wasserstein_from_pdfs(p, q, width), k * width, 1e-12);
  }
}

TEST(Wasserstein, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto z = normal_vector(100, seed);
    const auto z_ref = normal_vector(100, seed + 300, 1.5);
    const auto cfg = soft_cfg(16);
    const auto analytic = wasserstein_gradient(z, z_ref, cfg);
    const auto numeric = finite_difference_gradient(
        [&](std::span<const double> v) { return wasserstein_distance(v, z_ref, cfg); },
        z);
    EXPECT_LT(relative_error(analytic, numeric), 1e-3) << "seed " << seed;
  }
}

}  // namespace
}  // namespace birdseye
