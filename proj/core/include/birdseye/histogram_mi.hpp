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

#include <span>
#include <vector>

#include "birdseye/domain.hpp"

// Histogram-based probability estimates and the guidance functionals built on
// them: mutual information (to maximize), L2 and a 1-D earth mover's distance
// (to minimize).
//
// Binning. Values are mapped to bin coordinates u = (v - lo) / (hi - lo) * B,
// so bin b covers [b, b+1) and has its centre at b + 0.5. With
// soft_bandwidth > 0 each sample spreads unit mass over nearby bins with
// Gaussian weights of standard deviation `soft_bandwidth` (in bins),
// normalized per sample; this keeps joint and marginal histograms exactly
// consistent and makes every quantity differentiable in the samples.
// soft_bandwidth == 0 selects hard binning, which has no useful gradient.
//
// Entropies are in nats, with p * ln(p + 1e-12) per cell.
namespace birdseye {

inline constexpr double kLogFloor = 1e-12;

struct Pdf1D {
  std::vector<double> p;

  int bins() const { return static_cast<int>(p.size()); }
  double sum() const;
};

/// Joint pdf, p[i * bins + j] for x-bin i and y-bin j.
struct Pdf2D {
  int bins = 0;
  std::vector<double> p;

  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * bins + j]; }
  /// Marginal over y (sum of row i).
  Pdf1D marginal_x() const;
  /// Marginal over x (sum of column j).
  Pdf1D marginal_y() const;
};

/// Resolved binning frame.
struct BinFrame {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 2;
  bool per_pair = true;
  /// hi == lo under a per-pair range: all mass goes to the centre bin.
  bool degenerate = false;

  double bin_width() const { return (hi - lo) / bins; }
};

/// Frame for one sample set (fixed range, or its own min/max).
BinFrame resolve_frame(std::span<const double> values, const GuidanceConfig& cfg);
/// Frame shared by two sample sets (fixed range, or min/max over their union).
BinFrame resolve_frame(std::span<const double> x, std::span<const double> y,
                       const GuidanceConfig& cfg);

/// C x H x W -> C*H*W, channel-major (the tensor's storage order).
std::vector<double> flatten_latents(const LatentTensor& z);
LatentTensor unflatten_latents(std::span<const double> flat, LatentShape shape);

/// Histogram of `values` over their own frame.
Pdf1D soft_histogram(std::span<const double> values, const GuidanceConfig& cfg);
/// Histogram of `values` over an explicit frame.
Pdf1D soft_histogram(std::span<const double> values, const GuidanceConfig& cfg,
                     const BinFrame& frame);

/// Joint histogram of co-located pairs (x[i], y[i]) over the shared frame.
/// Throws ShapeMismatch on length mismatch, InvalidInput on empty input.
Pdf2D joint_histogram(std::span<const double> x, std::span<const double> y,
                      const GuidanceConfig& cfg);

double entropy(const Pdf1D& pdf);
double entropy(const Pdf2D& pdf);

struct MutualInformationTerms {
  double h_x = 0.0;
  double h_y = 0.0;
  double h_xy = 0.0;
  /// h_x + h_y - h_xy, unclamped.
  double mi = 0.0;
};

MutualInformationTerms mutual_information_terms(std::span<const double> x,
                                                std::span<const double> y,
                                                const GuidanceConfig& cfg);
/// I(X,Y) = H(X) + H(Y) - H(X,Y) in nats. Not clamped; see clamp_mi().
double mutual_information(std::span<const double> x, std::span<const double> y,
                          const GuidanceConfig& cfg);
/// Reporting-time clamp to >= 0.
inline double clamp_mi(double mi) { return mi < 0.0 ? 0.0 : mi; }

/// d I(z, z_ref) / d z with z_ref held constant, including the dependence of a
/// per-pair frame on the extremes of z. Throws UnsupportedGradient for hard
/// binning.
std::vector<double> mi_gradient(std::span<const double> z,
                                std::span<const double> z_ref,
                                const GuidanceConfig& cfg);

/// Sum of squared differences and its gradient in z.
double l2_distance(std::span<const double> z, std::span<const double> z_ref);
std::vector<double> l2_gradient(std::span<const double> z,
                                std::span<const double> z_ref);

/// 1-D earth mover's distance between two pdfs on the same bins:
/// sum_b |CDF_p(b) - CDF_q(b)| * bin_width.
double wasserstein_from_pdfs(const Pdf1D& p, const Pdf1D& q, double bin_width);
/// EMD between the histograms of z and z_ref over their shared frame.
double wasserstein_distance(std::span<const double> z, std::span<const double> z_ref,
                            const GuidanceConfig& cfg);
std::vector<double> wasserstein_gradient(std::span<const double> z,
                                         std::span<const double> z_ref,
                                         const GuidanceConfig& cfg);

}  // namespace birdseye
