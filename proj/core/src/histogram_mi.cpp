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

#include <algorithm>
#include <cmath>
#include <string>

namespace birdseye {

double Pdf1D::sum() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

Pdf1D Pdf2D::marginal_x() const {
  Pdf1D out{std::vector<double>(bins, 0.0)};
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) out.p[i] += at(i, j);
  }
  return out;
}

Pdf1D Pdf2D::marginal_y() const {
  Pdf1D out{std::vector<double>(bins, 0.0)};
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) out.p[j] += at(i, j);
  }
  return out;
}

namespace {

void check_samples(std::span<const double> values, const char* what) {
  if (values.empty()) throw InvalidInput(std::string(what) + " is empty");
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " has non-finite values");
  }
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeMismatch("sample vectors differ in length (" + std::to_string(x.size()) +
                        " vs " + std::to_string(y.size()) + ")");
  }
  check_samples(x, "x");
  check_samples(y, "y");
}

BinFrame frame_from_extremes(double lo, double hi, const GuidanceConfig& cfg) {
  cfg.validate();
  BinFrame f;
  f.bins = cfg.num_bins;
  if (!cfg.value_range.per_pair) {
    f.lo = cfg.value_range.lo;
    f.hi = cfg.value_range.hi;
    f.per_pair = false;
    return f;
  }
  f.lo = lo;
  f.hi = hi;
  f.per_pair = true;
  f.degenerate = !(hi > lo);
  return f;
}

// Per-sample bin weights over a window of neighbouring bins, together with
// the derivative of each weight with respect to the sample's bin coordinate.
struct Binned {
  int bins = 0;
  int window = 0;
  std::size_t count = 0;
  std::vector<int> start;
  std::vector<double> w;
  std::vector<double> dw;
  std::vector<double> u;
  // True when du/dv is 1/bin_width (not clamped, not degenerate).
  std::vector<char> free;

  double weight(std::size_t n, int k) const { return w[n * window + k]; }
  double dweight(std::size_t n, int k) const { return dw[n * window + k]; }
};

int kernel_radius(double sigma, int bins) {
  // Weights beyond this radius are below 1e-17 of the peak.
  const int r = static_cast<int>(std::ceil(8.85 * sigma)) + 1;
  return std::min(r, bins);
}

Binned bin_samples(std::span<const double> values, const GuidanceConfig& cfg,
                   const BinFrame& frame) {
  Binned b;
  b.bins = frame.bins;
  b.count = values.size();
  const bool soft = cfg.soft();
  const int radius = soft ? kernel_radius(cfg.soft_bandwidth, frame.bins) : 0;
  b.window = soft ? std::min(2 * radius + 1, frame.bins) : 1;
  b.start.resize(b.count);
  b.w.assign(b.count * b.window, 0.0);
  b.dw.assign(b.count * b.window, 0.0);
  b.u.resize(b.count);
  b.free.assign(b.count, 0);

  const double scale = frame.degenerate ? 0.0 : frame.bins / (frame.hi - frame.lo);
  const double inv_var = soft ? 1.0 / (cfg.soft_bandwidth * cfg.soft_bandwidth) : 0.0;

  for (std::size_t n = 0; n < b.count; ++n) {
    double u;
    bool free = !frame.degenerate;
    if (frame.degenerate) {
      u = frame.bins / 2 + 0.5;
    } else {
      u = (values[n] - frame.lo) * scale;
      if (!frame.per_pair && (u < 0.0 || u > frame.bins)) {
        u = std::clamp(u, 0.0, static_cast<double>(frame.bins));
        free = false;
      }
    }
    b.u[n] = u;
    b.free[n] = free;
    const int nearest = std::clamp(static_cast<int>(std::floor(u)), 0, frame.bins - 1);

    if (!soft || frame.degenerate) {
      const int bin = frame.degenerate ? frame.bins / 2 : nearest;
      const int s = std::clamp(bin - b.window / 2, 0, frame.bins - b.window);
      b.start[n] = s;
      b.w[n * b.window + (bin - s)] = 1.0;
      if (frame.degenerate) b.free[n] = 0;
      continue;
    }

    const int s = std::clamp(nearest - radius, 0, frame.bins - b.window);
    b.start[n] = s;
    double* w = &b.w[n * b.window];
    double* dw = &b.dw[n * b.window];
    // Exponents are shifted by the nearest centre's so the peak term is ~1.
    const double d0 = u - (nearest + 0.5);
    double total = 0.0;
    for (int k = 0; k < b.window; ++k) {
      const double d = u - (s + k + 0.5);
      w[k] = std::exp(-0.5 * (d * d - d0 * d0) * inv_var);
      total += w[k];
    }
    double mean_slope = 0.0;
    for (int k = 0; k < b.window; ++k) {
      w[k] /= total;
      mean_slope += w[k] * (-(u - (s + k + 0.5)) * inv_var);
    }
    for (int k = 0; k < b.window; ++k) {
      const double slope = -(u - (s + k + 0.5)) * inv_var;
      dw[k] = w[k] * (slope - mean_slope);
    }
  }
  return b;
}

Pdf1D histogram_of(const Binned& b) {
  Pdf1D pdf{std::vector<double>(b.bins, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(b.count);
  for (std::size_t n = 0; n < b.count; ++n) {
    for (int k = 0; k < b.window; ++k) pdf.p[b.start[n] + k] += b.weight(n, k) * inv_n;
  }
  return pdf;
}

Pdf2D joint_of(const Binned& bx, const Binned& by) {
  Pdf2D pdf{bx.bins, std::vector<double>(static_cast<std::size_t>(bx.bins) * bx.bins, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(bx.count);
  for (std::size_t n = 0; n < bx.count; ++n) {
    for (int a = 0; a < bx.window; ++a) {
      const double wa = bx.weight(n, a) * inv_n;
      if (wa == 0.0) continue;
      double* row = &pdf.p[static_cast<std::size_t>(bx.start[n] + a) * bx.bins + by.start[n]];
      for (int c = 0; c < by.window; ++c) row[c] += wa * by.weight(n, c);
    }
  }
  return pdf;
}

double entropy_of(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(v + kLogFloor);
  return h;
}

// dH/dp for H = -sum p ln(p + eps).
std::vector<double> entropy_grad(std::span<const double> p) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = -(std::log(p[i] + kLogFloor) + p[i] / (p[i] + kLogFloor));
  }
  return g;
}

// Chain rule from per-sample bin-coordinate gradients (for both sample sets)
// to gradients in the values of the first set. Adds the contribution of the
// frame's extremes when the frame is per-pair.
std::vector<double> to_value_gradient(std::span<const double> x,
                                      std::span<const double> y,
                                      const std::vector<double>& grad_ux,
                                      const std::vector<double>& grad_uy,
                                      const Binned& bx, const Binned& by,
                                      const BinFrame& frame) {
  std::vector<double> g(x.size(), 0.0);
  if (frame.degenerate) return g;
  const double range = frame.hi - frame.lo;
  const double scale = frame.bins / range;
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (bx.free[n]) g[n] = grad_ux[n] * scale;
  }
  if (!frame.per_pair) return g;

  // u = B (v - lo) / (hi - lo):  du/dlo = -scale (1 - u/B),  du/dhi = -scale u/B.
  double d_lo = 0.0;
  double d_hi = 0.0;
  const double inv_bins = 1.0 / frame.bins;
  auto accumulate = [&](const std::vector<double>& grad_u, const Binned& b) {
    for (std::size_t n = 0; n < b.count; ++n) {
      const double u = b.u[n];
      d_lo += grad_u[n] * (-scale * (1.0 - u * inv_bins));
      d_hi += grad_u[n] * (-scale * u * inv_bins);
    }
  };
  accumulate(grad_ux, bx);
  accumulate(grad_uy, by);

  // The extreme belongs to x only if no element of y attains it.
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*xmin < *ymin) g[static_cast<std::size_t>(xmin - x.begin())] += d_lo;
  if (*xmax > *ymax) g[static_cast<std::size_t>(xmax - x.begin())] += d_hi;
  return g;
}

}  // namespace

BinFrame resolve_frame(std::span<const double> values, const GuidanceConfig& cfg) {
  check_samples(values, "values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return frame_from_extremes(*lo, *hi, cfg);
}

BinFrame resolve_frame(std::span<const double> x, std::span<const double> y,
                       const GuidanceConfig& cfg) {
  check_samples(x, "x");
  check_samples(y, "y");
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
  return frame_from_extremes(std::min(*xlo, *ylo), std::max(*xhi, *yhi), cfg);
}

std::vector<double> flatten_latents(const LatentTensor& z) {
  return {z.values().begin(), z.values().end()};
}

LatentTensor unflatten_latents(std::span<const double> flat, LatentShape shape) {
  return LatentTensor(shape, std::vector<double>(flat.begin(), flat.end()));
}

Pdf1D soft_histogram(std::span<const double> values, const GuidanceConfig& cfg) {
  return soft_histogram(values, cfg, resolve_frame(values, cfg));
}

Pdf1D soft_histogram(std::span<const double> values, const GuidanceConfig& cfg,
                     const BinFrame& frame) {
  check_samples(values, "values");
  return histogram_of(bin_samples(values, cfg, frame));
}

Pdf2D joint_histogram(std::span<const double> x, std::span<const double> y,
                      const GuidanceConfig& cfg) {
  check_pair(x, y);
  const BinFrame frame = resolve_frame(x, y, cfg);
  return joint_of(bin_samples(x, cfg, frame), bin_samples(y, cfg, frame));
}

double entropy(const Pdf1D& pdf) { return entropy_of(pdf.p); }

double entropy(const Pdf2D& pdf) { return entropy_of(pdf.p); }

MutualInformationTerms mutual_information_terms(std::span<const double> x,
                                                std::span<const double> y,
                                                const GuidanceConfig& cfg) {
  check_pair(x, y);
  const BinFrame frame = resolve_frame(x, y, cfg);
  const Binned bx = bin_samples(x, cfg, frame);
  const Binned by = bin_samples(y, cfg, frame);
  MutualInformationTerms t;
  t.h_x = entropy(histogram_of(bx));
  t.h_y = entropy(histogram_of(by));
  t.h_xy = entropy(joint_of(bx, by));
  t.mi = t.h_x + t.h_y - t.h_xy;
  return t;
}

double mutual_information(std::span<const double> x, std::span<const double> y,
                          const GuidanceConfig& cfg) {
  return mutual_information_terms(x, y, cfg).mi;
}

std::vector<double> mi_gradient(std::span<const double> z,
                                std::span<const double> z_ref,
                                const GuidanceConfig& cfg) {
  if (!cfg.soft()) {
    throw UnsupportedGradient("mutual-information gradient requires soft binning");
  }
  check_pair(z, z_ref);
  const BinFrame frame = resolve_frame(z, z_ref, cfg);
  const Binned bx = bin_samples(z, cfg, frame);
  const Binned by = bin_samples(z_ref, cfg, frame);
  const Pdf1D px = histogram_of(bx);
  const Pdf1D py = histogram_of(by);
  const Pdf2D pxy = joint_of(bx, by);
  const auto gx = entropy_grad(px.p);
  const auto gy = entropy_grad(py.p);
  const auto gxy = entropy_grad(pxy.p);
  const int bins = frame.bins;
  const double inv_n = 1.0 / static_cast<double>(z.size());

  // I = Hx + Hy - Hxy.  dI/du_n = (1/N) sum_i a_i'(u_n) [gx_i - sum_j gxy_ij b_j(w_n)]
  std::vector<double> grad_ux(z.size(), 0.0);
  std::vector<double> grad_uy(z.size(), 0.0);
  std::vector<double> coupled_x(bx.window);
  std::vector<double> coupled_y(by.window);
  for (std::size_t n = 0; n < z.size(); ++n) {
    std::fill(coupled_x.begin(), coupled_x.end(), 0.0);
    std::fill(coupled_y.begin(), coupled_y.end(), 0.0);
    for (int a = 0; a < bx.window; ++a) {
      const int i = bx.start[n] + a;
      const double wa = bx.weight(n, a);
      for (int c = 0; c < by.window; ++c) {
        const int j = by.start[n] + c;
        const double g = gxy[static_cast<std::size_t>(i) * bins + j];
        coupled_x[a] += g * by.weight(n, c);
        coupled_y[c] += g * wa;
      }
    }
    double sx = 0.0;
    for (int a = 0; a < bx.window; ++a) {
      sx += bx.dweight(n, a) * (gx[bx.start[n] + a] - coupled_x[a]);
    }
    double sy = 0.0;
    for (int c = 0; c < by.window; ++c) {
      sy += by.dweight(n, c) * (gy[by.start[n] + c] - coupled_y[c]);
    }
    grad_ux[n] = sx * inv_n;
    grad_uy[n] = sy * inv_n;
  }
  return to_value_gradient(z, z_ref, grad_ux, grad_uy, bx, by, frame);
}

double l2_distance(std::span<const double> z, std::span<const double> z_ref) {
  if (z.size() != z_ref.size()) throw ShapeMismatch("l2_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - z_ref[i];
    s += d * d;
  }
  return s;
}

std::vector<double> l2_gradient(std::span<const double> z,
                                std::span<const double> z_ref) {
  if (z.size() != z_ref.size()) throw ShapeMismatch("l2_gradient: length mismatch");
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) g[i] = 2.0 * (z[i] - z_ref[i]);
  return g;
}

double wasserstein_from_pdfs(const Pdf1D& p, const Pdf1D& q, double bin_width) {
  if (p.bins() != q.bins()) throw ShapeMismatch("pdfs differ in bin count");
  double cdf = 0.0;
  double total = 0.0;
  for (int b = 0; b + 1 < p.bins(); ++b) {
    cdf += p.p[b] - q.p[b];
    total += std::abs(cdf);
  }
  return total * bin_width;
}

double wasserstein_distance(std::span<const double> z, std::span<const double> z_ref,
                            const GuidanceConfig& cfg) {
  check_pair(z, z_ref);
  const BinFrame frame = resolve_frame(z, z_ref, cfg);
  if (frame.degenerate) return 0.0;
  const Pdf1D p = histogram_of(bin_samples(z, cfg, frame));
  const Pdf1D q = histogram_of(bin_samples(z_ref, cfg, frame));
  return wasserstein_from_pdfs(p, q, frame.bin_width());
}

std::vector<double> wasserstein_gradient(std::span<const double> z,
                                         std::span<const double> z_ref,
                                         const GuidanceConfig& cfg) {
  if (!cfg.soft()) {
    throw UnsupportedGradient("Wasserstein gradient requires soft binning");
  }
  check_pair(z, z_ref);
  const BinFrame frame = resolve_frame(z, z_ref, cfg);
  if (frame.degenerate) return std::vector<double>(z.size(), 0.0);
  const Binned bx = bin_samples(z, cfg, frame);
  const Binned by = bin_samples(z_ref, cfg, frame);
  const Pdf1D p = histogram_of(bx);
  const Pdf1D q = histogram_of(by);
  const int bins = frame.bins;
  const double width = frame.bin_width();

  // D = width * sum_{b<B-1} |C_b|, C_b = sum_{i<=b} (p_i - q_i).
  // dD/dp_i = width * S_i with S_i = sum_{i<=b<B-1} sign(C_b); dD/dq_i = -width * S_i.
  std::vector<double> cdf(bins, 0.0);
  double acc = 0.0;
  double abs_sum = 0.0;
  for (int b = 0; b + 1 < bins; ++b) {
    acc += p.p[b] - q.p[b];
    cdf[b] = acc;
    abs_sum += std::abs(acc);
  }
  std::vector<double> suffix(bins, 0.0);
  double running = 0.0;
  for (int b = bins - 2; b >= 0; --b) {
    running += (cdf[b] > 0.0) - (cdf[b] < 0.0);
    suffix[b] = running;
  }

  const double inv_n = 1.0 / static_cast<double>(z.size());
  std::vector<double> grad_ux(z.size(), 0.0);
  std::vector<double> grad_uy(z.size(), 0.0);
  for (std::size_t n = 0; n < z.size(); ++n) {
    double sx = 0.0;
    for (int a = 0; a < bx.window; ++a) sx += bx.dweight(n, a) * suffix[bx.start[n] + a];
    double sy = 0.0;
    for (int c = 0; c < by.window; ++c) sy += by.dweight(n, c) * suffix[by.start[n] + c];
    grad_ux[n] = width * sx * inv_n;
    grad_uy[n] = -width * sy * inv_n;
  }
  auto g = to_value_gradient(z, z_ref, grad_ux, grad_uy, bx, by, frame);

  // Direct dependence through the bin width (hi - lo) / B.
  if (frame.per_pair) {
    const double d_width = abs_sum / bins;
    const auto [xmin, xmax] = std::minmax_element(z.begin(), z.end());
    const auto [ymin, ymax] = std::minmax_element(z_ref.begin(), z_ref.end());
    if (*xmin < *ymin) g[static_cast<std::size_t>(xmin - z.begin())] -= d_width;
    if (*xmax > *ymax) g[static_cast<std::size_t>(xmax - z.begin())] += d_width;
  }
  return g;
}

}  // namespace birdseye
