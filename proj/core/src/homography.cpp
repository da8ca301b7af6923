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

#include "birdseye/homography.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace birdseye {

HomographyMatrix::HomographyMatrix() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

HomographyMatrix::HomographyMatrix(const std::array<double, 9>& m) : m_(m) {
  for (double v : m_) {
    if (!std::isfinite(v)) throw DegenerateGeometry("homography has non-finite entries");
  }
  double norm = 0.0;
  for (double v : m_) norm = std::max(norm, std::abs(v));
  if (std::abs(m_[8]) <= 1e-12 * norm) {
    throw DegenerateGeometry("homography cannot be normalized (m22 ~ 0)");
  }
  const double s = m_[8];
  for (double& v : m_) v /= s;
  m_[8] = 1.0;
  if (std::abs(determinant()) <= 1e-12) {
    throw DegenerateGeometry("homography is singular");
  }
}

HomographyMatrix HomographyMatrix::scale(double sx, double sy) {
  return HomographyMatrix({sx, 0, 0, 0, sy, 0, 0, 0, 1});
}

HomographyMatrix HomographyMatrix::translation(double tx, double ty) {
  return HomographyMatrix({1, 0, tx, 0, 1, ty, 0, 0, 1});
}

HomographyMatrix HomographyMatrix::rotation(double degrees, double cx, double cy) {
  const double a = degrees * M_PI / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  // y points down, so a positive angle turns content counter-clockwise.
  const HomographyMatrix rot({c, s, 0, -s, c, 0, 0, 0, 1});
  return translation(cx, cy).compose(rot.compose(translation(-cx, -cy)));
}

Point2 HomographyMatrix::apply(Point2 p) const {
  const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
  return {(m_[0] * p.x + m_[1] * p.y + m_[2]) / w,
          (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
}

double HomographyMatrix::determinant() const {
  const auto& m = m_;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

HomographyMatrix HomographyMatrix::inverse() const {
  const auto& m = m_;
  const double det = determinant();
  if (std::abs(det) <= 1e-12) throw DegenerateGeometry("homography is not invertible");
  std::array<double, 9> inv = {
      (m[4] * m[8] - m[5] * m[7]), -(m[1] * m[8] - m[2] * m[7]), (m[1] * m[5] - m[2] * m[4]),
      -(m[3] * m[8] - m[5] * m[6]), (m[0] * m[8] - m[2] * m[6]), -(m[0] * m[5] - m[2] * m[3]),
      (m[3] * m[7] - m[4] * m[6]), -(m[0] * m[7] - m[1] * m[6]), (m[0] * m[4] - m[1] * m[3])};
  for (double& v : inv) v /= det;
  return HomographyMatrix(inv);
}

HomographyMatrix HomographyMatrix::compose(const HomographyMatrix& first) const {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int k = 0; k < 3; ++k) sum += m_[r * 3 + k] * first.m_[k * 3 + c];
      out[r * 3 + c] = sum;
    }
  }
  return HomographyMatrix(out);
}

void IPMConfig::validate() const {
  if (!(strength >= 0.0) || !std::isfinite(strength)) {
    throw InvalidInput("IPM strength must be finite and non-negative");
  }
  if (output_width < 0 || output_height < 0) {
    throw InvalidInput("IPM output size must be non-negative");
  }
}

namespace {

void check_no_three_collinear(const Quad& q, const char* which) {
  double scale = 0.0;
  for (const auto& p : q) scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  scale = std::max(scale, 1.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        const double cross = (q[j].x - q[i].x) * (q[k].y - q[i].y) -
                             (q[j].y - q[i].y) * (q[k].x - q[i].x);
        if (std::abs(cross) <= 1e-10 * scale * scale) {
          throw DegenerateGeometry(std::string("three ") + which +
                                   " points are collinear");
        }
      }
    }
  }
}

// Similarity transform moving the centroid to the origin with mean distance
// sqrt(2).
Eigen::Matrix3d normalizer(const Quad& q) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : q) {
    cx += p.x / 4.0;
    cy += p.y / 4.0;
  }
  double mean_dist = 0.0;
  for (const auto& p : q) mean_dist += std::hypot(p.x - cx, p.y - cy) / 4.0;
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Point2 transform(const Eigen::Matrix3d& t, Point2 p) {
  const Eigen::Vector3d v = t * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

}  // namespace

HomographyMatrix dlt_homography(const Quad& src, const Quad& dst) {
  check_no_three_collinear(src, "source");
  check_no_three_collinear(dst, "destination");

  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);

  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const Point2 p = transform(ts, src[i]);
    const Point2 q = transform(td, dst[i]);
    a.row(2 * i) << p.x, p.y, 1, 0, 0, 0, -p.x * q.x, -p.y * q.x;
    a.row(2 * i + 1) << 0, 0, 0, p.x, p.y, 1, -p.x * q.y, -p.y * q.y;
    b(2 * i) = q.x;
    b(2 * i + 1) = q.y;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (lu.rank() < 8) throw DegenerateGeometry("DLT system is singular");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);

  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  std::array<double, 9> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r * 3 + c] = full(r, c);
  }
  return HomographyMatrix(m);
}

std::pair<Quad, Quad> ipm_correspondences(int width, int height, const IPMConfig& cfg) {
  if (width <= 0 || height <= 0) throw InvalidInput("image size must be positive");
  cfg.validate();
  const double w = width;
  const double h = height;
  const Quad src = {Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}};
  Quad dst = src;
  dst[0] = {-cfg.strength * w, 0};
  dst[1] = {w + cfg.strength * w, 0};
  return {src, dst};
}

namespace {

// Frame coordinate of pixel index i on an axis of n pixels.
double frame_of_pixel(int i, int n) {
  return n > 1 ? static_cast<double>(i) * n / (n - 1) : 0.5 * n;
}

double pixel_of_frame(double x, int n) {
  return n > 1 ? x * (n - 1) / n : 0.0;
}

}  // namespace

ImageBuffer warp_image(const ImageBuffer& img, const HomographyMatrix& h,
                       const IPMConfig& cfg) {
  cfg.validate();
  const HomographyMatrix inv = h.inverse();
  const int ow = cfg.output_width > 0 ? cfg.output_width : img.width();
  const int oh = cfg.output_height > 0 ? cfg.output_height : img.height();
  const int iw = img.width();
  const int ih = img.height();
  // Frame of the output grid is the input frame resampled to ow x oh.
  const double fx_scale = static_cast<double>(iw) / ow;
  const double fy_scale = static_cast<double>(ih) / oh;
  constexpr double kTol = 1e-6;

  ImageBuffer out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const Point2 p{frame_of_pixel(x, ow) * fx_scale, frame_of_pixel(y, oh) * fy_scale};
      const Point2 q = inv.apply(p);
      double u = pixel_of_frame(q.x, iw);
      double v = pixel_of_frame(q.y, ih);
      const bool inside = std::isfinite(u) && std::isfinite(v) && u >= -kTol &&
                          v >= -kTol && u <= iw - 1 + kTol && v <= ih - 1 + kTol;
      if (!inside && cfg.fill == FillMode::kWhite) {
        for (int c = 0; c < ImageBuffer::kChannels; ++c) out.at(x, y, c) = 255;
        continue;
      }
      if (!std::isfinite(u) || !std::isfinite(v)) {
        u = 0.0;
        v = 0.0;
      }
      u = std::clamp(u, 0.0, iw - 1.0);
      v = std::clamp(v, 0.0, ih - 1.0);
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const int x1 = std::min(x0 + 1, iw - 1);
      const int y1 = std::min(y0 + 1, ih - 1);
      const double wx = u - x0;
      const double wy = v - y0;
      for (int c = 0; c < ImageBuffer::kChannels; ++c) {
        const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bot = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<std::uint8_t>(
            std::clamp(std::lround((1 - wy) * top + wy * bot), 0L, 255L));
      }
    }
  }
  return out;
}

ImageBuffer compute_ipm(const ImageBuffer& img, const IPMConfig& cfg) {
  const auto [src, dst] = ipm_correspondences(img.width(), img.height(), cfg);
  return warp_image(img, dlt_homography(src, dst), cfg);
}

ImageBuffer compute_rotation(const ImageBuffer& img, double degrees,
                             const IPMConfig& cfg) {
  const auto h = HomographyMatrix::rotation(degrees, img.width() / 2.0,
                                            img.height() / 2.0);
  return warp_image(img, h, cfg);
}

FillMode parse_fill_mode(std::string_view text) {
  if (text == "white") return FillMode::kWhite;
  if (text == "edge" || text == "edge-replicate") return FillMode::kEdgeReplicate;
  throw InvalidInput("unknown fill mode '" + std::string(text) + "'");
}

std::string_view to_string(FillMode fill) {
  return fill == FillMode::kWhite ? "white" : "edge-replicate";
}

}  // namespace birdseye
