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

#include <array>
#include <span>
#include <utility>

#include "birdseye/domain.hpp"

// Inverse perspective mapping (IPM) of ground-level images.
//
// Geometry lives in a continuous frame spanning [0, width] x [0, height] in
// which the outermost pixel centres sit exactly on the frame border
// ("align-corners"): pixel column i is at x = i * width / (width - 1). The
// image corners are therefore (0,0), (w,0), (w,h) and (0,h), and a homography
// that fixes a border line reproduces the pixels on that line exactly.
namespace birdseye {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Quad = std::array<Point2, 4>;

/// 3x3 projective map, row-major, scaled so that m(2,2) == 1.
class HomographyMatrix {
 public:
  /// Identity.
  HomographyMatrix();
  /// Normalizes by m[8]; throws DegenerateGeometry if m[8] is ~0 or the
  /// matrix is singular (|det| <= 1e-12 after normalization).
  explicit HomographyMatrix(const std::array<double, 9>& m);

  static HomographyMatrix identity() { return {}; }
  static HomographyMatrix scale(double sx, double sy);
  static HomographyMatrix translation(double tx, double ty);
  /// Rotation by `degrees` (counter-clockwise on screen) about (cx, cy).
  static HomographyMatrix rotation(double degrees, double cx, double cy);

  double operator()(int row, int col) const { return m_[row * 3 + col]; }
  const std::array<double, 9>& coefficients() const { return m_; }

  Point2 apply(Point2 p) const;
  double determinant() const;
  HomographyMatrix inverse() const;
  /// (*this) after `first`: p -> this(first(p)).
  HomographyMatrix compose(const HomographyMatrix& first) const;

 private:
  std::array<double, 9> m_;
};

enum class FillMode { kWhite, kEdgeReplicate };

struct IPMConfig {
  /// Outward displacement of each top corner as a fraction of image width.
  double strength = 0.3;
  FillMode fill = FillMode::kWhite;
  /// Output size; 0 means "same as input".
  int output_width = 0;
  int output_height = 0;

  void validate() const;
};

/// Direct linear transform from four point pairs, Hartley-normalized.
/// Throws DegenerateGeometry if three points of either quad are collinear or
/// the linear system is singular.
HomographyMatrix dlt_homography(const Quad& src, const Quad& dst);

/// Image corners (TL, TR, BR, BL) and their IPM targets: the top corners are
/// pushed out to (-s*w, 0) and (w + s*w, 0); the bottom corners stay put.
std::pair<Quad, Quad> ipm_correspondences(int width, int height, const IPMConfig& cfg);

/// Inverse-maps every output pixel through `h` and samples bilinearly.
/// Pixels landing outside the source are filled per cfg.fill.
ImageBuffer warp_image(const ImageBuffer& img, const HomographyMatrix& h,
                       const IPMConfig& cfg);

/// warp_image(img, dlt_homography(ipm_correspondences(...)), cfg).
ImageBuffer compute_ipm(const ImageBuffer& img, const IPMConfig& cfg);

/// Rotation about the image centre, used in place of IPM as an augmentation.
ImageBuffer compute_rotation(const ImageBuffer& img, double degrees,
                             const IPMConfig& cfg);

FillMode parse_fill_mode(std::string_view text);
std::string_view to_string(FillMode fill);

}  // namespace birdseye
