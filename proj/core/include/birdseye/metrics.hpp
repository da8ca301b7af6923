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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "birdseye/domain.hpp"
#include "birdseye/manifest.hpp"

namespace birdseye {

/// Maps images and texts into a shared space of unit-norm vectors. Calls must
/// be safe to make concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// e.g. "contrastive-language-image", "self-distilled", "copy-detection".
  virtual std::string provider_id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed_image(const ImageBuffer& img) const = 0;
  /// Providers without a text tower throw UndefinedSimilarity.
  virtual std::vector<double> embed_text(std::string_view text) const = 0;
};

/// The three roles the evaluation needs.
struct ProviderSet {
  std::shared_ptr<const EmbeddingProvider> clip;
  std::shared_ptr<const EmbeddingProvider> dino;
  std::shared_ptr<const EmbeddingProvider> sscd;
};

/// Deterministic random-projection providers for desk-scale runs.
ProviderSet toy_providers(std::uint64_t seed = 0);

/// u.v / (|u||v|), clamped to [-1, 1]. Throws UndefinedSimilarity when either
/// vector is zero and ShapeMismatch when lengths differ.
double cosine(std::span<const double> u, std::span<const double> v);

double image_text_score(const EmbeddingProvider& p, const ImageBuffer& img,
                        std::string_view text);
double image_image_score(const EmbeddingProvider& p, const ImageBuffer& a,
                         const ImageBuffer& b);
/// Cosine between the image change (img_T - img_S) and the text change
/// (text_T - text_S) in the provider's space.
double directional_similarity(const EmbeddingProvider& p, const ImageBuffer& img_S,
                              const ImageBuffer& img_T, std::string_view text_S,
                              std::string_view text_T);

/// Index of the largest clip + sscd score sum; ties go to the lowest index.
std::size_t argmax_score_sum(std::span<const double> clip, std::span<const double> sscd);

/// Candidate with the highest image-text score against
/// build_target_prompt(view, text) plus copy-detection score against `input`.
std::size_t best_of_k(std::span<const ImageBuffer> candidates, const ImageBuffer& input,
                      std::string_view text, const ProviderSet& providers,
                      std::string_view view = kAerialView);

struct MetricRow {
  std::string id;
  double clip = 0.0;
  double a_clip = 0.0;
  double sscd = 0.0;
  double dino = 0.0;
  double clip_i = 0.0;
  double clipd = 0.0;
  double a_clipd = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// Column order of the report.
inline constexpr const char* kMetricColumns[] = {"clip",   "a_clip", "sscd",   "dino",
                                                 "clip_i", "clipd",  "a_clipd"};

/// All seven scores for one generated image against its source.
MetricRow score_pair(const ProviderSet& providers, std::string id, const ImageBuffer& source,
                     const ImageBuffer& generated, std::string_view caption,
                     std::string_view view = kAerialView);

struct MetricReport {
  std::vector<MetricRow> rows;

  /// Arithmetic means, id "mean".
  MetricRow means() const;
  /// Header, one line per row, then the mean row.
  std::string to_csv() const;
  /// Parses to_csv() output; the mean line is recomputed, not stored.
  static MetricReport from_csv(std::string_view csv);

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Scores every manifest row against `<generated_dir>/<id>.png`. Rows are
/// scored on up to `workers` threads; the report keeps manifest order. Throws
/// IoError listing every missing generated image before scoring anything.
MetricReport evaluate_dataset(std::span<const ManifestRow> manifest,
                              const std::string& generated_dir, const ProviderSet& providers,
                              unsigned workers = 1);

}  // namespace birdseye
