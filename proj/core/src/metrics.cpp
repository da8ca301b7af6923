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

#include "birdseye/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <thread>

#include "birdseye/image_io.hpp"
#include "birdseye/rng.hpp"

namespace birdseye {

namespace {

// Mean of each channel over an n x n grid of cells, centred on zero.
std::vector<double> pooled(const ImageBuffer& img, int n, bool luma) {
  const int channels = luma ? 1 : ImageBuffer::kChannels;
  std::vector<double> out(static_cast<std::size_t>(n * n * channels), 0.0);
  for (int gy = 0; gy < n; ++gy) {
    const int y0 = gy * img.height() / n;
    const int y1 = std::max(y0 + 1, (gy + 1) * img.height() / n);
    for (int gx = 0; gx < n; ++gx) {
      const int x0 = gx * img.width() / n;
      const int x1 = std::max(x0 + 1, (gx + 1) * img.width() / n);
      double sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int c = 0; c < 3; ++c) sum[c] += img.at(x, y, c);
        }
      }
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      const std::size_t cell = static_cast<std::size_t>(gy * n + gx) * channels;
      if (luma) {
        out[cell] = (sum[0] + sum[1] + sum[2]) / (3.0 * count) / 255.0 - 0.5;
      } else {
        for (int c = 0; c < 3; ++c) out[cell + c] = sum[c] / count / 255.0 - 0.5;
      }
    }
  }
  return out;
}

// Luma grid plus its forward differences.
std::vector<double> structure(const ImageBuffer& img, int n) {
  const auto g = pooled(img, n, true);
  std::vector<double> out = g;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double v = g[y * n + x];
      out.push_back(x + 1 < n ? g[y * n + x + 1] - v : 0.0);
      out.push_back(y + 1 < n ? g[(y + 1) * n + x] - v : 0.0);
    }
  }
  return out;
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  if (!(s > 0.0)) throw UndefinedSimilarity("embedding has zero norm");
  for (double& x : v) x /= s;
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

enum class Features { kColor, kStructure, kLuma };

class ToyProvider final : public EmbeddingProvider {
 public:
  ToyProvider(std::string id, Features features, std::uint64_t seed)
      : id_(std::move(id)), features_(features), seed_(derive_seed(seed, id_)) {
    const std::size_t in = extract(ImageBuffer(1, 1)).size();
    Rng rng(seed_);
    projection_.resize(in * kDim);
    for (double& w : projection_) w = rng.normal() / std::sqrt(static_cast<double>(in));
    image_bias_.resize(kDim);
    text_bias_.resize(kDim);
    for (double& b : image_bias_) b = 0.1 * rng.normal();
    for (double& b : text_bias_) b = 0.1 * rng.normal();
  }

  std::string provider_id() const override { return id_; }
  std::size_t dim() const override { return kDim; }

  std::vector<double> embed_image(const ImageBuffer& img) const override {
    const auto f = extract(img);
    std::vector<double> out = image_bias_;
    for (std::size_t k = 0; k < kDim; ++k) {
      const double* row = &projection_[k * f.size()];
      for (std::size_t i = 0; i < f.size(); ++i) out[k] += row[i] * f[i];
    }
    normalize(out);
    return out;
  }

  std::vector<double> embed_text(std::string_view text) const override {
    std::vector<double> out = text_bias_;
    for (const auto& w : words_of(text)) {
      Rng rng(fnv1a(w, seed_));
      for (double& x : out) x += rng.normal() / std::sqrt(static_cast<double>(kDim));
    }
    normalize(out);
    return out;
  }

 private:
  static constexpr std::size_t kDim = 64;

  std::vector<double> extract(const ImageBuffer& img) const {
    switch (features_) {
      case Features::kColor:
        return pooled(img, 8, false);
      case Features::kStructure:
        return structure(img, 8);
      case Features::kLuma:
        return pooled(img, 16, true);
    }
    return {};
  }

  std::string id_;
  Features features_;
  std::uint64_t seed_;
  std::vector<double> projection_;
  std::vector<double> image_bias_;
  std::vector<double> text_bias_;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ProviderSet toy_providers(std::uint64_t seed) {
  return {std::make_shared<ToyProvider>("contrastive-language-image", Features::kColor, seed),
          std::make_shared<ToyProvider>("self-distilled", Features::kStructure, seed),
          std::make_shared<ToyProvider>("copy-detection", Features::kLuma, seed)};
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeMismatch("cosine of vectors with lengths " + std::to_string(u.size()) + " and " +
                        std::to_string(v.size()));
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw UndefinedSimilarity("cosine with a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double image_text_score(const EmbeddingProvider& p, const ImageBuffer& img,
                        std::string_view text) {
  return cosine(p.embed_image(img), p.embed_text(text));
}

double image_image_score(const EmbeddingProvider& p, const ImageBuffer& a,
                         const ImageBuffer& b) {
  return cosine(p.embed_image(a), p.embed_image(b));
}

double directional_similarity(const EmbeddingProvider& p, const ImageBuffer& img_S,
                              const ImageBuffer& img_T, std::string_view text_S,
                              std::string_view text_T) {
  auto di = p.embed_image(img_T);
  const auto is = p.embed_image(img_S);
  auto dt = p.embed_text(text_T);
  const auto ts = p.embed_text(text_S);
  if (di.size() != is.size() || dt.size() != ts.size()) {
    throw ShapeMismatch("provider returned embeddings of varying size");
  }
  for (std::size_t i = 0; i < di.size(); ++i) di[i] -= is[i];
  for (std::size_t i = 0; i < dt.size(); ++i) dt[i] -= ts[i];
  try {
    return cosine(di, dt);
  } catch (const UndefinedSimilarity&) {
    throw UndefinedSimilarity(
        "directional similarity is undefined when the images or the texts embed identically");
  }
}

std::size_t argmax_score_sum(std::span<const double> clip, std::span<const double> sscd) {
  if (clip.empty()) throw InvalidInput("no candidates to choose from");
  if (clip.size() != sscd.size()) throw ShapeMismatch("score lists differ in length");
  std::size_t best = 0;
  double best_score = clip[0] + sscd[0];
  for (std::size_t i = 1; i < clip.size(); ++i) {
    const double s = clip[i] + sscd[i];
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::size_t best_of_k(std::span<const ImageBuffer> candidates, const ImageBuffer& input,
                      std::string_view text, const ProviderSet& providers,
                      std::string_view view) {
  if (candidates.empty()) throw InvalidInput("no candidates to choose from");
  const std::string prompt = build_target_prompt(view, text);
  const auto t = providers.clip->embed_text(prompt);
  const auto ref = providers.sscd->embed_image(input);
  std::vector<double> clip;
  std::vector<double> sscd;
  for (const auto& c : candidates) {
    clip.push_back(cosine(providers.clip->embed_image(c), t));
    sscd.push_back(cosine(providers.sscd->embed_image(c), ref));
  }
  return argmax_score_sum(clip, sscd);
}

MetricRow score_pair(const ProviderSet& providers, std::string id, const ImageBuffer& source,
                     const ImageBuffer& generated, std::string_view caption,
                     std::string_view view) {
  const std::string target = build_target_prompt(view, caption);
  MetricRow r;
  r.id = std::move(id);
  r.clip = image_text_score(*providers.clip, generated, target);
  r.a_clip = image_text_score(*providers.clip, generated, view);
  r.sscd = image_image_score(*providers.sscd, generated, source);
  r.dino = image_image_score(*providers.dino, generated, source);
  r.clip_i = image_image_score(*providers.clip, generated, source);
  r.clipd = directional_similarity(*providers.clip, source, generated, caption, target);
  r.a_clipd = directional_similarity(*providers.clip, source, generated, caption, view);
  return r;
}

MetricRow MetricReport::means() const {
  MetricRow m;
  m.id = "mean";
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.clip += r.clip;
    m.a_clip += r.a_clip;
    m.sscd += r.sscd;
    m.dino += r.dino;
    m.clip_i += r.clip_i;
    m.clipd += r.clipd;
    m.a_clipd += r.a_clipd;
  }
  const double n = static_cast<double>(rows.size());
  for (double* v : {&m.clip, &m.a_clip, &m.sscd, &m.dino, &m.clip_i, &m.clipd, &m.a_clipd}) {
    *v /= n;
  }
  return m;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "id";
  for (const char* c : kMetricColumns) out << ',' << c;
  out << '\n';
  auto line = [&](const MetricRow& r) {
    out << r.id;
    for (double v : {r.clip, r.a_clip, r.sscd, r.dino, r.clip_i, r.clipd, r.a_clipd}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  };
  for (const auto& r : rows) line(r);
  line(means());
  return out.str();
}

MetricReport MetricReport::from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,clip,", 0) != 0) {
    throw InvalidInput("metrics CSV lacks the expected header");
  }
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw InvalidInput("metrics CSV line " + std::to_string(line_no) + " has " +
                         std::to_string(cells.size()) + " fields");
    }
    MetricRow r;
    r.id = cells[0];
    double* slots[] = {&r.clip, &r.a_clip, &r.sscd, &r.dino, &r.clip_i, &r.clipd, &r.a_clipd};
    for (int k = 0; k < 7; ++k) {
      try {
        *slots[k] = std::stod(cells[static_cast<std::size_t>(k) + 1]);
      } catch (const std::exception&) {
        throw InvalidInput("metrics CSV line " + std::to_string(line_no) + ": bad number");
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty() || rows.back().id != "mean") {
    throw InvalidInput("metrics CSV lacks the mean row");
  }
  rows.pop_back();
  return MetricReport{std::move(rows)};
}

MetricReport evaluate_dataset(std::span<const ManifestRow> manifest,
                              const std::string& generated_dir, const ProviderSet& providers,
                              unsigned workers) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::string missing;
  for (const auto& row : manifest) {
    paths.push_back((fs::path(generated_dir) / (row.id + ".png")).string());
    if (!fs::is_regular_file(paths.back())) missing += "\n  " + paths.back();
  }
  if (!missing.empty()) throw IoError("generated images missing:" + missing);

  MetricReport report;
  report.rows.resize(manifest.size());
  std::vector<std::exception_ptr> errors(manifest.size());
  auto score = [&](std::size_t i) {
    try {
      const auto& row = manifest[i];
      report.rows[i] = score_pair(providers, row.id, read_png(row.image_path),
                                  read_png(paths[i]), row.caption, row.view_label);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(manifest.size())));
  if (n <= 1) {
    for (std::size_t i = 0; i < manifest.size(); ++i) score(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < manifest.size(); i += n) score(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

}  // namespace birdseye
