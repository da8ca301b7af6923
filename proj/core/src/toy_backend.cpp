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

#include "birdseye/toy_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "birdseye/hashing.hpp"

namespace birdseye {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;

constexpr int kLatentSize = 256;
constexpr int kGrid = 16;
constexpr int kCell = 4;
constexpr int kLowFreq = 4;

// Latent index of luma grid cell (gy, gx) under the space-to-depth fold.
int fold_index(int gy, int gx) {
  const int c = 2 * (gy % 2) + (gx % 2);
  return (c * 8 + gy / 2) * 8 + gx / 2;
}

Mat gaussian_matrix(Rng& rng, int rows, int cols, double std) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
  }
  return m;
}

// Orthonormal low-frequency cosine basis of the luma grid, in latent order.
Mat cosine_basis() {
  Mat d = Mat::Zero(kLatentSize, kLowFreq * kLowFreq);
  for (int u = 0; u < kLowFreq; ++u) {
    for (int v = 0; v < kLowFreq; ++v) {
      const int col = u * kLowFreq + v;
      for (int gy = 0; gy < kGrid; ++gy) {
        for (int gx = 0; gx < kGrid; ++gx) {
          d(fold_index(gy, gx), col) = std::cos(M_PI * (2 * gy + 1) * u / (2.0 * kGrid)) *
                                       std::cos(M_PI * (2 * gx + 1) * v / (2.0 * kGrid));
        }
      }
      d.col(col).normalize();
    }
  }
  return d;
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

ParameterTensor matrix_param(std::string name, const Mat& m) {
  return {std::move(name), {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
          std::vector<double>(m.data(), m.data() + m.size())};
}

ConstMatMap view(const ParameterSet& p, std::string_view name) {
  const auto& t = p.at(name);
  return ConstMatMap(t.values.data(), t.shape[0], t.shape[1]);
}

}  // namespace

struct ToyBackend::Impl {
  Mat P;   // latent mean from the mean token
  Mat W1;  // hidden from latent
  Mat V1;  // hidden from [mean token; timestep embedding]
  Vec b1;
  Mat W2;  // output from hidden
  Vec b2;
  Mat positional;  // kTokens x kEmbedDim
  std::uint64_t word_seed = 0;
};

namespace {

struct Forward {
  double alpha_bar = 0.0;
  double gain = 0.0;
  Vec x;
  Vec m;
  Vec cond;
  Vec mu;
  Vec h;
  Vec out;
};

Vec timestep_embedding(int t) {
  Vec v(ToyBackend::kTimeDim);
  for (int k = 0; k < ToyBackend::kTimeDim / 2; ++k) {
    const double freq = std::pow(1000.0, -static_cast<double>(k) / (ToyBackend::kTimeDim / 2));
    v(2 * k) = std::sin(t * freq);
    v(2 * k + 1) = std::cos(t * freq);
  }
  return v;
}

void check_embedding(const TextEmbedding& e) {
  if (e.tokens() != ToyBackend::kTokens || e.dim() != ToyBackend::kEmbedDim) {
    throw ShapeMismatch("toy backend expects a 4x16 text embedding, got " +
                        std::to_string(e.tokens()) + "x" + std::to_string(e.dim()));
  }
}

void check_latent(const LatentTensor& z) {
  if (!(z.shape() == LatentShape{4, 8, 8})) {
    throw ShapeMismatch("toy backend expects a 4x8x8 latent, got " + to_string(z.shape()));
  }
}

}  // namespace

ToyBackend::ToyBackend(ToyConfig config)
    : config_(config), schedule_(NoiseSchedule::scaled_linear(1000)) {
  if (config_.rank < 1 || config_.hidden < 1 || !(config_.prior_std > 0.0)) {
    throw InvalidInput("toy backend needs rank >= 1, hidden >= 1 and prior_std > 0");
  }
  const int h = config_.hidden;
  const int cond = kEmbedDim + kTimeDim;
  Rng rng(derive_seed(config_.seed, "toy-base"));
  auto impl = std::make_shared<Impl>();
  impl->P = cosine_basis() * gaussian_matrix(rng, kLowFreq * kLowFreq, kEmbedDim, 1.0);
  impl->W1 = gaussian_matrix(rng, h, kLatentSize, 1.0 / std::sqrt(kLatentSize));
  impl->V1 = gaussian_matrix(rng, h, cond, 1.0 / std::sqrt(cond));
  impl->b1 = gaussian_matrix(rng, h, 1, 0.1);
  impl->W2 = gaussian_matrix(rng, kLatentSize, h, 0.1 / std::sqrt(h));
  impl->b2 = gaussian_matrix(rng, kLatentSize, 1, 0.02);
  impl->positional = gaussian_matrix(rng, kTokens, kEmbedDim, 0.3);
  impl->word_seed = derive_seed(config_.seed, "toy-words");
  base_ = std::move(impl);

  const int r = config_.rank;
  Rng arng(derive_seed(config_.seed, "toy-adapter"));
  initial_adapter_ = ParameterSet({
      matrix_param("mean.up", Mat::Zero(kLatentSize, r)),
      matrix_param("mean.down", gaussian_matrix(arng, r, kEmbedDim, 1.0 / std::sqrt(kEmbedDim))),
      matrix_param("hidden.up", Mat::Zero(h, r)),
      matrix_param("hidden.down",
                   gaussian_matrix(arng, r, kLatentSize, 1.0 / std::sqrt(kLatentSize))),
      matrix_param("out.up", Mat::Zero(kLatentSize, r)),
      matrix_param("out.down", gaussian_matrix(arng, r, h, 1.0 / std::sqrt(h))),
  });
  adapter_ = initial_adapter_;
}

TextEmbedding ToyBackend::encode_text(std::string_view text) const {
  TextEmbedding e(kTokens, kEmbedDim);
  for (int j = 0; j < kTokens; ++j) {
    for (int d = 0; d < kEmbedDim; ++d) e.at(j, d) = base_->positional(j, d);
  }
  const auto words = words_of(text);
  std::vector<int> per_slot(kTokens, 0);
  for (std::size_t i = 0; i < words.size(); ++i) ++per_slot[i % kTokens];
  for (std::size_t i = 0; i < words.size(); ++i) {
    const int slot = static_cast<int>(i % kTokens);
    const double scale = 1.0 / std::sqrt(static_cast<double>(per_slot[slot]));
    Rng wr(fnv1a(words[i], base_->word_seed));
    for (int d = 0; d < kEmbedDim; ++d) e.at(slot, d) += scale * wr.normal();
  }
  return e;
}

LatentTensor ToyBackend::encode_image(const ImageBuffer& img) const {
  if (img.width() != kImageSize || img.height() != kImageSize) {
    throw InvalidInput("toy backend encodes 64x64 images, got " + std::to_string(img.width()) +
                       "x" + std::to_string(img.height()));
  }
  LatentTensor z(latent_shape());
  auto out = z.values();
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      int sum = 0;
      for (int y = gy * kCell; y < (gy + 1) * kCell; ++y) {
        for (int x = gx * kCell; x < (gx + 1) * kCell; ++x) {
          for (int c = 0; c < ImageBuffer::kChannels; ++c) sum += img.at(x, y, c);
        }
      }
      const double mean = sum / static_cast<double>(kCell * kCell * ImageBuffer::kChannels);
      out[fold_index(gy, gx)] = mean / 127.5 - 1.0;
    }
  }
  return z;
}

ImageBuffer ToyBackend::decode_latents(const LatentTensor& z) const {
  check_latent(z);
  ImageBuffer img(kImageSize, kImageSize);
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      const double v = std::round((z.values()[fold_index(gy, gx)] + 1.0) * 127.5);
      const auto px = static_cast<std::uint8_t>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 255.0));
      for (int y = gy * kCell; y < (gy + 1) * kCell; ++y) {
        for (int x = gx * kCell; x < (gx + 1) * kCell; ++x) {
          for (int c = 0; c < ImageBuffer::kChannels; ++c) img.at(x, y, c) = px;
        }
      }
    }
  }
  return img;
}

namespace {

Forward run_forward(const ToyBackend::Impl& b, const ParameterSet& a, double prior_std,
                    const NoiseSchedule& sched, const LatentTensor& x_t, int t,
                    const TextEmbedding& e) {
  check_latent(x_t);
  check_embedding(e);
  Forward f;
  f.alpha_bar = sched.alpha_bar(t);
  const double ab = f.alpha_bar;
  f.gain = std::sqrt(1.0 - ab) / (ab * prior_std * prior_std + 1.0 - ab);
  f.x = Eigen::Map<const Vec>(x_t.values().data(), kLatentSize);
  f.m = Vec::Zero(ToyBackend::kEmbedDim);
  for (int j = 0; j < ToyBackend::kTokens; ++j) {
    for (int d = 0; d < ToyBackend::kEmbedDim; ++d) f.m(d) += e.at(j, d);
  }
  f.m /= ToyBackend::kTokens;
  f.cond.resize(ToyBackend::kEmbedDim + ToyBackend::kTimeDim);
  f.cond << f.m, timestep_embedding(t);

  f.mu = b.P * f.m + view(a, "mean.up") * (view(a, "mean.down") * f.m);
  const Vec pre = b.W1 * f.x + view(a, "hidden.up") * (view(a, "hidden.down") * f.x) +
                  b.V1 * f.cond + b.b1;
  f.h = pre.array().tanh();
  f.out = f.gain * (f.x - std::sqrt(ab) * f.mu) + b.W2 * f.h +
          view(a, "out.up") * (view(a, "out.down") * f.h) + b.b2;
  return f;
}

}  // namespace

LatentTensor ToyBackend::predict_noise(const LatentTensor& x_t, int t,
                                       const TextEmbedding& e) const {
  const Forward f = run_forward(*base_, adapter_, config_.prior_std, schedule_, x_t, t, e);
  return LatentTensor(x_t.shape(), std::vector<double>(f.out.data(), f.out.data() + f.out.size()));
}

DenoiseGradients ToyBackend::denoising_gradients(const LatentTensor& x_t, int t,
                                                 const TextEmbedding& e,
                                                 const LatentTensor& eps,
                                                 GradientRequest request) const {
  if (!(eps.shape() == x_t.shape())) throw ShapeMismatch("noise and latent shapes differ");
  const Impl& b = *base_;
  const Forward f = run_forward(b, adapter_, config_.prior_std, schedule_, x_t, t, e);
  const Vec target = Eigen::Map<const Vec>(eps.values().data(), kLatentSize);
  const Vec r = f.out - target;

  DenoiseGradients g;
  g.loss = r.squaredNorm() / kLatentSize;
  if (!request.embedding && !request.adapter) return g;

  const Vec d_out = (2.0 / kLatentSize) * r;
  const auto out_up = view(adapter_, "out.up");
  const auto out_down = view(adapter_, "out.down");
  const auto hid_up = view(adapter_, "hidden.up");
  const auto hid_down = view(adapter_, "hidden.down");
  const auto mean_up = view(adapter_, "mean.up");
  const auto mean_down = view(adapter_, "mean.down");

  const Vec d_mu = -f.gain * std::sqrt(f.alpha_bar) * d_out;
  const Vec d_h = b.W2.transpose() * d_out + out_down.transpose() * (out_up.transpose() * d_out);
  const Vec d_pre = d_h.array() * (1.0 - f.h.array().square());

  if (request.embedding) {
    Vec d_m = b.P.transpose() * d_mu + mean_down.transpose() * (mean_up.transpose() * d_mu);
    d_m += (b.V1.transpose() * d_pre).head(kEmbedDim);
    g.d_embedding = TextEmbedding(kTokens, kEmbedDim);
    for (int j = 0; j < kTokens; ++j) {
      for (int d = 0; d < kEmbedDim; ++d) g.d_embedding.at(j, d) = d_m(d) / kTokens;
    }
  }
  if (request.adapter) {
    g.d_adapter = adapter_.zeros_like();
    auto set = [&](std::string_view name, const Mat& value) {
      auto& tensor = g.d_adapter.at(name);
      MatMap(tensor.values.data(), tensor.shape[0], tensor.shape[1]) = value;
    };
    set("mean.up", d_mu * (mean_down * f.m).transpose());
    set("mean.down", (mean_up.transpose() * d_mu) * f.m.transpose());
    set("hidden.up", d_pre * (hid_down * f.x).transpose());
    set("hidden.down", (hid_up.transpose() * d_pre) * f.x.transpose());
    set("out.up", d_out * (out_down * f.h).transpose());
    set("out.down", (out_up.transpose() * d_out) * f.h.transpose());
  }
  return g;
}

AdapterCheckpoint ToyBackend::adapter_checkpoint() const {
  return {name(), config_.rank, adapter_};
}

void ToyBackend::load_adapter(const AdapterCheckpoint& ckpt) {
  if (ckpt.backend != name() || ckpt.rank != config_.rank ||
      !ckpt.params.same_layout(initial_adapter_)) {
    throw InvalidInput("adapter checkpoint does not match this toy backend (backend '" +
                       ckpt.backend + "', rank " + std::to_string(ckpt.rank) + ")");
  }
  adapter_ = ckpt.params;
}

void ToyBackend::reset_adapter() { adapter_ = initial_adapter_; }

std::string ToyBackend::base_fingerprint() const {
  std::vector<std::uint8_t> bytes;
  auto append = [&](const double* p, std::size_t n) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), raw, raw + n * sizeof(double));
  };
  const Impl& b = *base_;
  for (const Mat* m : {&b.P, &b.W1, &b.V1, &b.W2, &b.positional}) {
    append(m->data(), static_cast<std::size_t>(m->size()));
  }
  append(b.b1.data(), static_cast<std::size_t>(b.b1.size()));
  append(b.b2.data(), static_cast<std::size_t>(b.b2.size()));
  const double prior = config_.prior_std;
  append(&prior, 1);
  const std::string word_seed = std::to_string(b.word_seed);
  bytes.insert(bytes.end(), word_seed.begin(), word_seed.end());
  append(schedule_.alpha_bars().data(), schedule_.alpha_bars().size());
  return sha1_hex(bytes);
}

}  // namespace birdseye
