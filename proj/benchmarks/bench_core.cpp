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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "birdseye/finetune.hpp"
#include "birdseye/guided_sampler.hpp"
#include "birdseye/histogram_mi.hpp"
#include "birdseye/homography.hpp"
#include "birdseye/toy_backend.hpp"

namespace {

using namespace birdseye;

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ImageBuffer gradient_image(int size) {
  ImageBuffer img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(x * 255 / size);
      img.at(x, y, 1) = static_cast<std::uint8_t>(y * 255 / size);
      img.at(x, y, 2) = 128;
    }
  }
  return img;
}

void BM_SoftHistogram(benchmark::State& state) {
  const auto v = gaussian(static_cast<std::size_t>(state.range(0)), 1);
  GuidanceConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(soft_histogram(v, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SoftHistogram)->Arg(256)->Arg(4096)->Arg(16384);

void BM_MutualInformation(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian(n, 1), y = gaussian(n, 2);
  GuidanceConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mutual_information(x, y, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MutualInformation)->Arg(256)->Arg(4096)->Arg(16384);

void BM_MiGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian(n, 1), y = gaussian(n, 2);
  GuidanceConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mi_gradient(x, y, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MiGradient)->Arg(256)->Arg(4096)->Arg(16384);

void BM_ComputeIpm(benchmark::State& state) {
  const auto img = gradient_image(static_cast<int>(state.range(0)));
  IPMConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(compute_ipm(img, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_ComputeIpm)->Arg(64)->Arg(512);

void BM_ToyGuidedSample(benchmark::State& state) {
  ToyBackend backend;
  const auto e = backend.encode_text("aerial view, a red wall");
  const auto z_S = backend.encode_image(gradient_image(ToyBackend::kImageSize));
  GuidanceConfig cfg;
  cfg.lambda = toy_guidance_lambda(cfg.kind);
  SamplerOptions opts;
  opts.steps = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(guided_sample(backend, e, z_S, cfg, opts, seed++));
}
BENCHMARK(BM_ToyGuidedSample)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ToyFinetune(benchmark::State& state) {
  const auto img = gradient_image(ToyBackend::kImageSize);
  FinetuneSchedule sched;
  for (auto _ : state) {
    ToyBackend backend;
    benchmark::DoNotOptimize(two_stage_finetune(backend, img, "a red wall", IPMConfig{}, sched));
  }
}
BENCHMARK(BM_ToyFinetune)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
