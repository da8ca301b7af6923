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

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "birdseye/image_io.hpp"
#include "oracles.hpp"
#include "stub_providers.hpp"

namespace birdseye {
namespace {

namespace fs = std::filesystem;
using testing::keyed_image;
using testing::StubProvider;

std::shared_ptr<StubProvider> stub() { return std::make_shared<StubProvider>(); }

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("birdseye_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Cosine, BasisVectors) {
  const std::vector<double> e1 = {1, 0, 0};
  const std::vector<double> e2 = {0, 1, 0};
  const std::vector<double> m1 = {-1, 0, 0};
  EXPECT_DOUBLE_EQ(cosine(e1, e1), 1.0);
  EXPECT_DOUBLE_EQ(cosine(e1, e2), 0.0);
  EXPECT_DOUBLE_EQ(cosine(e1, m1), -1.0);
}

TEST(Cosine, ZeroVectorIsUndefined) {
  const std::vector<double> z = {0, 0, 0};
  const std::vector<double> e1 = {1, 0, 0};
  EXPECT_THROW(cosine(z, e1), UndefinedSimilarity);
  EXPECT_THROW(cosine(e1, z), UndefinedSimilarity);
  EXPECT_THROW(cosine(e1, std::vector<double>{1, 0}), ShapeMismatch);
}

TEST(Cosine, BoundedAndScaleInvariant) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto u = testing::normal_vector(1 + seed % 17, seed);
    auto v = testing::normal_vector(u.size(), seed + 5000);
    if (seed % 7 == 0) v = u;
    const double c = cosine(u, v);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    auto w = v;
    for (double& x : w) x *= 3.5;
    EXPECT_NEAR(cosine(u, w), c, 1e-12);
  }
}

TEST(ImageTextScore, StubCases) {
  auto p = stub();
  p->image(1, {1, 0}).text("aligned", {1, 0}).text("orthogonal", {0, 1});
  EXPECT_DOUBLE_EQ(image_text_score(*p, keyed_image(1), "aligned"), 1.0);
  EXPECT_DOUBLE_EQ(image_text_score(*p, keyed_image(1), "orthogonal"), 0.0);
}

TEST(ImageImageScore, StubAndIdentity) {
  auto p = stub();
  p->image(1, {1, 0, 0}).image(2, {0, 0, 1});
  EXPECT_DOUBLE_EQ(image_image_score(*p, keyed_image(1), keyed_image(2)), 0.0);
  const auto toy = toy_providers(3);
  const auto img = testing::smooth_image(40, 30);
  for (const auto* prov : {toy.clip.get(), toy.dino.get(), toy.sscd.get()}) {
    EXPECT_NEAR(image_image_score(*prov, img, img), 1.0, 1e-12) << prov->provider_id();
  }
}

TEST(DirectionalSimilarity, StubCases) {
  auto p = stub();
  p->image(1, {0, 0, 0}).image(2, {1, 1, 0}).image(3, {0, 0, 1});
  p->text("src", {0, 0, 0}).text("same", {1, 1, 0}).text("x", {1, 0, 0});
  EXPECT_NEAR(directional_similarity(*p, keyed_image(1), keyed_image(2), "src", "same"), 1.0,
              1e-12);
  EXPECT_NEAR(directional_similarity(*p, keyed_image(1), keyed_image(3), "src", "x"), 0.0,
              1e-12);
  EXPECT_NEAR(directional_similarity(*p, keyed_image(1), keyed_image(2), "src", "x"),
              1.0 / std::sqrt(2.0), 1e-9);
}

TEST(DirectionalSimilarity, IdenticalInputsAreUndefined) {
  auto p = stub();
  p->image(1, {1, 0}).image(2, {0, 1}).text("a", {1, 0}).text("b", {0, 1});
  EXPECT_THROW(directional_similarity(*p, keyed_image(1), keyed_image(1), "a", "b"),
               UndefinedSimilarity);
  EXPECT_THROW(directional_similarity(*p, keyed_image(1), keyed_image(2), "a", "a"),
               UndefinedSimilarity);
}

TEST(ArgmaxScoreSum, ArithmeticFixtureAndTies) {
  EXPECT_EQ(argmax_score_sum(std::vector<double>{0.2, 0.5, 0.4},
                             std::vector<double>{0.3, 0.1, 0.4}),
            2u);
  EXPECT_EQ(argmax_score_sum(std::vector<double>{0.25, 0.5, 0.5},
                             std::vector<double>{0.5, 0.25, 0.25}),
            0u);
  EXPECT_EQ(argmax_score_sum(std::vector<double>{0.7}, std::vector<double>{-0.1}), 0u);
  EXPECT_THROW(argmax_score_sum(std::vector<double>{}, std::vector<double>{}), InvalidInput);
}

TEST(ArgmaxScoreSum, InvariantToShiftAndUniformScaling) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.index(8);
    std::vector<double> clip(k);
    std::vector<double> sscd(k);
    for (std::size_t i = 0; i < k; ++i) {
      // Quantized scores so ties actually occur.
      clip[i] = static_cast<double>(rng.index(5)) / 4.0;
      sscd[i] = static_cast<double>(rng.index(5)) / 4.0;
    }
    const auto best = argmax_score_sum(clip, sscd);
    auto shifted = clip;
    for (double& v : shifted) v += 0.5;
    EXPECT_EQ(argmax_score_sum(shifted, sscd), best);
    auto c2 = clip;
    auto s2 = sscd;
    for (double& v : c2) v *= 2.0;
    for (double& v : s2) v *= 2.0;
    EXPECT_EQ(argmax_score_sum(c2, s2), best);
  }
}

// Stub providers whose scores for candidate i are clip[i] and sscd[i].
ProviderSet scored_stubs(const std::vector<double>& clip, const std::vector<double>& sscd) {
  auto c = stub();
  auto s = stub();
  c->text("aerial view, a barn", {1, 0, 0});
  s->image(200, {1, 0, 0});
  for (std::size_t i = 0; i < clip.size(); ++i) {
    c->image(static_cast<int>(i), {clip[i], std::sqrt(1 - clip[i] * clip[i]), 0});
    s->image(static_cast<int>(i), {sscd[i], 0, std::sqrt(1 - sscd[i] * sscd[i])});
  }
  return {c, c, s};
}

TEST(BestOfK, SelectsLargestSum) {
  const auto p = scored_stubs({0.2, 0.5, 0.4}, {0.3, 0.1, 0.4});
  const std::vector<ImageBuffer> cands = {keyed_image(0), keyed_image(1), keyed_image(2)};
  EXPECT_EQ(best_of_k(cands, keyed_image(200), "a barn", p), 2u);
  EXPECT_EQ(best_of_k(std::span(cands).first(1), keyed_image(200), "a barn", p), 0u);
  EXPECT_THROW(best_of_k(std::span<const ImageBuffer>(), keyed_image(200), "a barn", p),
               InvalidInput);
}

TEST(BestOfK, TiesGoToLowestIndex) {
  const auto p = scored_stubs({0.5, 0.25, 0.5}, {0.25, 0.5, 0.25});
  const std::vector<ImageBuffer> cands = {keyed_image(0), keyed_image(1), keyed_image(2)};
  EXPECT_EQ(best_of_k(cands, keyed_image(200), "a barn", p), 0u);
}

TEST(ToyProviders, UnitNormFixedDimensionDeterministic) {
  const auto a = toy_providers(1);
  const auto b = toy_providers(1);
  for (int i = 0; i < 20; ++i) {
    const auto img = testing::smooth_image(16 + 7 * i, 12 + 5 * i, 0.05 * i);
    for (const auto& [pa, pb] : {std::pair{a.clip, b.clip}, std::pair{a.dino, b.dino},
                                 std::pair{a.sscd, b.sscd}}) {
      const auto v = pa->embed_image(img);
      EXPECT_EQ(v.size(), pa->dim());
      EXPECT_NEAR(testing::norm2(v), 1.0, 1e-6);
      EXPECT_EQ(v, pb->embed_image(img));
      const auto t = pa->embed_text("caption number " + std::to_string(i));
      EXPECT_EQ(t.size(), pa->dim());
      EXPECT_NEAR(testing::norm2(t), 1.0, 1e-6);
    }
  }
  EXPECT_NE(a.clip->provider_id(), a.sscd->provider_id());
}

MetricRow random_row(Rng& rng, std::string id) {
  MetricRow r;
  r.id = std::move(id);
  for (double* v : {&r.clip, &r.a_clip, &r.sscd, &r.dino, &r.clip_i, &r.clipd, &r.a_clipd}) {
    *v = rng.uniform(-1, 1);
  }
  return r;
}

TEST(MetricReport, MeansAreArithmeticAverages) {
  Rng rng(4);
  MetricReport rep{{random_row(rng, "a"), random_row(rng, "b")}};
  const auto m = rep.means();
  EXPECT_EQ(m.id, "mean");
  EXPECT_DOUBLE_EQ(m.clip, (rep.rows[0].clip + rep.rows[1].clip) / 2);
  EXPECT_DOUBLE_EQ(m.a_clipd, (rep.rows[0].a_clipd + rep.rows[1].a_clipd) / 2);
  MetricReport single{{rep.rows[0]}};
  auto expect = rep.rows[0];
  expect.id = "mean";
  EXPECT_EQ(single.means(), expect);
}

TEST(MetricReport, CsvRoundTripIsLossless) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    MetricReport rep;
    const std::size_t n = rng.index(6);
    for (std::size_t i = 0; i < n; ++i) rep.rows.push_back(random_row(rng, "row" + std::to_string(i)));
    const auto csv = rep.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,clip,a_clip,sscd,dino,clip_i,clipd,a_clipd");
    EXPECT_EQ(MetricReport::from_csv(csv), rep);
  }
  EXPECT_THROW(MetricReport::from_csv("nope\n"), InvalidInput);
  EXPECT_THROW(MetricReport::from_csv("id,clip,a_clip,sscd,dino,clip_i,clipd,a_clipd\na,1\n"),
               InvalidInput);
}

struct Fixture {
  std::vector<ManifestRow> rows;
  std::string generated;
};

Fixture write_fixture(const fs::path& dir, int n) {
  Fixture f;
  fs::create_directories(dir / "gen");
  for (int i = 0; i < n; ++i) {
    ManifestRow r;
    r.id = "img" + std::to_string(i);
    r.caption = "a scene with object " + std::to_string(i);
    r.image_path = (dir / (r.id + ".png")).string();
    write_png(r.image_path, testing::smooth_image(48, 40, 0.07 * i));
    write_png((dir / "gen" / (r.id + ".png")).string(), testing::smooth_image(64, 64, 0.5 + 0.03 * i));
    f.rows.push_back(r);
  }
  f.generated = (dir / "gen").string();
  return f;
}

TEST(EvaluateDataset, SingleRowEqualsScorePair) {
  TempDir tmp("eval_single");
  const auto f = write_fixture(tmp.path(), 1);
  const auto p = toy_providers();
  const auto rep = evaluate_dataset(f.rows, f.generated, p);
  ASSERT_EQ(rep.rows.size(), 1u);
  const auto expect = score_pair(p, "img0", read_png(f.rows[0].image_path),
                                 read_png(f.generated + "/img0.png"), f.rows[0].caption);
  EXPECT_EQ(rep.rows[0], expect);
  auto mean = expect;
  mean.id = "mean";
  EXPECT_EQ(rep.means(), mean);
}

TEST(EvaluateDataset, UsesViewLabelForTargetTexts) {
  TempDir tmp("eval_view");
  auto f = write_fixture(tmp.path(), 1);
  f.rows[0].view_label = "bottom view";
  const auto p = toy_providers();
  const auto rep = evaluate_dataset(f.rows, f.generated, p);
  const auto gen = read_png(f.generated + "/img0.png");
  EXPECT_DOUBLE_EQ(rep.rows[0].a_clip, image_text_score(*p.clip, gen, "bottom view"));
  EXPECT_DOUBLE_EQ(rep.rows[0].clip,
                   image_text_score(*p.clip, gen, "bottom view, " + f.rows[0].caption));
}

TEST(EvaluateDataset, MeansArePermutationInvariant) {
  TempDir tmp("eval_perm");
  const auto f = write_fixture(tmp.path(), 6);
  const auto p = toy_providers();
  const auto base = evaluate_dataset(f.rows, f.generated, p).means();
  Rng rng(8);
  auto rows = f.rows;
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = rows.size() - 1; i > 0; --i) std::swap(rows[i], rows[rng.index(i + 1)]);
    const auto rep = evaluate_dataset(rows, f.generated, p, 3);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rep.rows[i].id, rows[i].id);
    const auto m = rep.means();
    EXPECT_NEAR(m.clip, base.clip, 1e-12);
    EXPECT_NEAR(m.a_clip, base.a_clip, 1e-12);
    EXPECT_NEAR(m.sscd, base.sscd, 1e-12);
    EXPECT_NEAR(m.dino, base.dino, 1e-12);
    EXPECT_NEAR(m.clip_i, base.clip_i, 1e-12);
    EXPECT_NEAR(m.clipd, base.clipd, 1e-12);
    EXPECT_NEAR(m.a_clipd, base.a_clipd, 1e-12);
  }
}

TEST(EvaluateDataset, ParallelMatchesSerial) {
  TempDir tmp("eval_par");
  const auto f = write_fixture(tmp.path(), 7);
  const auto p = toy_providers();
  EXPECT_EQ(evaluate_dataset(f.rows, f.generated, p, 1), evaluate_dataset(f.rows, f.generated, p, 4));
}

TEST(EvaluateDataset, ListsAllMissingImages) {
  TempDir tmp("eval_missing");
  const auto f = write_fixture(tmp.path(), 3);
  fs::remove(fs::path(f.generated) / "img0.png");
  fs::remove(fs::path(f.generated) / "img2.png");
  try {
    evaluate_dataset(f.rows, f.generated, toy_providers());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("img0.png"), std::string::npos);
    EXPECT_NE(msg.find("img2.png"), std::string::npos);
    EXPECT_EQ(msg.find("img1.png"), std::string::npos);
  }
}

TEST(LoadManifest, EmptyFileGivesNoRows) {
  TempDir tmp("manifest_empty");
  const auto path = tmp.path() / "m.jsonl";
  std::ofstream(path).close();
  EXPECT_TRUE(load_manifest(path.string()).empty());
}

TEST(LoadManifest, ResolvesRelativePathsAndDefaults) {
  TempDir tmp("manifest_ok");
  fs::create_directories(tmp.path() / "imgs");
  write_png((tmp.path() / "imgs" / "a.png").string(), testing::smooth_image(8, 8));
  std::ofstream(tmp.path() / "m.jsonl")
      << R"({"id": "a", "image_path": "imgs/a.png", "caption": "a dog"})" << "\n\n"
      << R"({"id": "b", "image_path": "imgs/a.png", "caption": "a cat", "view_label": "bottom view"})"
      << "\n";
  const auto rows = load_manifest((tmp.path() / "m.jsonl").string());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].view_label, "aerial view");
  EXPECT_EQ(rows[1].view_label, "bottom view");
  EXPECT_EQ(fs::path(rows[0].image_path), (tmp.path() / "imgs" / "a.png").lexically_normal());
}

TEST(LoadManifest, ErrorsNameLineAndId) {
  TempDir tmp("manifest_bad");
  write_png((tmp.path() / "a.png").string(), testing::smooth_image(8, 8));
  const auto path = (tmp.path() / "m.jsonl").string();
  auto expect_error = [&](const std::string& body, const std::string& needle, bool io) {
    std::ofstream(path) << body;
    try {
      load_manifest(path);
      ADD_FAILURE() << "no error for: " << body;
    } catch (const IoError& e) {
      EXPECT_TRUE(io) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    } catch (const InvalidInput& e) {
      EXPECT_FALSE(io) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  const std::string ok = R"({"id": "a", "image_path": "a.png", "caption": "c"})";
  expect_error(ok + "\n" + ok + "\n", "duplicate id 'a'", false);
  expect_error(ok + "\n{not json\n", ":2:", false);
  expect_error(R"({"id": "a", "caption": "c"})", "image_path", false);
  expect_error(R"({"id": "a", "image_path": "a.png", "caption": ""})", "empty caption", false);
  expect_error(R"({"id": "z", "image_path": "missing.png", "caption": "c"})", "missing.png", true);
  EXPECT_THROW(load_manifest((tmp.path() / "nope.jsonl").string()), IoError);
}

TEST(LoadManifest, FiveHundredRowsLoadQuickly) {
  TempDir tmp("manifest_500");
  write_png((tmp.path() / "a.png").string(), testing::smooth_image(8, 8));
  {
    std::ofstream out(tmp.path() / "m.jsonl");
    for (int i = 0; i < 500; ++i) {
      out << R"({"id": "row)" << i << R"(", "image_path": "a.png", "caption": "caption )" << i
          << "\"}\n";
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const auto rows = load_manifest((tmp.path() / "m.jsonl").string());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(rows.size(), 500u);
  EXPECT_LT(secs, 1.0);
}

}  // namespace
}  // namespace birdseye
