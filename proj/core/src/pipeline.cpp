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

#include "birdseye/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "birdseye/finetune.hpp"
#include "birdseye/hashing.hpp"
#include "birdseye/image_io.hpp"
#include "birdseye/rng.hpp"
#include "birdseye/runtime_bridge.hpp"
#include "birdseye/serialization.hpp"
#include "birdseye/toy_backend.hpp"

namespace birdseye {

namespace fs = std::filesystem;

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::kToy ? "toy" : "pretrained";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "toy") return BackendKind::kToy;
  if (text == "pretrained") return BackendKind::kPretrained;
  throw InvalidInput("unknown backend '" + std::string(text) + "' (expected toy or pretrained)");
}

std::string_view to_string(AblationArm arm) {
  switch (arm) {
    case AblationArm::kFull: return "full";
    case AblationArm::kNoIpm: return "no_ipm";
    case AblationArm::kNoGuidance: return "no_guidance";
    case AblationArm::kRotationAugment: return "rotation_augment";
  }
  return "full";
}

AblationArm parse_ablation_arm(std::string_view text) {
  for (AblationArm a : kAllArms) {
    if (to_string(a) == text) return a;
  }
  throw InvalidInput("unknown ablation arm '" + std::string(text) +
                     "' (expected full, no_ipm, no_guidance or rotation_augment)");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InvalidInput("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw InvalidInput("invalid value '" + std::string(value) + "' for " + std::string(key));
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

PipelineConfig PipelineConfig::defaults(BackendKind backend) {
  PipelineConfig c;
  c.backend = backend;
  if (backend == BackendKind::kToy) {
    c.guidance.lambda = toy_guidance_lambda(c.guidance.kind);
    c.sampler.cfg_scale = 1.0;
  } else {
    c.guidance.lambda = 1e-6;
    c.sampler.cfg_scale = 7.5;
  }
  return c;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "backend") backend = parse_backend_kind(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "finetune.stage_a_embed_iters") finetune.stage_a_embed_iters = parse_number<int>(key, value);
  else if (key == "finetune.stage_a_embed_lr") finetune.stage_a_embed_lr = parse_number<double>(key, value);
  else if (key == "finetune.stage_a_adapter_iters") finetune.stage_a_adapter_iters = parse_number<int>(key, value);
  else if (key == "finetune.stage_a_adapter_lr") finetune.stage_a_adapter_lr = parse_number<double>(key, value);
  else if (key == "finetune.stage_b_embed_iters") finetune.stage_b_embed_iters = parse_number<int>(key, value);
  else if (key == "finetune.stage_b_adapter_iters") finetune.stage_b_adapter_iters = parse_number<int>(key, value);
  else if (key == "ipm.strength") ipm.strength = parse_number<double>(key, value);
  else if (key == "ipm.fill") {
    if (value == "white") ipm.fill = FillMode::kWhite;
    else if (value == "edge") ipm.fill = FillMode::kEdgeReplicate;
    else throw InvalidInput("invalid value '" + std::string(value) + "' for ipm.fill (white or edge)");
  }
  else if (key == "guidance.kind") guidance.kind = parse_guidance_kind(value);
  else if (key == "guidance.lambda") guidance.lambda = parse_number<double>(key, value);
  else if (key == "guidance.bins") guidance.num_bins = parse_number<int>(key, value);
  else if (key == "guidance.soft_bandwidth") guidance.soft_bandwidth = parse_number<double>(key, value);
  else if (key == "guidance.range") {
    if (value == "union") {
      guidance.value_range = ValueRange::union_min_max();
    } else {
      const auto comma = value.find(',');
      if (comma == std::string_view::npos) {
        throw InvalidInput("guidance.range must be 'union' or 'lo,hi'");
      }
      guidance.value_range = ValueRange::fixed(parse_number<double>(key, trim(value.substr(0, comma))),
                                               parse_number<double>(key, trim(value.substr(comma + 1))));
    }
  }
  else if (key == "sampler.steps") sampler.steps = parse_number<int>(key, value);
  else if (key == "sampler.cfg_scale") sampler.cfg_scale = parse_number<double>(key, value);
  else if (key == "sampler.negative_prompt") sampler.negative_prompt = std::string(value);
  else if (key == "candidates") candidates = parse_number<int>(key, value);
  else if (key == "arm") arm = parse_ablation_arm(value);
  else if (key == "trace") trace = parse_bool(key, value);
  else if (key == "output_dir") output_dir = std::string(value);
  else if (key == "workers") workers = parse_number<unsigned>(key, value);
  else if (key == "probe_count") probe_count = parse_number<std::size_t>(key, value);
  else throw InvalidInput("unknown setting '" + std::string(key) + "'");
}

void PipelineConfig::validate() const {
  finetune.validate();
  ipm.validate();
  guidance.validate();
  if (sampler.steps < 1) throw InvalidInput("sampler.steps must be at least 1");
  if (candidates < 1) throw InvalidInput("candidates must be at least 1");
  if (workers < 1) throw InvalidInput("workers must be at least 1");
  if (probe_count < 1) throw InvalidInput("probe_count must be at least 1");
  if (output_dir.empty()) throw InvalidInput("output_dir is empty");
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["backend"] = std::string(to_string(backend));
  j["seed"] = seed;
  j["finetune"] = finetune;
  j["ipm"] = {{"strength", ipm.strength},
              {"fill", ipm.fill == FillMode::kWhite ? "white" : "edge"},
              {"output_width", ipm.output_width},
              {"output_height", ipm.output_height}};
  j["guidance"] = guidance;
  j["sampler"] = {{"steps", sampler.steps},
                  {"cfg_scale", sampler.cfg_scale},
                  {"negative_prompt", sampler.negative_prompt}};
  j["candidates"] = candidates;
  j["arm"] = std::string(to_string(arm));
  j["trace"] = trace;
  j["output_dir"] = output_dir;
  j["workers"] = workers;
  j["probe_count"] = probe_count;
  return j;
}

Settings read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  Settings out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidInput(path + ":" + std::to_string(n) + ": expected key = value");
    }
    out.emplace_back(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  return out;
}

PipelineConfig resolve_config(const Settings& file, const Settings& cli) {
  BackendKind backend = BackendKind::kToy;
  bool lambda_set = false;
  for (const auto* layer : {&file, &cli}) {
    for (const auto& [k, v] : *layer) {
      if (k == "backend") backend = parse_backend_kind(trim(v));
      if (k == "guidance.lambda") lambda_set = true;
    }
  }
  PipelineConfig c = PipelineConfig::defaults(backend);
  for (const auto* layer : {&file, &cli}) {
    for (const auto& [k, v] : *layer) c.set(k, v);
  }
  // The toy strength depends on the functional, so follow a changed kind.
  if (backend == BackendKind::kToy && !lambda_set) {
    c.guidance.lambda = toy_guidance_lambda(c.guidance.kind);
  }
  c.validate();
  return c;
}

PipelineContext make_context(BackendKind kind) {
  if (kind == BackendKind::kToy) {
    return {std::make_shared<ToyBackend>(), toy_providers()};
  }
  const RuntimeConfig rc = RuntimeConfig::from_environment();
  auto process = std::make_shared<RuntimeProcess>(rc.command);
  auto backend = std::make_shared<RuntimeBridgeBackend>(process, rc);
  return {backend, runtime_providers(process)};
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["status"] = status;
  j["completed_stage"] = completed_stage;
  if (status != "complete") j["failure"] = {{"stage", failed_stage}, {"error", error}};
  j["arm"] = std::string(to_string(arm));
  j["backend"] = {{"name", backend}, {"base_fingerprint", base_fingerprint}};
  j["config"] = config;
  j["seeds"] = {{"run", seed}, {"candidates", candidate_seeds}};
  j["inputs"] = {{"id", input.id},
                 {"image_path", input.image_path},
                 {"image_hash", input_hash},
                 {"caption", input.caption},
                 {"view_label", input.view_label},
                 {"target_prompt", target_prompt}};
  if (!source_run.empty()) j["source_run"] = source_run;
  nlohmann::json t = nlohmann::json::object();
  for (const auto& s : timings) t[s.stage] = s.seconds;
  j["timings"] = t;
  j["started_at"] = started_at;
  j["outputs"] = outputs;
  j["selected_index"] = selected_index ? nlohmann::json(*selected_index) : nlohmann::json();
  if (metrics) {
    nlohmann::json m;
    m["clip"] = metrics->clip;
    m["a_clip"] = metrics->a_clip;
    m["sscd"] = metrics->sscd;
    m["dino"] = metrics->dino;
    m["clip_i"] = metrics->clip_i;
    m["clipd"] = metrics->clipd;
    m["a_clipd"] = metrics->a_clipd;
    j["metrics"] = m;
  }
  j["probe_loss"] = {{"before", probe_loss_before}, {"after", probe_loss_after}};
  return j;
}

PipelineConfig with_arm_applied(const PipelineConfig& config) {
  PipelineConfig c = config;
  c.finetune.seed = derive_seed(c.seed, "finetune");
  if (c.arm == AblationArm::kNoIpm) {
    c.finetune.stage_b_embed_iters = 0;
    c.finetune.stage_b_adapter_iters = 0;
  }
  if (c.arm == AblationArm::kNoGuidance) c.guidance.lambda = 0.0;
  return c;
}

std::string run_id_for(const ManifestRow& row, const PipelineConfig& config) {
  return row.id + "_" + std::string(to_string(config.arm)) + "_s" + std::to_string(config.seed);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Owns the run directory while a run is in progress.
class RunWriter {
 public:
  RunWriter(RunRecord& rec) : rec_(rec), dir_(rec.run_dir) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& rel) const { return dir_ / rel; }

  void added(const std::string& rel) { rec_.outputs[rel] = git_blob_hash_file(path(rel).string()); }

  void png(const std::string& rel, const ImageBuffer& img) {
    fs::create_directories(path(rel).parent_path());
    write_png(path(rel).string(), img);
    added(rel);
  }
  void embedding(const std::string& rel, const TextEmbedding& e) {
    write_embedding(path(rel).string(), e);
    added(rel);
  }
  void adapter(const std::string& rel, const AdapterCheckpoint& c) {
    write_adapter_checkpoint(path(rel).string(), c);
    added(rel);
  }
  void text(const std::string& rel, const std::string& content) {
    write_text(path(rel), content);
    added(rel);
  }
  void record() const { write_text(dir_ / "run.json", rec_.to_json().dump(2) + "\n"); }

 private:
  RunRecord& rec_;
  fs::path dir_;
};

std::string loss_curves_csv(const LossCurves& c) {
  std::string out = "stage,iteration,loss\n";
  const std::pair<const char*, const std::vector<double>*> stages[] = {
      {"stage_a_embed", &c.stage_a_embed},
      {"stage_a_adapter", &c.stage_a_adapter},
      {"stage_b_embed", &c.stage_b_embed},
      {"stage_b_adapter", &c.stage_b_adapter}};
  for (const auto& [name, losses] : stages) {
    for (std::size_t i = 0; i < losses->size(); ++i) {
      out += std::string(name) + "," + std::to_string(i) + "," + format_double((*losses)[i]) + "\n";
    }
  }
  return out;
}

RunRecord start_record(const ManifestRow& row, const PipelineConfig& config,
                       const DenoiserBackend& backend, std::string run_id) {
  RunRecord rec;
  rec.run_id = std::move(run_id);
  rec.run_dir = (fs::path(config.output_dir) / rec.run_id).string();
  rec.arm = config.arm;
  rec.backend = backend.name();
  rec.base_fingerprint = backend.base_fingerprint();
  rec.config = config.to_json();
  rec.seed = config.seed;
  rec.input = row;
  rec.target_prompt = build_target_prompt(row.view_label, row.caption);
  rec.started_at = utc_now();
  for (int i = 0; i < config.candidates; ++i) {
    rec.candidate_seeds.push_back(derive_seed(config.seed, "candidate-" + std::to_string(i)));
  }
  return rec;
}

// Sampling, best-of-k selection and scoring for a finetuned backend.
void generate_select_evaluate(RunRecord& rec, RunWriter& out, const PipelineConfig& config,
                              PipelineContext& ctx, const ImageBuffer& source,
                              std::string& stage) {
  const DenoiserBackend& backend = *ctx.backend;
  auto t0 = Clock::now();
  stage = "generate";
  const GuidanceConfig& guidance = config.guidance;
  const TextEmbedding e_T = backend.encode_text(rec.target_prompt);
  const LatentTensor z_S = backend.encode_image(source);
  std::vector<ImageBuffer> candidates;
  std::string trace = "candidate,step,t,guided,guidance_norm,mi\n";
  for (std::size_t i = 0; i < rec.candidate_seeds.size(); ++i) {
    std::vector<SamplerStep> steps;
    const LatentTensor z = guided_sample(backend, e_T, z_S, guidance, config.sampler,
                                         rec.candidate_seeds[i], config.trace ? &steps : nullptr);
    candidates.push_back(backend.decode_latents(z));
    out.png("candidates/cand_" + std::to_string(i) + ".png", candidates.back());
    for (const auto& s : steps) {
      trace += std::to_string(i) + "," + std::to_string(s.index) + "," + std::to_string(s.t) + "," +
               (s.guided ? "1" : "0") + "," + format_double(s.guidance_norm) + "," +
               format_double(s.mi) + "\n";
    }
  }
  if (config.trace) out.text("trace.csv", trace);
  rec.timings.push_back({"generate", seconds_since(t0)});
  rec.completed_stage = "generate";

  t0 = Clock::now();
  stage = "select";
  const std::size_t best =
      best_of_k(candidates, source, rec.input.caption, ctx.providers, rec.input.view_label);
  rec.selected_index = best;
  out.png("selected.png", candidates[best]);
  rec.timings.push_back({"select", seconds_since(t0)});
  rec.completed_stage = "select";

  t0 = Clock::now();
  stage = "evaluate";
  const MetricRow row = score_pair(ctx.providers, rec.input.id, source, candidates[best],
                                   rec.input.caption, rec.input.view_label);
  rec.metrics = row;
  out.text("metrics.csv", MetricReport{{row}}.to_csv());
  rec.timings.push_back({"evaluate", seconds_since(t0)});
  rec.completed_stage = "evaluate";
}

}  // namespace

RunRecord run_pipeline(const ManifestRow& row, const PipelineConfig& requested,
                       PipelineContext& context, StopAfter stop) {
  requested.validate();
  const PipelineConfig config = with_arm_applied(requested);
  DenoiserBackend& backend = *context.backend;
  backend.reset_adapter();
  RunRecord rec = start_record(row, config, backend, run_id_for(row, config));
  RunWriter out(rec);
  std::string stage = "load_input";
  try {
    rec.input_hash = git_blob_hash_file(row.image_path);
    const ImageBuffer input = read_png(row.image_path);

    stage = "finetune";
    const FinetuneSchedule& sched = config.finetune;
    FinetuneOptions options;
    options.probe_count = config.probe_count;
    if (config.arm == AblationArm::kRotationAugment) options.view = SecondStageView::kRotation45;

    auto stage_start = Clock::now();
    const auto on_stage = [&](const FinetuneResult& partial) {
      const std::string& s = partial.completed_stage;
      rec.completed_stage = s;
      if (s == "start") {
        out.png("ipm.png", partial.second_view);
      } else {
        rec.timings.push_back({s, seconds_since(stage_start)});
        if (s == "stage_a_embed") out.embedding("e_opt.bin", partial.e_opt);
        if (s == "stage_b_embed") out.embedding("e_H.bin", partial.e_H);
        if (s == "stage_a_adapter" || s == "stage_b_adapter") out.adapter("adapter.ckpt", partial.checkpoint);
      }
      stage_start = Clock::now();
    };
    const FinetuneResult ft =
        two_stage_finetune(backend, input, row.caption, config.ipm, sched, options, on_stage);
    out.embedding("e_opt.bin", ft.e_opt);
    out.embedding("e_H.bin", ft.e_H);
    out.adapter("adapter.ckpt", ft.checkpoint);
    // Sample with the adapter as stored (float32), so a later generation run
    // from this directory reproduces the same images.
    backend.load_adapter(read_adapter_checkpoint(out.path("adapter.ckpt").string()));
    out.text("loss_curves.csv", loss_curves_csv(ft.curves));
    rec.probe_loss_before = ft.probe_loss_before;
    rec.probe_loss_after = ft.probe_loss_after;
    rec.completed_stage = "finetune";

    if (stop == StopAfter::kFull) {
      generate_select_evaluate(rec, out, config, context, ft.source, stage);
    }
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.failed_stage = stage;
    rec.error = e.what();
    out.record();
    throw;
  }
  out.record();
  return rec;
}

RunRecord generate_from_run(const std::string& finetune_run_dir, const PipelineConfig& requested,
                            PipelineContext& context) {
  requested.validate();
  const PipelineConfig config = with_arm_applied(requested);
  const nlohmann::json src = read_run_record(finetune_run_dir);
  if (src.at("status") != "complete") {
    throw InvalidInput("run " + finetune_run_dir + " did not complete");
  }
  const auto& in = src.at("inputs");
  ManifestRow row{in.at("id").get<std::string>(), in.at("image_path").get<std::string>(),
                  in.at("caption").get<std::string>(), in.at("view_label").get<std::string>()};
  DenoiserBackend& backend = *context.backend;
  backend.reset_adapter();
  RunRecord rec = start_record(row, config, backend, src.at("run_id").get<std::string>() + "_gen");
  rec.source_run = src.at("run_id").get<std::string>();
  RunWriter out(rec);
  std::string stage = "load_input";
  try {
    rec.input_hash = git_blob_hash_file(row.image_path);
    if (rec.input_hash != in.at("image_hash").get<std::string>()) {
      throw InvalidInput("input image " + row.image_path + " changed since run " + rec.source_run);
    }
    ImageBuffer source = read_png(row.image_path);
    const int size = backend.image_size();
    if (source.width() != size || source.height() != size) source = center_crop_resize(source, size);
    stage = "load_adapter";
    backend.load_adapter(
        read_adapter_checkpoint((fs::path(finetune_run_dir) / "adapter.ckpt").string()));
    rec.completed_stage = "load_adapter";
    generate_select_evaluate(rec, out, config, context, source, stage);
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.failed_stage = stage;
    rec.error = e.what();
    out.record();
    throw;
  }
  out.record();
  return rec;
}

std::vector<RunRecord> run_manifest(std::span<const ManifestRow> rows,
                                    const PipelineConfig& config, StopAfter stop) {
  config.validate();
  std::vector<RunRecord> records(rows.size());
  std::vector<std::exception_ptr> errors(rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    std::optional<PipelineContext> ctx;
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        if (!ctx) ctx = make_context(config.backend);
        records[i] = run_pipeline(rows[i], config, *ctx, stop);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(config.workers, std::max<std::size_t>(rows.size(), 1));
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < n; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

nlohmann::json read_run_record(const std::string& run_dir) {
  const fs::path p = fs::path(run_dir) / "run.json";
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

RunAudit audit_run_directory(const std::string& run_dir) {
  const nlohmann::json rec = read_run_record(run_dir);
  std::vector<std::string> listed;
  for (const auto& [rel, hash] : rec.at("outputs").items()) listed.push_back(rel);
  std::sort(listed.begin(), listed.end());

  std::vector<std::string> present;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel != "run.json") present.push_back(rel);
  }
  std::sort(present.begin(), present.end());

  RunAudit audit;
  std::set_difference(present.begin(), present.end(), listed.begin(), listed.end(),
                      std::back_inserter(audit.orphans));
  std::set_difference(listed.begin(), listed.end(), present.begin(), present.end(),
                      std::back_inserter(audit.missing));
  return audit;
}

}  // namespace birdseye
