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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "birdseye/backend.hpp"
#include "birdseye/domain.hpp"
#include "birdseye/guided_sampler.hpp"
#include "birdseye/homography.hpp"
#include "birdseye/manifest.hpp"
#include "birdseye/metrics.hpp"

namespace birdseye {

enum class BackendKind { kToy, kPretrained };

std::string_view to_string(BackendKind kind);
/// Accepts "toy" and "pretrained".
BackendKind parse_backend_kind(std::string_view text);

/// Variants of the full method used for ablations.
enum class AblationArm { kFull, kNoIpm, kNoGuidance, kRotationAugment };

std::string_view to_string(AblationArm arm);
/// Accepts "full", "no_ipm", "no_guidance", "rotation_augment".
AblationArm parse_ablation_arm(std::string_view text);
inline constexpr AblationArm kAllArms[] = {AblationArm::kFull, AblationArm::kNoIpm,
                                           AblationArm::kNoGuidance,
                                           AblationArm::kRotationAugment};

struct PipelineConfig {
  BackendKind backend = BackendKind::kToy;
  std::uint64_t seed = 0;
  FinetuneSchedule finetune;
  IPMConfig ipm;
  GuidanceConfig guidance;
  SamplerOptions sampler;
  int candidates = 5;
  AblationArm arm = AblationArm::kFull;
  bool trace = false;
  std::string output_dir = "runs";
  unsigned workers = 1;
  std::size_t probe_count = 64;

  /// Built-in defaults. Toy: calibrated toy guidance strength and no
  /// classifier-free guidance. Pretrained: lambda 1e-6, scale 7.5.
  static PipelineConfig defaults(BackendKind backend = BackendKind::kToy);

  /// Sets one `key=value` setting, e.g. "sampler.steps" or "guidance.kind".
  /// Throws InvalidInput for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  nlohmann::json to_json() const;
};

/// Ordered settings as read from a config file or the command line.
using Settings = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
/// Throws IoError if unreadable and InvalidInput ("path:line: ...") on a line
/// without '='.
Settings read_settings_file(const std::string& path);

/// Command-line settings override file settings, which override the
/// defaults of the backend they select.
PipelineConfig resolve_config(const Settings& file, const Settings& cli);

/// Model and scorers for one worker.
struct PipelineContext {
  std::shared_ptr<DenoiserBackend> backend;
  ProviderSet providers;
};

/// Toy: fresh ToyBackend and toy providers. Pretrained: one runtime process
/// from the environment; throws BackendUnavailable when not configured.
PipelineContext make_context(BackendKind kind);

/// Final step of a run to execute.
enum class StopAfter { kFinetune, kFull };

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

/// Everything known about one run; persisted as run.json in the run
/// directory.
struct RunRecord {
  std::string run_id;
  std::string run_dir;
  /// "complete" or "failed".
  std::string status = "complete";
  std::string completed_stage = "start";
  std::string failed_stage;
  std::string error;
  AblationArm arm = AblationArm::kFull;
  std::string backend;
  std::string base_fingerprint;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> candidate_seeds;
  ManifestRow input;
  std::string input_hash;
  std::string target_prompt;
  /// Finetune run an image-generation run started from, if any.
  std::string source_run;
  std::vector<StageTiming> timings;
  std::string started_at;
  /// Relative path -> git blob hash of every file written besides run.json.
  std::map<std::string, std::string> outputs;
  std::optional<std::size_t> selected_index;
  std::optional<MetricRow> metrics;
  double probe_loss_before = 0.0;
  double probe_loss_after = 0.0;

  nlohmann::json to_json() const;
};

/// Keys of run.json that vary between otherwise identical runs.
inline constexpr const char* kVolatileRecordKeys[] = {"started_at", "timings"};

/// The configuration a run actually uses: the finetune seed is derived from
/// the run seed, no_ipm drops the second stage and no_guidance sets lambda to
/// 0. rotation_augment only swaps the second-stage view.
PipelineConfig with_arm_applied(const PipelineConfig& config);

/// `<id>_<arm>_s<seed>`.
std::string run_id_for(const ManifestRow& row, const PipelineConfig& config);

/// Finetunes on the row's image, samples `config.candidates` images with
/// distinct seeds, keeps the best, scores it and writes everything under
/// `<output_dir>/<run id>/`, replacing an earlier run with the same id. On
/// failure the partial record is written with status "failed" and the error
/// is rethrown.
RunRecord run_pipeline(const ManifestRow& row, const PipelineConfig& config,
                       PipelineContext& context, StopAfter stop = StopAfter::kFull);

/// Runs every row on up to config.workers threads, one context per worker.
/// Records keep manifest order. The first failure is rethrown after all rows
/// finished.
std::vector<RunRecord> run_manifest(std::span<const ManifestRow> rows,
                                    const PipelineConfig& config,
                                    StopAfter stop = StopAfter::kFull);

/// Samples and selects again from a finished finetune run directory into a
/// new run directory `<output_dir>/<run id>_gen`.
RunRecord generate_from_run(const std::string& finetune_run_dir, const PipelineConfig& config,
                            PipelineContext& context);

nlohmann::json read_run_record(const std::string& run_dir);

/// Files present but not listed in run.json, and listed files that are
/// absent. Both empty for a consistent run directory.
struct RunAudit {
  std::vector<std::string> orphans;
  std::vector<std::string> missing;
  bool clean() const { return orphans.empty() && missing.empty(); }
};
RunAudit audit_run_directory(const std::string& run_dir);

}  // namespace birdseye
