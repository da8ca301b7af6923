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

#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "birdseye/errors.hpp"
#include "birdseye/homography.hpp"
#include "birdseye/image_io.hpp"
#include "birdseye/manifest.hpp"
#include "birdseye/metrics.hpp"
#include "birdseye/pipeline.hpp"

namespace birdseye::cli {
namespace {

// Options shared by the pipeline subcommands. Flags only become settings
// when given, so they override the config file without masking it.
struct Common {
  std::string config_path;
  std::string backend;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  std::string output_dir;
  std::optional<unsigned> workers;
  std::vector<std::string> set;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "key = value settings file")->check(CLI::ExistingFile);
    app.add_option("--backend", backend, "Model backend")->check(CLI::IsMember({"toy", "pretrained"}));
    app.add_option("--seed", seed, "Run seed");
    app.add_flag("--trace", trace, "Write per-step sampler traces");
    app.add_option("--output-dir", output_dir, "Directory receiving run directories");
    app.add_option("--workers", workers, "Rows processed in parallel")->check(CLI::PositiveNumber);
    app.add_option("--set", set, "Extra setting, key=value (repeatable)");
  }

  PipelineConfig resolve(const Settings& extra = {}) const {
    const Settings file = config_path.empty() ? Settings{} : read_settings_file(config_path);
    Settings cli;
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
      cli.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!backend.empty()) cli.emplace_back("backend", backend);
    if (seed) cli.emplace_back("seed", std::to_string(*seed));
    if (trace) cli.emplace_back("trace", "true");
    if (!output_dir.empty()) cli.emplace_back("output_dir", output_dir);
    if (workers) cli.emplace_back("workers", std::to_string(*workers));
    cli.insert(cli.end(), extra.begin(), extra.end());
    return resolve_config(file, cli);
  }
};

// Either a manifest or a single image with its caption.
struct Inputs {
  std::string manifest;
  std::string image;
  std::string caption;
  std::string view = std::string(kAerialView);
  std::string id;

  void add_to(CLI::App& app) {
    auto* m = app.add_option("--manifest", manifest, "JSON-lines manifest")->check(CLI::ExistingFile);
    auto* i = app.add_option("--input", image, "Single input image")->check(CLI::ExistingFile);
    auto* c = app.add_option("--caption", caption, "Caption of --input");
    app.add_option("--view", view, "View label of --input");
    app.add_option("--id", id, "Row id of --input (default: file stem)");
    m->excludes(i);
    i->needs(c);
    c->needs(i);
  }

  std::vector<ManifestRow> rows() const {
    if (!manifest.empty()) return load_manifest(manifest);
    if (image.empty()) throw InvalidInput("give --manifest or --input with --caption");
    ManifestRow row;
    row.id = id.empty() ? std::filesystem::path(image).stem().string() : id;
    row.image_path = image;
    row.caption = caption;
    row.view_label = view;
    if (row.caption.empty()) throw InvalidInput("--caption is empty");
    return {row};
  }
};

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return "DivergenceError";
  if (dynamic_cast<const GuidanceFailure*>(&e)) return "GuidanceFailure";
  if (dynamic_cast<const BackendUnavailable*>(&e)) return "BackendUnavailable";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const UndefinedSimilarity*>(&e)) return "UndefinedSimilarity";
  if (dynamic_cast<const UnsupportedGradient*>(&e)) return "UnsupportedGradient";
  if (dynamic_cast<const ScheduleError*>(&e)) return "ScheduleError";
  if (dynamic_cast<const DegenerateGeometry*>(&e)) return "DegenerateGeometry";
  if (dynamic_cast<const ShapeMismatch*>(&e)) return "ShapeMismatch";
  if (dynamic_cast<const InvalidInput*>(&e)) return "InvalidInput";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

nlohmann::json summary(const RunRecord& r) {
  nlohmann::json j = {{"run_id", r.run_id},
                      {"run_dir", r.run_dir},
                      {"status", r.status},
                      {"arm", std::string(to_string(r.arm))}};
  if (r.selected_index) j["selected_index"] = *r.selected_index;
  return j;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aerial view synthesis from a single ground-level image", "birdseye"};
  app.require_subcommand(1);

  auto* ipm = app.add_subcommand("ipm", "Inverse perspective mapping of one image");
  std::string ipm_in, ipm_out, ipm_fill = "white";
  double ipm_strength = IPMConfig{}.strength;
  ipm->add_option("--input", ipm_in, "Input PNG")->required()->check(CLI::ExistingFile);
  ipm->add_option("--output", ipm_out, "Output PNG")->required();
  ipm->add_option("--strength", ipm_strength, "Top-corner displacement (fraction of width)");
  ipm->add_option("--fill", ipm_fill, "Fill outside the source")->check(CLI::IsMember({"white", "edge"}));

  Common common;
  Inputs inputs;
  auto* finetune = app.add_subcommand("finetune", "Two-stage finetuning only");
  common.add_to(*finetune);
  inputs.add_to(*finetune);

  auto* generate = app.add_subcommand("generate", "Sample, select and score from finetune runs");
  std::vector<std::string> from_runs;
  common.add_to(*generate);
  generate->add_option("--from", from_runs, "Finetune run directory (repeatable)")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* run_cmd = app.add_subcommand("run", "Full pipeline");
  common.add_to(*run_cmd);
  inputs.add_to(*run_cmd);

  auto* ablate = app.add_subcommand("ablate", "Full pipeline under ablation arms");
  std::vector<std::string> arms;
  common.add_to(*ablate);
  inputs.add_to(*ablate);
  ablate->add_option("--arm", arms, "Arm (repeatable; default: all)")
      ->check(CLI::IsMember({"full", "no_ipm", "no_guidance", "rotation_augment"}));

  auto* evaluate = app.add_subcommand("evaluate", "Score generated images against a manifest");
  std::string eval_manifest, eval_dir, eval_output, eval_backend = "toy";
  unsigned eval_workers = 1;
  evaluate->add_option("--manifest", eval_manifest, "JSON-lines manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--generated-dir", eval_dir, "Directory of <id>.png files")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--output", eval_output, "CSV path (default: stdout)");
  evaluate->add_option("--backend", eval_backend, "Embedding providers")
      ->check(CLI::IsMember({"toy", "pretrained"}));
  evaluate->add_option("--workers", eval_workers, "Scoring threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (ipm->parsed()) {
      IPMConfig cfg;
      cfg.strength = ipm_strength;
      cfg.fill = ipm_fill == "white" ? FillMode::kWhite : FillMode::kEdgeReplicate;
      cfg.validate();
      write_png(ipm_out, compute_ipm(read_png(ipm_in), cfg));
      out << nlohmann::json{{"output", ipm_out}}.dump() << "\n";
    } else if (finetune->parsed() || run_cmd->parsed()) {
      const auto config = common.resolve();
      const auto rows = inputs.rows();
      const auto stop = finetune->parsed() ? StopAfter::kFinetune : StopAfter::kFull;
      for (const auto& r : run_manifest(rows, config, stop)) out << summary(r).dump() << "\n";
    } else if (ablate->parsed()) {
      if (arms.empty()) {
        for (AblationArm a : kAllArms) arms.emplace_back(to_string(a));
      }
      const auto rows = inputs.rows();
      for (const auto& arm : arms) {
        const auto config = common.resolve({{"arm", arm}});
        for (const auto& r : run_manifest(rows, config)) out << summary(r).dump() << "\n";
      }
    } else if (generate->parsed()) {
      const auto config = common.resolve();
      auto ctx = make_context(config.backend);
      for (const auto& dir : from_runs) {
        out << summary(generate_from_run(dir, config, ctx)).dump() << "\n";
      }
    } else if (evaluate->parsed()) {
      const auto rows = load_manifest(eval_manifest);
      const ProviderSet providers = make_context(parse_backend_kind(eval_backend)).providers;
      const std::string csv = evaluate_dataset(rows, eval_dir, providers, eval_workers).to_csv();
      if (eval_output.empty()) {
        out << csv;
      } else {
        std::ofstream f(eval_output, std::ios::binary);
        f << csv;
        if (!f) throw IoError("cannot write " + eval_output);
      }
    }
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", {{"type", error_type(e)}, {"message", e.what()}}}}.dump()
        << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace birdseye::cli
