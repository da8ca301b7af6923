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

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "birdseye/backend.hpp"
#include "birdseye/metrics.hpp"

namespace birdseye {

/// Environment variable holding the runtime command line.
inline constexpr const char* kRuntimeEnv = "BIRDSEYE_RUNTIME";
/// Environment variable holding the pretrained weights location.
inline constexpr const char* kWeightsEnv = "BIRDSEYE_WEIGHTS";

struct RuntimeConfig {
  /// Program and arguments; the program is looked up on PATH.
  std::vector<std::string> command;
  /// Passed to the runtime in the hello request.
  std::string weights;
  int rank = 4;

  /// From BIRDSEYE_RUNTIME (split on whitespace) and BIRDSEYE_WEIGHTS.
  /// Throws BackendUnavailable when either is unset or empty.
  static RuntimeConfig from_environment();
};

/// A child process speaking one JSON object per line on stdin/stdout. Each
/// request carries an "op"; each reply has "ok" and either results or
/// "error". Arrays travel as base64 little-endian float64. Requests are
/// serialized, so one process may be shared between threads.
class RuntimeProcess {
 public:
  explicit RuntimeProcess(const std::vector<std::string>& command);
  ~RuntimeProcess();
  RuntimeProcess(const RuntimeProcess&) = delete;
  RuntimeProcess& operator=(const RuntimeProcess&) = delete;

  /// Throws BackendUnavailable if the process is gone and Error carrying the
  /// runtime's message if it reports a failure.
  nlohmann::json request(const nlohmann::json& message);

 private:
  std::string read_line();

  std::mutex mutex_;
  int fd_ = -1;
  int pid_ = -1;
  std::string buffer_;
};

std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& b64);

/// Latent diffusion model hosted by an external runtime process.
class RuntimeBridgeBackend final : public DenoiserBackend {
 public:
  explicit RuntimeBridgeBackend(const RuntimeConfig& config);
  RuntimeBridgeBackend(std::shared_ptr<RuntimeProcess> process, const RuntimeConfig& config);

  std::string name() const override { return name_; }
  LatentShape latent_shape() const override { return latent_shape_; }
  int image_size() const override { return image_size_; }
  const NoiseSchedule& schedule() const override { return schedule_; }

  TextEmbedding encode_text(std::string_view text) const override;
  LatentTensor encode_image(const ImageBuffer& img) const override;
  ImageBuffer decode_latents(const LatentTensor& z) const override;
  LatentTensor predict_noise(const LatentTensor& x_t, int t,
                             const TextEmbedding& e) const override;
  DenoiseGradients denoising_gradients(const LatentTensor& x_t, int t,
                                       const TextEmbedding& e, const LatentTensor& eps,
                                       GradientRequest request) const override;

  AdapterCheckpoint adapter_checkpoint() const override;
  void load_adapter(const AdapterCheckpoint& ckpt) override;
  void reset_adapter() override;
  std::string base_fingerprint() const override { return fingerprint_; }

  const std::shared_ptr<RuntimeProcess>& process() const { return process_; }

 private:
  std::shared_ptr<RuntimeProcess> process_;
  std::string name_;
  LatentShape latent_shape_;
  int image_size_ = 0;
  int tokens_ = 0;
  int embed_dim_ = 0;
  int rank_ = 0;
  NoiseSchedule schedule_;
  std::string fingerprint_;
  AdapterCheckpoint adapter_;
};

/// Embedding provider served by the runtime under a role name
/// ("clip", "dino" or "sscd").
class RuntimeEmbeddingProvider final : public EmbeddingProvider {
 public:
  RuntimeEmbeddingProvider(std::shared_ptr<RuntimeProcess> process, std::string role);

  std::string provider_id() const override { return id_; }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed_image(const ImageBuffer& img) const override;
  std::vector<double> embed_text(std::string_view text) const override;

 private:
  std::shared_ptr<RuntimeProcess> process_;
  std::string role_;
  std::string id_;
  std::size_t dim_ = 0;
};

ProviderSet runtime_providers(const std::shared_ptr<RuntimeProcess>& process);

}  // namespace birdseye
