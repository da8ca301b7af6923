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

#include "birdseye/runtime_bridge.hpp"

#include <openssl/evp.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>

namespace birdseye {

static_assert(std::endian::native == std::endian::little,
              "runtime wire format assumes a little-endian host");

RuntimeConfig RuntimeConfig::from_environment() {
  const char* cmd = std::getenv(kRuntimeEnv);
  const char* weights = std::getenv(kWeightsEnv);
  if (!weights || !*weights) {
    throw BackendUnavailable(std::string(kWeightsEnv) + " is not set; pretrained backend unavailable");
  }
  if (!cmd || !*cmd) {
    throw BackendUnavailable(std::string(kRuntimeEnv) + " is not set; pretrained backend unavailable");
  }
  RuntimeConfig c;
  std::istringstream in(cmd);
  for (std::string part; in >> part;) c.command.push_back(part);
  c.weights = weights;
  return c;
}

std::string encode_f64(std::span<const double> values) {
  const auto* raw = reinterpret_cast<const unsigned char*>(values.data());
  const std::size_t n = values.size() * sizeof(double);
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw,
                                  static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::vector<double> decode_f64(const std::string& b64) {
  if (b64.size() % 4 != 0) throw InvalidInput("malformed base64 array");
  std::string raw(3 * b64.size() / 4, '\0');
  const int len = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                  reinterpret_cast<const unsigned char*>(b64.data()),
                                  static_cast<int>(b64.size()));
  if (len < 0) throw InvalidInput("malformed base64 array");
  std::size_t n = static_cast<std::size_t>(len);
  if (!b64.empty() && b64.back() == '=') --n;
  if (b64.size() > 1 && b64[b64.size() - 2] == '=') --n;
  if (n % sizeof(double) != 0) throw InvalidInput("base64 array is not a whole number of float64");
  std::vector<double> out(n / sizeof(double));
  std::memcpy(out.data(), raw.data(), n);
  return out;
}

namespace {

std::string encode_bytes(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::vector<std::uint8_t> decode_bytes(const std::string& b64, std::size_t expected) {
  std::vector<std::uint8_t> raw(3 * b64.size() / 4 + 3);
  const int len = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(b64.data()),
                                  static_cast<int>(b64.size()));
  if (len < 0 || static_cast<std::size_t>(len) < expected) {
    throw InvalidInput("malformed base64 image");
  }
  raw.resize(expected);
  return raw;
}

}  // namespace

RuntimeProcess::RuntimeProcess(const std::vector<std::string>& command) {
  if (command.empty()) throw BackendUnavailable("empty runtime command");
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw BackendUnavailable(std::string("socketpair failed: ") + std::strerror(errno));
  }
  std::vector<char*> argv;
  for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw BackendUnavailable(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(fds[1], STDIN_FILENO);
    dup2(fds[1], STDOUT_FILENO);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(fds[1]);
  fd_ = fds[0];
  pid_ = pid;
}

RuntimeProcess::~RuntimeProcess() {
  if (fd_ >= 0) {
    const std::string bye = "{\"op\":\"shutdown\"}\n";
    (void)send(fd_, bye.data(), bye.size(), MSG_NOSIGNAL);
    shutdown(fd_, SHUT_WR);
    close(fd_);
  }
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string RuntimeProcess::read_line() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[65536];
    const ssize_t n = recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BackendUnavailable("runtime process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

nlohmann::json RuntimeProcess::request(const nlohmann::json& message) {
  std::lock_guard lock(mutex_);
  const std::string line = message.dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BackendUnavailable("runtime process is not accepting requests");
    sent += static_cast<std::size_t>(n);
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(read_line());
  } catch (const nlohmann::json::parse_error& e) {
    throw BackendUnavailable(std::string("runtime sent malformed reply: ") + e.what());
  }
  if (!reply.value("ok", false)) {
    throw Error("runtime error in '" + message.value("op", std::string("?")) +
                "': " + reply.value("error", std::string("unspecified")));
  }
  return reply;
}

namespace {

nlohmann::json latent_json(const LatentTensor& z) {
  return {{"shape", {z.shape().channels, z.shape().height, z.shape().width}},
          {"data", encode_f64(z.values())}};
}

nlohmann::json embedding_json(const TextEmbedding& e) {
  return {{"shape", {e.tokens(), e.dim()}}, {"data", encode_f64(e.values())}};
}

nlohmann::json image_json(const ImageBuffer& img) {
  return {{"width", img.width()}, {"height", img.height()}, {"pixels", encode_bytes(img.data())}};
}

LatentTensor latent_from(const nlohmann::json& j, LatentShape shape) {
  return LatentTensor(shape, decode_f64(j.at("data").get<std::string>()));
}

ParameterSet params_from(const nlohmann::json& layers) {
  std::vector<ParameterTensor> tensors;
  for (const auto& l : layers) {
    tensors.push_back({l.at("name").get<std::string>(), l.at("shape").get<std::vector<int>>(),
                       decode_f64(l.at("data").get<std::string>())});
  }
  return ParameterSet(std::move(tensors));
}

nlohmann::json params_json(const ParameterSet& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& t : p.tensors()) {
    layers.push_back({{"name", t.name}, {"shape", t.shape}, {"data", encode_f64(t.values)}});
  }
  return layers;
}

}  // namespace

RuntimeBridgeBackend::RuntimeBridgeBackend(const RuntimeConfig& config)
    : RuntimeBridgeBackend(std::make_shared<RuntimeProcess>(config.command), config) {}

RuntimeBridgeBackend::RuntimeBridgeBackend(std::shared_ptr<RuntimeProcess> process,
                                           const RuntimeConfig& config)
    : process_(std::move(process)) {
  const auto hello =
      process_->request({{"op", "hello"}, {"weights", config.weights}, {"rank", config.rank}});
  name_ = hello.at("name").get<std::string>();
  const auto shape = hello.at("latent_shape").get<std::vector<int>>();
  if (shape.size() != 3) throw BackendUnavailable("runtime reported a bad latent shape");
  latent_shape_ = {shape[0], shape[1], shape[2]};
  image_size_ = hello.at("image_size").get<int>();
  tokens_ = hello.at("tokens").get<int>();
  embed_dim_ = hello.at("embed_dim").get<int>();
  schedule_ = NoiseSchedule(decode_f64(hello.at("alpha_bar").get<std::string>()),
                            hello.value("schedule", std::string("runtime")));
  fingerprint_ = hello.at("fingerprint").get<std::string>();
  rank_ = hello.at("rank").get<int>();
  adapter_ = {name_, rank_, params_from(process_->request({{"op", "get_adapter"}}).at("layers"))};
}

TextEmbedding RuntimeBridgeBackend::encode_text(std::string_view text) const {
  const auto r = process_->request({{"op", "encode_text"}, {"text", text}});
  return TextEmbedding(tokens_, embed_dim_, decode_f64(r.at("embedding").at("data").get<std::string>()));
}

LatentTensor RuntimeBridgeBackend::encode_image(const ImageBuffer& img) const {
  const auto r = process_->request({{"op", "encode_image"}, {"image", image_json(img)}});
  return latent_from(r.at("latent"), latent_shape_);
}

ImageBuffer RuntimeBridgeBackend::decode_latents(const LatentTensor& z) const {
  if (!(z.shape() == latent_shape_)) throw ShapeMismatch("latent shape " + to_string(z.shape()));
  const auto r = process_->request({{"op", "decode_latents"}, {"latent", latent_json(z)}});
  const auto& im = r.at("image");
  const int w = im.at("width").get<int>();
  const int h = im.at("height").get<int>();
  return ImageBuffer(w, h,
                     decode_bytes(im.at("pixels").get<std::string>(),
                                  static_cast<std::size_t>(w) * h * ImageBuffer::kChannels));
}

LatentTensor RuntimeBridgeBackend::predict_noise(const LatentTensor& x_t, int t,
                                                 const TextEmbedding& e) const {
  if (!(x_t.shape() == latent_shape_)) throw ShapeMismatch("latent shape " + to_string(x_t.shape()));
  (void)schedule_.alpha_bar(t);
  const auto r = process_->request({{"op", "predict_noise"},
                                    {"latent", latent_json(x_t)},
                                    {"t", t},
                                    {"embedding", embedding_json(e)}});
  return latent_from(r.at("noise"), latent_shape_);
}

DenoiseGradients RuntimeBridgeBackend::denoising_gradients(const LatentTensor& x_t, int t,
                                                           const TextEmbedding& e,
                                                           const LatentTensor& eps,
                                                           GradientRequest request) const {
  if (!(x_t.shape() == latent_shape_) || !(eps.shape() == latent_shape_)) {
    throw ShapeMismatch("latent shape mismatch");
  }
  const auto r = process_->request({{"op", "gradients"},
                                    {"latent", latent_json(x_t)},
                                    {"t", t},
                                    {"embedding", embedding_json(e)},
                                    {"eps", latent_json(eps)},
                                    {"embedding_grad", request.embedding},
                                    {"adapter_grad", request.adapter}});
  DenoiseGradients g;
  g.loss = r.at("loss").get<double>();
  if (request.embedding) {
    g.d_embedding = TextEmbedding(tokens_, embed_dim_, decode_f64(r.at("d_embedding").at("data").get<std::string>()));
  }
  if (request.adapter) g.d_adapter = params_from(r.at("d_adapter"));
  return g;
}

AdapterCheckpoint RuntimeBridgeBackend::adapter_checkpoint() const { return adapter_; }

void RuntimeBridgeBackend::load_adapter(const AdapterCheckpoint& ckpt) {
  if (ckpt.backend != name_ || ckpt.rank != rank_ || !ckpt.params.same_layout(adapter_.params)) {
    throw InvalidInput("adapter checkpoint does not match runtime backend '" + name_ + "'");
  }
  process_->request({{"op", "set_adapter"}, {"layers", params_json(ckpt.params)}});
  adapter_ = ckpt;
}

void RuntimeBridgeBackend::reset_adapter() {
  process_->request({{"op", "reset_adapter"}});
  adapter_.params = params_from(process_->request({{"op", "get_adapter"}}).at("layers"));
}

RuntimeEmbeddingProvider::RuntimeEmbeddingProvider(std::shared_ptr<RuntimeProcess> process,
                                                   std::string role)
    : process_(std::move(process)), role_(std::move(role)) {
  const auto r = process_->request({{"op", "provider_info"}, {"role", role_}});
  id_ = r.at("provider_id").get<std::string>();
  dim_ = r.at("dim").get<std::size_t>();
}

std::vector<double> RuntimeEmbeddingProvider::embed_image(const ImageBuffer& img) const {
  const auto r =
      process_->request({{"op", "embed_image"}, {"role", role_}, {"image", image_json(img)}});
  return decode_f64(r.at("vector").get<std::string>());
}

std::vector<double> RuntimeEmbeddingProvider::embed_text(std::string_view text) const {
  const auto r = process_->request({{"op", "embed_text"}, {"role", role_}, {"text", text}});
  return decode_f64(r.at("vector").get<std::string>());
}

ProviderSet runtime_providers(const std::shared_ptr<RuntimeProcess>& process) {
  return {std::make_shared<RuntimeEmbeddingProvider>(process, "clip"),
          std::make_shared<RuntimeEmbeddingProvider>(process, "dino"),
          std::make_shared<RuntimeEmbeddingProvider>(process, "sscd")};
}

}  // namespace birdseye
