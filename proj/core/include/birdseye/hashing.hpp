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
#include <span>
#include <string>
#include <string_view>

namespace birdseye {

/// Lower-case hex SHA-1 digest.
std::string sha1_hex(std::span<const std::uint8_t> bytes);
std::string sha1_hex(std::string_view text);

/// Git object id of a blob with this content: sha1("blob <len>\0" + content).
std::string git_blob_hash(std::span<const std::uint8_t> bytes);
/// git_blob_hash of a file's bytes. Throws IoError.
std::string git_blob_hash_file(const std::string& path);

}  // namespace birdseye
