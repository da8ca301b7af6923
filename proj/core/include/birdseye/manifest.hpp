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

#include <string>
#include <vector>

namespace birdseye {

struct ManifestRow {
  std::string id;
  /// Resolved against the manifest's directory when relative.
  std::string image_path;
  std::string caption;
  std::string view_label = "aerial view";

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// Reads a JSON-lines manifest: one object per line with "id", "image_path",
/// "caption" and optionally "view_label"; blank lines are skipped. Throws
/// InvalidInput naming the line for malformed rows or the id for duplicates,
/// and IoError for a missing manifest or image file.
std::vector<ManifestRow> load_manifest(const std::string& path);

}  // namespace birdseye
