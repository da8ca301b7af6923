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

#include "birdseye/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "birdseye/errors.hpp"

namespace birdseye {

namespace fs = std::filesystem;

std::vector<ManifestRow> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestRow> rows;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidInput(where + "invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw InvalidInput(where + "expected a JSON object");
    auto text_field = [&](const char* key, bool required) -> std::string {
      if (!j.contains(key)) {
        if (required) throw InvalidInput(where + "missing \"" + key + "\"");
        return {};
      }
      if (!j[key].is_string()) throw InvalidInput(where + "\"" + key + "\" must be a string");
      return j[key].get<std::string>();
    };
    ManifestRow row;
    row.id = text_field("id", true);
    const std::string image = text_field("image_path", true);
    row.caption = text_field("caption", true);
    if (j.contains("view_label")) row.view_label = text_field("view_label", true);
    if (row.id.empty()) throw InvalidInput(where + "empty id");
    if (row.caption.empty()) throw InvalidInput(where + "empty caption for id '" + row.id + "'");
    if (row.view_label.empty()) throw InvalidInput(where + "empty view_label");
    if (!ids.insert(row.id).second) {
      throw InvalidInput(where + "duplicate id '" + row.id + "'");
    }
    fs::path image_path(image);
    if (image_path.is_relative()) image_path = base / image_path;
    if (!fs::is_regular_file(image_path)) {
      throw IoError(where + "image for id '" + row.id + "' not found: " + image_path.string());
    }
    row.image_path = image_path.lexically_normal().string();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace birdseye
