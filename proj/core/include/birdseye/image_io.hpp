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

#include "birdseye/domain.hpp"

namespace birdseye {

/// Reads any PNG and converts it to 8-bit RGB. Throws IoError.
ImageBuffer read_png(const std::string& path);
/// Writes 8-bit RGB without timestamps or text chunks, so equal images give
/// byte-identical files.
void write_png(const std::string& path, const ImageBuffer& img);

/// Bilinear resampling to the requested size.
ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);
/// Largest centred square crop, then resize to size x size.
ImageBuffer center_crop_resize(const ImageBuffer& img, int size);

}  // namespace birdseye
