// Copyright 2026 The afca-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Raw little-endian float32 blobs.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace afca_lab {

std::vector<float> read_f32_le(const std::filesystem::path& path);
std::vector<float> decode_f32_le(std::span<const unsigned char> bytes);
void append_f32_le(std::vector<unsigned char>& out, std::span<const float> values);
void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);
std::vector<unsigned char> read_bytes(const std::filesystem::path& path);

}  // namespace afca_lab
