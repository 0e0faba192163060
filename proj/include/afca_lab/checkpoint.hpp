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

// Weight blobs on disk: weights.bin holds little-endian float32 tensors back
// to back, row-major; manifest.json lists name, shape, dtype, offset and a
// CRC-32 per tensor plus free-form metadata.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "afca_lab/toy_dit.hpp"
#include "json.hpp"

namespace afca_lab {

struct NamedTensor {
  std::string name;
  Matrix<float> value;
};

// meta is stored under "meta" in the manifest.
void write_weight_blob(const std::filesystem::path& dir, std::span<const NamedTensor> tensors,
                       const nlohmann::json& meta);

// Throws IoError when a file is missing, malformed, or a checksum or size
// does not match.
std::vector<NamedTensor> read_weight_blob(const std::filesystem::path& dir,
                                          nlohmann::json* meta = nullptr);

std::uint32_t tensor_crc32(const Matrix<float>& m);

// Weights plus AdamW moments. meta gets "stage", "step" and "adam_updates".
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     nlohmann::json meta);

// Tensors must match the shapes implied by cfg, else IoError.
TrainState load_checkpoint(const std::filesystem::path& dir, const ToyDiTConfig& cfg,
                           nlohmann::json* meta = nullptr);

std::vector<NamedTensor> afca_tensors(const AfcaWeights<float>& w);
AfcaWeights<float> afca_from_tensors(std::span<const NamedTensor> tensors, const AfcaDims& dims);

}  // namespace afca_lab
