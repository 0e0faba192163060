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

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "afca_lab/tensor.hpp"

namespace afca_lab {

using Rng = std::mt19937_64;

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t content_hash(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t content_hash(std::span<const float> values, std::uint64_t basis = 0xcbf29ce484222325ULL);

// All randomness descends from one root seed; every consumer asks for its
// own stream by name so adding a consumer never shifts another's draws.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);
Rng make_rng(std::uint64_t root, std::string_view purpose);

template <typename T>
Matrix<T> random_normal(Rng& rng, long rows, long cols, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

}  // namespace afca_lab
