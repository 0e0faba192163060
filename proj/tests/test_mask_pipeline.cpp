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

#include <random>

#include "afca_lab/errors.hpp"
#include "afca_lab/mask_pipeline.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace afca_lab;

namespace {

FaceTrack track(std::vector<BBox> boxes, FrameDims dims = {100, 100}) {
  return {"spk", dims, std::move(boxes)};
}

}  // namespace

TEST_CASE("global_face_bbox takes the coordinate-wise union") {
  CHECK(global_face_bbox(track({{10, 10, 20, 20}})).bbox == BBox{10, 10, 20, 20});
  CHECK(global_face_bbox(track({{10, 10, 20, 20}, {15, 5, 30, 18}})).bbox == BBox{10, 5, 30, 20});
  CHECK(global_face_bbox(track({{0, 0, 4, 4}, {4, 4, 8, 8}})).bbox == BBox{0, 0, 8, 8});
  CHECK_THROWS_AS(global_face_bbox(track({})), ValidationError);
  CHECK_THROWS_AS(global_face_bbox(track({{10, 10, 200, 20}})), ValidationError);
}

TEST_CASE("dilate_bbox grows and clamps") {
  const FrameDims dims{100, 100};
  CHECK(dilate_bbox({{10, 10, 20, 20}, dims}, 5).bbox == BBox{5, 5, 25, 25});
  CHECK(dilate_bbox({{0, 0, 20, 20}, dims}, 5).bbox == BBox{0, 0, 25, 25});
  CHECK(dilate_bbox({{10, 10, 20, 20}, dims}, 0).bbox == BBox{10, 10, 20, 20});
  CHECK(dilate_bbox({{90, 90, 100, 100}, dims}, 50).bbox == BBox{40, 40, 100, 100});
  CHECK_THROWS_AS(dilate_bbox({{10, 10, 20, 20}, dims}, -1), ValidationError);
}

TEST_CASE("token_mask_from_bbox examples") {
  SUBCASE("full coverage") {
    const TokenMask m = token_mask_from_bbox({{0, 0, 8, 8}, {8, 8}}, 3, {4, 4});
    CHECK(m == TokenMask::ones(12));
  }
  SUBCASE("single corner pixel") {
    const TokenMask m = token_mask_from_bbox({{0, 0, 1, 1}, {8, 8}}, 2, {4, 4});
    CHECK(m.values == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0});
  }
  SUBCASE("box straddling all four patches") {
    const TokenMask m = token_mask_from_bbox({{3, 3, 5, 5}, {8, 8}}, 1, {4, 4});
    CHECK(m.values == std::vector<double>{1, 1, 1, 1});
  }
  SUBCASE("box ending on a patch boundary does not leak") {
    const TokenMask m = token_mask_from_bbox({{0, 0, 4, 4}, {8, 8}}, 1, {4, 4});
    CHECK(m.values == std::vector<double>{1, 0, 0, 0});
  }
}

TEST_CASE("non-divisible frames need padding") {
  const PixelMask mask{{0, 0, 9, 2}, {10, 10}};
  CHECK_THROWS_AS(token_mask_from_bbox(mask, 1, {4, 4}), ShapeError);
  const TokenMask padded = token_mask_from_bbox(mask, 1, {4, 4}, true);
  CHECK(padded.values == oracle::rasterized_token_mask(10, 10, 0, 0, 9, 2, 1, 4, 4));
  // Box touching the last real column lights the padded column.
  CHECK(padded.values == std::vector<double>{1, 1, 1, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("token mask equals the per-pixel oracle on random boxes") {
  std::mt19937_64 rng(17);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 300; ++trial) {
    const int ph = uni(1, 6);
    const int pw = uni(1, 6);
    const bool pad = trial % 2 == 1;
    const int h = pad ? uni(1, 40) : ph * uni(1, 8);
    const int w = pad ? uni(1, 40) : pw * uni(1, 8);
    const int x0 = uni(0, w - 1);
    const int x1 = uni(x0 + 1, w);
    const int y0 = uni(0, h - 1);
    const int y1 = uni(y0 + 1, h);
    const int t = uni(1, 3);
    const TokenMask m = token_mask_from_bbox({{x0, y0, x1, y1}, {h, w}}, t, {ph, pw}, pad);
    REQUIRE(m.values == oracle::rasterized_token_mask(h, w, x0, y0, x1, y1, t, ph, pw));
  }
}

TEST_CASE("dilation never deactivates a token") {
  std::mt19937_64 rng(5);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 200; ++trial) {
    const FrameDims dims{32, 48};
    const int x0 = uni(0, 47);
    const int y0 = uni(0, 31);
    const PixelMask m{{x0, y0, uni(x0 + 1, 48), uni(y0 + 1, 32)}, dims};
    const TokenMask base = token_mask_from_bbox(m, 2, {8, 8});
    const TokenMask grown = token_mask_from_bbox(dilate_bbox(m, uni(0, 10)), 2, {8, 8});
    for (int i = 0; i < base.size(); ++i) REQUIRE(grown.values[i] >= base.values[i]);
  }
}

TEST_CASE("global box mask dominates every per-frame mask and is time-invariant") {
  std::mt19937_64 rng(9);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 50; ++trial) {
    FaceTrack tr{"a", {64, 64}, {}};
    for (int f = 0; f < uni(1, 12); ++f) {
      const int x0 = uni(0, 60);
      const int y0 = uni(0, 60);
      tr.boxes.push_back({x0, y0, uni(x0 + 1, 64), uni(y0 + 1, 64)});
    }
    const PixelMask global = global_face_bbox(tr);
    const TokenMask gm = token_mask_from_bbox(global, 3, {16, 16});
    for (const BBox& b : tr.boxes) {
      CHECK(global.bbox.contains(b));
      const TokenMask fm = token_mask_from_bbox({b, tr.frame_dims}, 3, {16, 16});
      for (int i = 0; i < gm.size(); ++i) REQUIRE(gm.values[i] >= fm.values[i]);
    }
    for (int i = 0; i < 16; ++i) {
      CHECK(gm.values[i] == gm.values[16 + i]);
      CHECK(gm.values[i] == gm.values[32 + i]);
    }
  }
}
