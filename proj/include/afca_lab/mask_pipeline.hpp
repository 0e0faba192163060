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

// Face boxes to token gates.
//
// A face track is reduced to one video-global box, optionally dilated, and
// then rasterized onto the patch grid. A token is active when any pixel of
// its patch falls inside the box. The same spatial pattern is repeated for
// every latent frame.

#pragma once

#include <vector>

#include "afca_lab/geometry.hpp"
#include "afca_lab/tensor.hpp"

namespace afca_lab {

struct PixelMask {
  BBox bbox;
  FrameDims frame_dims;
};

// Multiplicative gate over flattened video tokens (grid order).
struct TokenMask {
  std::vector<double> values;

  static TokenMask ones(int n) { return {std::vector<double>(n, 1.0)}; }
  static TokenMask zeros(int n) { return {std::vector<double>(n, 0.0)}; }
  int size() const { return static_cast<int>(values.size()); }
  bool operator==(const TokenMask&) const = default;
};

struct PatchSize {
  int height = 1;
  int width = 1;
};

// Coordinate-wise union of every per-frame box.
PixelMask global_face_bbox(const FaceTrack& track);

// Grows every side by margin_px, clamped to the frame.
PixelMask dilate_bbox(const PixelMask& mask, int margin_px);

// Patch grid implied by a frame size. With pad_to_patch, a partial trailing
// patch row/column is kept and its padding counts as outside the box;
// otherwise the frame must divide evenly.
GridShape token_grid_for(FrameDims dims, int latent_frames, PatchSize patch,
                         bool pad_to_patch = false);

TokenMask token_mask_from_bbox(const PixelMask& mask, int latent_frames, PatchSize patch,
                               bool pad_to_patch = false);

}  // namespace afca_lab
