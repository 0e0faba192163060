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

#include "afca_lab/mask_pipeline.hpp"

#include <algorithm>
#include <string>

#include "afca_lab/errors.hpp"

namespace afca_lab {

PixelMask global_face_bbox(const FaceTrack& track) {
  if (track.boxes.empty()) {
    throw ValidationError("face track '" + track.identity_id + "' is empty");
  }
  validate(track);
  BBox u = track.boxes.front();
  for (const BBox& b : track.boxes) {
    u.x0 = std::min(u.x0, b.x0);
    u.y0 = std::min(u.y0, b.y0);
    u.x1 = std::max(u.x1, b.x1);
    u.y1 = std::max(u.y1, b.y1);
  }
  return {u, track.frame_dims};
}

PixelMask dilate_bbox(const PixelMask& mask, int margin_px) {
  if (margin_px < 0) throw ValidationError("dilation margin must be >= 0");
  const BBox& b = mask.bbox;
  BBox out{std::max(0, b.x0 - margin_px), std::max(0, b.y0 - margin_px),
           std::min(mask.frame_dims.width, b.x1 + margin_px),
           std::min(mask.frame_dims.height, b.y1 + margin_px)};
  return {out, mask.frame_dims};
}

GridShape token_grid_for(FrameDims dims, int latent_frames, PatchSize patch,
                         bool pad_to_patch) {
  if (patch.height < 1 || patch.width < 1) throw ShapeError("patch size must be positive");
  if (dims.height < 1 || dims.width < 1) throw ShapeError("frame dims must be positive");
  const bool divisible = dims.height % patch.height == 0 && dims.width % patch.width == 0;
  if (!divisible && !pad_to_patch) {
    throw ShapeError("frame " + std::to_string(dims.height) + "x" +
                     std::to_string(dims.width) + " is not divisible by patch " +
                     std::to_string(patch.height) + "x" + std::to_string(patch.width));
  }
  GridShape g{latent_frames, (dims.height + patch.height - 1) / patch.height,
              (dims.width + patch.width - 1) / patch.width};
  validate(g);
  return g;
}

TokenMask token_mask_from_bbox(const PixelMask& mask, int latent_frames, PatchSize patch,
                               bool pad_to_patch) {
  require_valid(mask.bbox, mask.frame_dims, "token mask");
  const GridShape g = token_grid_for(mask.frame_dims, latent_frames, patch, pad_to_patch);
  const BBox& b = mask.bbox;
  // Patch rows overlapping [y0, y1): first = floor(y0/p), last = floor((y1-1)/p).
  const int r0 = b.y0 / patch.height;
  const int r1 = (b.y1 - 1) / patch.height;
  const int c0 = b.x0 / patch.width;
  const int c1 = (b.x1 - 1) / patch.width;
  TokenMask out = TokenMask::zeros(g.num_tokens());
  for (int t = 0; t < g.latent_frames; ++t) {
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) out.values[g.flat_index(t, r, c)] = 1.0;
    }
  }
  return out;
}

}  // namespace afca_lab
