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

#include <string>
#include <vector>

#include "json.hpp"

namespace afca_lab {

// Pixel frame size, height first.
struct FrameDims {
  int height = 0;
  int width = 0;
  bool operator==(const FrameDims&) const = default;
};

// Half-open pixel box [x0, x1) x [y0, y1); x is the column axis.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool contains(const BBox& o) const {
    return x0 <= o.x0 && y0 <= o.y0 && o.x1 <= x1 && o.y1 <= y1;
  }
  bool operator==(const BBox&) const = default;
};

bool is_valid(const BBox& box, FrameDims dims);
// Throws ValidationError naming the offending coordinates.
void require_valid(const BBox& box, FrameDims dims, const std::string& context);

// Per-frame detector boxes for one identity.
struct FaceTrack {
  std::string identity_id;
  FrameDims frame_dims;
  std::vector<BBox> boxes;
};

void validate(const FaceTrack& track);

// {"identity_id": str, "frame_dims": [H, W], "boxes": [[x0, y0, x1, y1], ...]}
FaceTrack face_track_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FaceTrack& track);

}  // namespace afca_lab
