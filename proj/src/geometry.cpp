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

#include "afca_lab/geometry.hpp"

#include "afca_lab/errors.hpp"

namespace afca_lab {

bool is_valid(const BBox& box, FrameDims dims) {
  return 0 <= box.x0 && box.x0 < box.x1 && box.x1 <= dims.width && 0 <= box.y0 &&
         box.y0 < box.y1 && box.y1 <= dims.height;
}

void require_valid(const BBox& box, FrameDims dims, const std::string& context) {
  if (!is_valid(box, dims)) {
    throw ValidationError(context + ": box (" + std::to_string(box.x0) + "," +
                          std::to_string(box.y0) + "," + std::to_string(box.x1) + "," +
                          std::to_string(box.y1) + ") is not inside " +
                          std::to_string(dims.height) + "x" + std::to_string(dims.width));
  }
}

void validate(const FaceTrack& track) {
  if (track.frame_dims.height < 1 || track.frame_dims.width < 1) {
    throw ValidationError("face track '" + track.identity_id + "' has empty frame dims");
  }
  if (track.boxes.empty()) {
    throw ValidationError("face track '" + track.identity_id + "' has no boxes");
  }
  for (std::size_t i = 0; i < track.boxes.size(); ++i) {
    require_valid(track.boxes[i], track.frame_dims,
                  "face track '" + track.identity_id + "' frame " + std::to_string(i));
  }
}

FaceTrack face_track_from_json(const nlohmann::json& j) {
  FaceTrack t;
  t.identity_id = j.at("identity_id").get<std::string>();
  const auto dims = j.at("frame_dims").get<std::vector<int>>();
  if (dims.size() != 2) throw ValidationError("frame_dims must be [H, W]");
  t.frame_dims = {dims[0], dims[1]};
  for (const auto& b : j.at("boxes")) {
    const auto v = b.get<std::vector<int>>();
    if (v.size() != 4) throw ValidationError("box must be [x0, y0, x1, y1]");
    t.boxes.push_back({v[0], v[1], v[2], v[3]});
  }
  validate(t);
  return t;
}

nlohmann::json to_json(const FaceTrack& track) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const BBox& b : track.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  return {{"identity_id", track.identity_id},
          {"frame_dims", {track.frame_dims.height, track.frame_dims.width}},
          {"boxes", std::move(boxes)}};
}

}  // namespace afca_lab
