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

// Single-person clips and the pseudo two-person augmentation built from them.
//
// Clips carry geometry and embeddings only, no pixels. A clip is cropped to
// a 480x416 window around its face, and pairs of cropped clips are placed
// side by side into a 480x832 two-identity sample.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "afca_lab/geometry.hpp"
#include "afca_lab/rng.hpp"
#include "afca_lab/tensor.hpp"
#include "json.hpp"

namespace afca_lab {

inline constexpr int kCropHeight = 480;
inline constexpr int kCropWidth = 416;

// One identity inside a clip. Audio has one embedding row per video frame.
struct ClipStream {
  std::string identity_id;
  Matrix<float> audio;  // (frame_count, d_af)
  FaceTrack face_track;
};

struct ClipSample {
  std::string clip_id;
  FrameDims frame_dims;
  int frame_count = 0;
  double fps = 24.0;
  std::string text;
  std::vector<ClipStream> identity_streams;
};

// Throws ValidationError on an empty stream list, audio or track length not
// matching frame_count, track dims not matching the clip, or duplicate ids.
void validate(const ClipSample& clip);

// Integer window [x0, x1) x [y0, y1) in source pixels.
struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(const CropWindow& o) const {
    return x0 <= o.x0 && y0 <= o.y0 && o.x1 <= x1 && o.y1 <= y1;
  }
  bool operator==(const CropWindow&) const = default;
};

// 480 tall, 416 wide, centered on (cx, cy) and shifted back inside the
// frame. Throws ValidationError for frames smaller than the window or a
// center outside the frame.
CropWindow face_centered_min_crop(FrameDims frame, double cx, double cy);

// Scales the window by a factor drawn uniformly from [1, f_max], where f_max
// is the largest factor that still fits the frame, keeping the 480:416
// shape. The result is centered on the input window where possible and
// always contains it.
CropWindow random_enlarge(const CropWindow& window, FrameDims frame, Rng& rng);

// Crops the clip to the window and resamples it to 480x416. Face boxes are
// mapped into the new frame and clipped to it.
ClipSample crop_clip(const ClipSample& clip, const CropWindow& window);

// Minimal face-centered crop around the first stream's global face box,
// then random enlargement.
ClipSample crop_for_training(const ClipSample& clip, Rng& rng);

std::span<const std::string> dual_speaker_prompts();

// Left/right composition of two cropped single-identity clips. Both are
// trimmed to the shorter frame count; b's boxes move right by 416. The text
// becomes one of the dual-speaker prompts, picked from the pair's clip ids
// so that (a, b) and (b, a) agree. A clashing identity id on the right gets
// a "#r" suffix.
ClipSample hconcat_pair(const ClipSample& a, const ClipSample& b);

enum class BatchMode { single, paired };
const char* to_string(BatchMode mode);

struct BatchSelection {
  BatchMode mode = BatchMode::single;
  std::vector<ClipSample> samples;
  int input_samples = 0;     // count before pairing
  int output_samples = 0;    // count after pairing
  int identity_streams = 0;  // summed over output samples
  std::vector<std::string> warnings;
};

// Fair coin between the batch as-is and next-index pairs (0,1), (2,3), ...
// Only the coin consumes rng. An odd batch in paired mode loses its last
// sample and records a warning.
BatchSelection select_batch_mode(std::span<const ClipSample> batch, Rng& rng);

// Manifest items:
//   {"clip_id", "frame_dims": [H, W], "frame_count", "fps", "text",
//    "frames": path, "audio_embeddings": path, "audio_dim": d,
//    "face_track": path}
// Audio blobs are little-endian float32, row-major. Relative paths resolve
// against the manifest directory. "frames" is recorded but not decoded.
std::vector<ClipSample> load_clip_manifest(const std::filesystem::path& path);
ClipSample clip_from_manifest_item(const nlohmann::json& item, const std::filesystem::path& base);

}  // namespace afca_lab
