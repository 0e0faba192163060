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

#include "afca_lab/augmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "afca_lab/blob_io.hpp"
#include "afca_lab/errors.hpp"
#include "afca_lab/mask_pipeline.hpp"

namespace afca_lab {

namespace {

const std::array<std::string, 10> kDualSpeakerPrompts{
    "Two people are talking with each other face to face.",
    "A man and a woman are having a conversation.",
    "Two people take turns speaking in a relaxed conversation.",
    "Two friends are chatting and reacting to each other.",
    "Two speakers are sitting side by side and discussing something.",
    "Two people are having a lively discussion.",
    "One person speaks while the other listens attentively, then they switch.",
    "Two people are talking and nodding to each other.",
    "A pair of people are engaged in a friendly dialogue.",
    "Two colleagues are talking about their work.",
};

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(v, hi)); }

// Start offset of a span of length len centered at c, kept inside
// [lo_bound, hi_bound].
int place(double c, int len, int lo_bound, int hi_bound) {
  return clamp_int(static_cast<int>(std::lround(c - 0.5 * len)), lo_bound, hi_bound);
}

void require_single_cropped(const ClipSample& c, const char* side) {
  if (c.identity_streams.size() != 1) {
    throw ValidationError(std::string("hconcat_pair: ") + side + " clip '" + c.clip_id +
                          "' must hold exactly one identity");
  }
  if (c.frame_dims != FrameDims{kCropHeight, kCropWidth}) {
    throw ValidationError(std::string("hconcat_pair: ") + side + " clip '" + c.clip_id +
                          "' is not cropped to 480x416");
  }
}

ClipStream trimmed(const ClipStream& s, int frames) {
  ClipStream out = s;
  out.audio = s.audio.topRows(frames);
  out.face_track.boxes.resize(frames);
  return out;
}

}  // namespace

void validate(const ClipSample& clip) {
  const std::string who = "clip '" + clip.clip_id + "'";
  if (clip.frame_dims.height < 1 || clip.frame_dims.width < 1) {
    throw ValidationError(who + " has empty frame dims");
  }
  if (clip.frame_count < 1) throw ValidationError(who + " has no frames");
  if (!(clip.fps > 0.0) || !std::isfinite(clip.fps)) throw ValidationError(who + " has bad fps");
  if (clip.identity_streams.empty()) throw ValidationError(who + " has no identity streams");
  std::set<std::string> ids;
  for (const auto& s : clip.identity_streams) {
    if (!ids.insert(s.identity_id).second) {
      throw ValidationError(who + " repeats identity '" + s.identity_id + "'");
    }
    if (s.audio.rows() != clip.frame_count) {
      throw ValidationError(who + " identity '" + s.identity_id + "' has " +
                            std::to_string(s.audio.rows()) + " audio rows for " +
                            std::to_string(clip.frame_count) + " frames");
    }
    if (static_cast<int>(s.face_track.boxes.size()) != clip.frame_count) {
      throw ValidationError(who + " identity '" + s.identity_id +
                            "' face track length differs from frame count");
    }
    if (s.face_track.frame_dims != clip.frame_dims) {
      throw ValidationError(who + " identity '" + s.identity_id +
                            "' face track frame dims differ from the clip");
    }
    afca_lab::validate(s.face_track);
  }
}

CropWindow face_centered_min_crop(FrameDims frame, double cx, double cy) {
  if (frame.height < kCropHeight || frame.width < kCropWidth) {
    throw ValidationError("frame " + std::to_string(frame.height) + "x" +
                          std::to_string(frame.width) + " is smaller than the 480x416 crop");
  }
  if (!(cx >= 0.0 && cx <= frame.width && cy >= 0.0 && cy <= frame.height)) {
    throw ValidationError("face center lies outside the frame");
  }
  const int y0 = place(cy, kCropHeight, 0, frame.height - kCropHeight);
  const int x0 = place(cx, kCropWidth, 0, frame.width - kCropWidth);
  return {x0, y0, x0 + kCropWidth, y0 + kCropHeight};
}

CropWindow random_enlarge(const CropWindow& window, FrameDims frame, Rng& rng) {
  if (window.x0 < 0 || window.y0 < 0 || window.x1 > frame.width || window.y1 > frame.height ||
      window.width() < 1 || window.height() < 1) {
    throw ValidationError("crop window is not inside the frame");
  }
  const double f_max = std::min(static_cast<double>(frame.height) / window.height(),
                                static_cast<double>(frame.width) / window.width());
  if (f_max <= 1.0) return window;
  const double f = std::uniform_real_distribution<double>(1.0, f_max)(rng);
  const int h = clamp_int(static_cast<int>(std::floor(window.height() * f)), window.height(),
                          frame.height);
  const int w = clamp_int(
      static_cast<int>(std::lround(static_cast<double>(h) * kCropWidth / kCropHeight)),
      window.width(), frame.width);
  const double cy = 0.5 * (window.y0 + window.y1);
  const double cx = 0.5 * (window.x0 + window.x1);
  const int y0 = place(cy, h, std::max(0, window.y1 - h), std::min(window.y0, frame.height - h));
  const int x0 = place(cx, w, std::max(0, window.x1 - w), std::min(window.x0, frame.width - w));
  return {x0, y0, x0 + w, y0 + h};
}

ClipSample crop_clip(const ClipSample& clip, const CropWindow& window) {
  validate(clip);
  if (window.x0 < 0 || window.y0 < 0 || window.x1 > clip.frame_dims.width ||
      window.y1 > clip.frame_dims.height || window.width() < 1 || window.height() < 1) {
    throw ValidationError("crop window is not inside clip '" + clip.clip_id + "'");
  }
  const double sx = static_cast<double>(kCropWidth) / window.width();
  const double sy = static_cast<double>(kCropHeight) / window.height();
  ClipSample out = clip;
  out.frame_dims = {kCropHeight, kCropWidth};
  for (auto& s : out.identity_streams) {
    s.face_track.frame_dims = out.frame_dims;
    for (std::size_t i = 0; i < s.face_track.boxes.size(); ++i) {
      BBox& b = s.face_track.boxes[i];
      BBox m{clamp_int(static_cast<int>(std::floor((b.x0 - window.x0) * sx)), 0, kCropWidth),
             clamp_int(static_cast<int>(std::floor((b.y0 - window.y0) * sy)), 0, kCropHeight),
             clamp_int(static_cast<int>(std::ceil((b.x1 - window.x0) * sx)), 0, kCropWidth),
             clamp_int(static_cast<int>(std::ceil((b.y1 - window.y0) * sy)), 0, kCropHeight)};
      if (m.x0 >= m.x1 || m.y0 >= m.y1) {
        throw ValidationError("identity '" + s.identity_id + "' leaves the crop window at frame " +
                              std::to_string(i));
      }
      b = m;
    }
  }
  return out;
}

ClipSample crop_for_training(const ClipSample& clip, Rng& rng) {
  if (clip.identity_streams.size() != 1) {
    throw ValidationError("crop_for_training expects a single-identity clip");
  }
  validate(clip);
  const BBox g = global_face_bbox(clip.identity_streams.front().face_track).bbox;
  const CropWindow min_crop = face_centered_min_crop(clip.frame_dims, g.center_x(), g.center_y());
  return crop_clip(clip, random_enlarge(min_crop, clip.frame_dims, rng));
}

std::span<const std::string> dual_speaker_prompts() { return kDualSpeakerPrompts; }

ClipSample hconcat_pair(const ClipSample& a, const ClipSample& b) {
  validate(a);
  validate(b);
  require_single_cropped(a, "left");
  require_single_cropped(b, "right");
  if (std::abs(a.fps - b.fps) > 1e-9) {
    throw ValidationError("hconcat_pair: fps mismatch (" + std::to_string(a.fps) + " vs " +
                          std::to_string(b.fps) + ")");
  }
  const int frames = std::min(a.frame_count, b.frame_count);
  ClipSample out;
  out.clip_id = a.clip_id + "+" + b.clip_id;
  out.frame_dims = {kCropHeight, 2 * kCropWidth};
  out.frame_count = frames;
  out.fps = a.fps;
  const std::string& lo = std::min(a.clip_id, b.clip_id);
  const std::string& hi = std::max(a.clip_id, b.clip_id);
  out.text = kDualSpeakerPrompts[content_hash(lo + "\n" + hi) % kDualSpeakerPrompts.size()];

  ClipStream left = trimmed(a.identity_streams.front(), frames);
  ClipStream right = trimmed(b.identity_streams.front(), frames);
  left.face_track.frame_dims = out.frame_dims;
  right.face_track.frame_dims = out.frame_dims;
  for (BBox& box : right.face_track.boxes) {
    box.x0 += kCropWidth;
    box.x1 += kCropWidth;
  }
  if (right.identity_id == left.identity_id) {
    right.identity_id += "#r";
    right.face_track.identity_id = right.identity_id;
  }
  out.identity_streams = {std::move(left), std::move(right)};
  return out;
}

const char* to_string(BatchMode mode) { return mode == BatchMode::single ? "single" : "paired"; }

BatchSelection select_batch_mode(std::span<const ClipSample> batch, Rng& rng) {
  BatchSelection sel;
  sel.input_samples = static_cast<int>(batch.size());
  sel.mode = std::bernoulli_distribution(0.5)(rng) ? BatchMode::paired : BatchMode::single;
  if (sel.mode == BatchMode::single) {
    sel.samples.assign(batch.begin(), batch.end());
  } else {
    if (batch.size() % 2 != 0) {
      sel.warnings.push_back("odd batch of " + std::to_string(batch.size()) +
                             " in paired mode; dropped '" + batch.back().clip_id + "'");
    }
    for (std::size_t i = 0; i + 1 < batch.size(); i += 2) {
      sel.samples.push_back(hconcat_pair(batch[i], batch[i + 1]));
    }
  }
  sel.output_samples = static_cast<int>(sel.samples.size());
  for (const auto& s : sel.samples) sel.identity_streams += static_cast<int>(s.identity_streams.size());
  return sel;
}

ClipSample clip_from_manifest_item(const nlohmann::json& item, const std::filesystem::path& base) {
  static const std::set<std::string> kKeys{"clip_id", "frame_dims",       "frame_count",
                                           "fps",     "text",             "frames",
                                           "audio_embeddings", "audio_dim", "face_track"};
  if (!item.is_object()) throw ValidationError("manifest item is not an object");
  for (const auto& [k, _] : item.items()) {
    if (!kKeys.count(k)) throw ValidationError("manifest item has unknown key '" + k + "'");
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  try {
    ClipSample clip;
    clip.clip_id = item.at("clip_id").get<std::string>();
    const auto dims = item.at("frame_dims").get<std::vector<int>>();
    if (dims.size() != 2) throw ValidationError("frame_dims must be [H, W]");
    clip.frame_dims = {dims[0], dims[1]};
    clip.frame_count = item.at("frame_count").get<int>();
    clip.fps = item.value("fps", 24.0);
    clip.text = item.value("text", std::string());
    const int d = item.at("audio_dim").get<int>();
    if (d < 1) throw ValidationError("audio_dim must be positive");
    const auto audio = read_f32_le(resolve(item.at("audio_embeddings").get<std::string>()));
    if (audio.size() % static_cast<std::size_t>(d) != 0) {
      throw IoError("audio blob for '" + clip.clip_id + "' is not a whole number of rows");
    }
    std::ifstream track_in(resolve(item.at("face_track").get<std::string>()));
    if (!track_in) throw IoError("cannot open face track for '" + clip.clip_id + "'");
    ClipStream s;
    s.face_track = face_track_from_json(nlohmann::json::parse(track_in));
    s.identity_id = s.face_track.identity_id;
    s.audio = Eigen::Map<const Matrix<float>>(audio.data(), static_cast<long>(audio.size() / d), d);
    clip.identity_streams.push_back(std::move(s));
    validate(clip);
    return clip;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad manifest item: ") + e.what());
  }
}

std::vector<ClipSample> load_clip_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  const nlohmann::json& items = j.is_object() ? j.at("clips") : j;
  if (!items.is_array()) throw ValidationError("manifest must list clips");
  std::vector<ClipSample> clips;
  for (const auto& item : items) clips.push_back(clip_from_manifest_item(item, path.parent_path()));
  return clips;
}

}  // namespace afca_lab
