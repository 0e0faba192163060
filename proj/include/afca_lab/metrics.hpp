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

// Eye-landmark motion metrics for conversational video.
//
// Motion is the mean per-frame, per-keypoint Euclidean displacement in
// pixels on a 256x256 face-aligned canvas. Interactivity averages Motion
// over each speaker's listening intervals, weighted by interval length in
// frames. Sync-C* averages externally supplied lip-sync confidences over
// each speaker's speaking intervals the same way.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace afca_lab::metrics {

inline constexpr double kDefaultJumpPx = 10.0;
inline constexpr int kCanvasSize = 256;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

using Frame = std::vector<Point>;

struct LandmarkSequence {
  double fps = 24.0;
  std::vector<Frame> frames;  // [frame][keypoint]

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_keypoints() const { return frames.empty() ? 0 : static_cast<int>(frames.front().size()); }
};

// Checks a rectangular, finite point array.
void validate(const LandmarkSequence& seq);

// Mean over keypoints of the Euclidean distance between two frames.
double mean_displacement(const Frame& a, const Frame& b);

// Freezes the sequence at the last accepted frame while the incoming frame
// is more than jump_px (mean displacement) away from it.
LandmarkSequence anomaly_clamp(const LandmarkSequence& seq, double jump_px = kDefaultJumpPx);

// Needs at least two frames.
double motion_score(const LandmarkSequence& seq);

// mean_displacement(frame j, frame j+1) for every j.
std::vector<double> motion_series(const LandmarkSequence& seq);

// Keeps only the listed keypoint indices, in order.
LandmarkSequence select_keypoints(const LandmarkSequence& seq, std::span<const int> indices);

// Half-open frame interval [start, end).
struct Interval {
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  bool overlaps(const Interval& o) const { return start < o.end && o.start < end; }
};

LandmarkSequence slice(const LandmarkSequence& seq, Interval iv);

struct SpeakerSegments {
  int id = 0;
  std::vector<Interval> speaking;
  std::vector<Interval> listening;
  std::optional<double> sync_c;  // confidence over this speaker's speaking intervals
};

// Two-speaker layout: speaker 0 speaks for L1 and listens for L2, speaker 1
// listens for L3 and speaks for L4. More speakers or intervals generalize
// by length weighting.
struct SegmentAnnotation {
  std::vector<SpeakerSegments> speakers;
};

// Intervals inside [0, num_frames), non-empty, and a speaker's listening
// intervals disjoint from its own speaking intervals.
void validate(const SegmentAnnotation& ann, int num_frames);

// (L2*m2 + L3*m3) / (L2 + L3). Throws when L2 + L3 == 0.
double interactivity(double l2, double motion_l2, double l3, double motion_l3);

// Length-weighted mean of motion over every listening interval; seqs[k]
// belongs to ann.speakers[k]. Each sequence is anomaly-clamped first.
double interactivity(std::span<const LandmarkSequence> seqs, const SegmentAnnotation& ann,
                     double jump_px = kDefaultJumpPx);

struct SegmentSyncScores {
  double sync_l1 = 0.0;
  double sync_l4 = 0.0;
};

// (L1*s1 + L4*s4) / (L1 + L4). Throws when L1 + L4 == 0.
double sync_c_star(const SegmentSyncScores& scores, double l1, double l4);

// Uses the total speaking length of speakers 0 and 1 as L1 and L4.
double sync_c_star(const SegmentSyncScores& scores, const SegmentAnnotation& ann);

// Length-weighted over all speakers carrying a sync_c value.
double sync_c_star(const SegmentAnnotation& ann);

// JSON forms: landmarks {"fps", "canvas": [256,256], "frames": [[[x,y],...],...]},
// annotation {"speakers": [{"id", "speaking": [[s,e],...], "listening": [...],
// "sync_c"?}, ...]}.
LandmarkSequence landmarks_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LandmarkSequence& seq);
SegmentAnnotation annotation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SegmentAnnotation& ann);

struct EvalOptions {
  double jump_px = kDefaultJumpPx;
  // Empty: the 12 eye points (36..47) of a 68-point layout, or every point
  // for any other layout.
  std::vector<int> eye_indices;
  bool emit_motion_series = false;
};

std::vector<int> default_eye_indices(int num_keypoints);

struct ClipResult {
  std::string clip_id;
  double interactivity = 0.0;
  std::optional<double> sync_c_star;
  std::vector<double> motion_per_speaker;  // whole-clip, clamped
  std::vector<std::vector<double>> motion_series;  // per speaker, when requested
};

struct SkippedClip {
  std::string clip_id;
  std::string reason;
};

struct CorpusReport {
  std::vector<ClipResult> clips;  // sorted by clip_id
  std::vector<SkippedClip> skipped;
  std::optional<double> mean_interactivity;
  std::optional<double> mean_sync_c_star;
};

// Scans dir for <clip>.annotation.json and <clip>.spk<id>.landmarks.json.
// Clips with missing or unreadable pieces land in skipped.
CorpusReport corpus_report(const std::filesystem::path& dir, const EvalOptions& options);

nlohmann::json to_json(const CorpusReport& report);
std::string to_csv(const CorpusReport& report);
std::string motion_series_csv(const CorpusReport& report);

}  // namespace afca_lab::metrics
