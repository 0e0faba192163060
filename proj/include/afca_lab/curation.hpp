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

// Metadata-level filter cascade for two-person clips.
//
// Every rule sees precomputed detector/diarizer/SyncNet outputs and returns
// accept or reject with a reason. Structurally broken inputs raise
// ValidationError instead, which the audit records as its own verdict.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afca_lab/geometry.hpp"
#include "afca_lab/rng.hpp"
#include "json.hpp"

namespace afca_lab::curation {

// Rows are audio tracks, columns are faces.
using SyncMatrix = std::array<std::array<double, 2>, 2>;

struct CheckResult {
  bool accepted = true;
  std::string rule;
  std::string reason;

  static CheckResult accept() { return {}; }
  static CheckResult reject(std::string rule, std::string reason) {
    return {false, std::move(rule), std::move(reason)};
  }
};

// Accepts iff both diagonal entries strictly exceed both off-diagonal ones
// and both reach min_score.
CheckResult check_sync_matrix(const SyncMatrix& m, double min_score);

struct DiarizationSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<int> speakers;
};

// Sorted, non-overlapping, positive-length, inside [0, duration_s] when a
// duration is given.
void validate(const std::vector<DiarizationSegment>& segs,
              std::optional<double> duration_s = std::nullopt);

// Accepts iff each segment's active set is {0}, {1} or {0, 1}.
CheckResult check_speaker_states(const std::vector<DiarizationSegment>& segs);

// Accepts iff the left track's box center stays strictly left of the right
// track's in every frame.
CheckResult check_spatial_consistency(const FaceTrack& left, const FaceTrack& right);

// Fraction of frames with exactly two faces must reach quorum.
CheckResult check_face_count(const std::map<int, long>& histogram, double quorum);

CheckResult check_camera_motion(double mean_flow, double max_mean_flow);

inline constexpr double kClipLengthMean = 4.0;
inline constexpr double kClipLengthStd = 0.5;
inline constexpr double kClipLengthMin = 2.5;
inline constexpr double kClipLengthMax = 5.5;

// Normal(4.0, 0.5) restricted to [2.5, 5.5] s by rejection.
double draw_clip_length(Rng& rng);

struct ChunkPlan {
  std::size_t first_segment = 0;
  std::size_t segment_count = 0;
  double duration_s = 0.0;
};

// Greedy: a chunk takes the next segment, then keeps taking segments while
// the total stays within the chunk's target. A fresh target is drawn per
// chunk.
std::vector<ChunkPlan> plan_chunks(const std::vector<double>& durations,
                                   const std::function<double()>& next_target);

std::vector<ChunkPlan> sample_clip_lengths(const std::vector<double>& durations, Rng& rng);

struct ClipMetadata {
  std::string clip_id;
  double duration_s = 0.0;
  std::map<int, long> face_count_histogram;  // faces per frame -> frame count
  std::vector<FaceTrack> face_tracks;         // left, right
  double mean_flow = 0.0;
  SyncMatrix sync_matrix{};
  std::optional<double> sync_threshold;  // overrides the config threshold
  std::vector<DiarizationSegment> diarization;
  std::vector<double> segment_durations_s;
};

ClipMetadata metadata_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClipMetadata& m);

struct CurationConfig {
  double min_sync_score = 0.0;
  double face_count_quorum = 0.95;
  double max_mean_flow = std::numeric_limits<double>::infinity();
};

enum class Verdict { kAccept, kReject, kValidationError };

std::string_view to_string(Verdict v);

struct AuditRecord {
  std::string clip_id;
  Verdict verdict = Verdict::kAccept;
  std::vector<std::string> failed_rules;
  std::vector<std::string> reasons;
  std::vector<ChunkPlan> chunk_plan;
};

// Runs every rule; chunk planning draws from a stream derived from
// (root_seed, clip_id), so results do not depend on processing order.
AuditRecord curate_clip(const ClipMetadata& meta, const CurationConfig& config,
                        std::uint64_t root_seed);

// Parses one NDJSON line and curates it. Parse failures become
// validation-error records labelled by line number.
AuditRecord curate_line(std::string_view line, std::size_t line_number,
                        const CurationConfig& config, std::uint64_t root_seed);

struct CurationSummary {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t validation_errors = 0;
  std::map<std::string, std::size_t> rule_counts;

  double yield() const { return total == 0 ? 0.0 : static_cast<double>(accepted) / total; }
};

CurationSummary summarize(const std::vector<AuditRecord>& records);

nlohmann::json to_json(const AuditRecord& r);
nlohmann::json to_json(const CurationSummary& s);

}  // namespace afca_lab::curation
