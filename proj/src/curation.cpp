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

#include "afca_lab/curation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "afca_lab/errors.hpp"

namespace afca_lab::curation {

using nlohmann::json;

CheckResult check_sync_matrix(const SyncMatrix& m, double min_score) {
  for (const auto& row : m)
    for (double v : row)
      if (!std::isfinite(v)) throw ValidationError("sync matrix has a non-finite entry");
  const double diag_low = std::min(m[0][0], m[1][1]);
  const double off_high = std::max(m[0][1], m[1][0]);
  if (!(diag_low > off_high)) {
    std::ostringstream os;
    os << "diagonal minimum " << diag_low << " does not exceed off-diagonal maximum " << off_high;
    return CheckResult::reject("diagonal-dominance", os.str());
  }
  if (diag_low < min_score) {
    std::ostringstream os;
    os << "diagonal score " << diag_low << " below threshold " << min_score;
    return CheckResult::reject("sync-threshold", os.str());
  }
  return CheckResult::accept();
}

void validate(const std::vector<DiarizationSegment>& segs, std::optional<double> duration_s) {
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    if (!(s.start_s >= 0.0) || !(s.end_s > s.start_s)) {
      throw ValidationError("diarization segment " + std::to_string(i) + " is empty or negative");
    }
    if (duration_s && s.end_s > *duration_s + 1e-9) {
      throw ValidationError("diarization segment " + std::to_string(i) + " ends after the clip");
    }
    if (i > 0 && s.start_s < segs[i - 1].end_s) {
      throw ValidationError("diarization segments " + std::to_string(i - 1) + " and " +
                            std::to_string(i) + " overlap or are unsorted");
    }
  }
}

CheckResult check_speaker_states(const std::vector<DiarizationSegment>& segs) {
  validate(segs);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::vector<int> active = segs[i].speakers;
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    for (int id : active) {
      if (id != 0 && id != 1) {
        return CheckResult::reject("unknown-speaker", "segment " + std::to_string(i) +
                                                          " names speaker " + std::to_string(id));
      }
    }
    if (active.empty()) {
      return CheckResult::reject("speaker-state",
                                 "segment " + std::to_string(i) + " has no active speaker");
    }
  }
  return CheckResult::accept();
}

CheckResult check_spatial_consistency(const FaceTrack& left, const FaceTrack& right) {
  if (left.boxes.size() != right.boxes.size()) {
    throw ValidationError("face tracks differ in length: " + std::to_string(left.boxes.size()) +
                          " vs " + std::to_string(right.boxes.size()));
  }
  for (std::size_t j = 0; j < left.boxes.size(); ++j) {
    if (!(left.boxes[j].center_x() < right.boxes[j].center_x())) {
      return CheckResult::reject("identity-swap", "identity-swap at frame " + std::to_string(j));
    }
  }
  return CheckResult::accept();
}

CheckResult check_face_count(const std::map<int, long>& histogram, double quorum) {
  long total = 0;
  long two = 0;
  for (const auto& [faces, frames] : histogram) {
    if (faces < 0 || frames < 0) throw ValidationError("face-count histogram has negative entries");
    total += frames;
    if (faces == 2) two += frames;
  }
  if (total == 0) throw ValidationError("face-count histogram is empty");
  const double frac = static_cast<double>(two) / static_cast<double>(total);
  if (frac < quorum) {
    std::ostringstream os;
    os << "two faces in " << frac << " of frames, quorum " << quorum;
    return CheckResult::reject("face-count", os.str());
  }
  return CheckResult::accept();
}

CheckResult check_camera_motion(double mean_flow, double max_mean_flow) {
  if (!std::isfinite(mean_flow) || mean_flow < 0.0) {
    throw ValidationError("mean optical flow must be finite and non-negative");
  }
  if (mean_flow > max_mean_flow) {
    std::ostringstream os;
    os << "mean flow " << mean_flow << " exceeds " << max_mean_flow;
    return CheckResult::reject("excessive-motion", os.str());
  }
  return CheckResult::accept();
}

double draw_clip_length(Rng& rng) {
  std::normal_distribution<double> n(kClipLengthMean, kClipLengthStd);
  for (;;) {
    const double v = n(rng);
    if (v >= kClipLengthMin && v <= kClipLengthMax) return v;
  }
}

std::vector<ChunkPlan> plan_chunks(const std::vector<double>& durations,
                                   const std::function<double()>& next_target) {
  for (double d : durations) {
    if (!(d > 0.0)) throw ValidationError("segment durations must be positive");
  }
  std::vector<ChunkPlan> out;
  std::size_t i = 0;
  while (i < durations.size()) {
    const double target = next_target();
    ChunkPlan c{i, 1, durations[i]};
    ++i;
    while (i < durations.size() && c.duration_s + durations[i] <= target) {
      c.duration_s += durations[i];
      ++c.segment_count;
      ++i;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<ChunkPlan> sample_clip_lengths(const std::vector<double>& durations, Rng& rng) {
  return plan_chunks(durations, [&rng] { return draw_clip_length(rng); });
}

ClipMetadata metadata_from_json(const json& j) {
  static const std::vector<std::string> known{
      "clip_id",     "duration_s",     "face_count_histogram", "face_tracks",
      "mean_flow",   "sync_matrix",    "sync_threshold",       "diarization",
      "segment_durations_s"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown clip metadata key '" + key + "'");
    }
  }
  ClipMetadata m;
  m.clip_id = j.at("clip_id").get<std::string>();
  m.duration_s = j.at("duration_s").get<double>();
  if (!(m.duration_s > 0.0)) throw ValidationError("duration_s must be positive");
  for (const auto& [k, v] : j.at("face_count_histogram").items()) {
    m.face_count_histogram[std::stoi(k)] = v.get<long>();
  }
  for (const auto& t : j.at("face_tracks")) m.face_tracks.push_back(face_track_from_json(t));
  if (m.face_tracks.size() != 2) throw ValidationError("expected exactly two face tracks");
  m.mean_flow = j.at("mean_flow").get<double>();
  const auto& sm = j.at("sync_matrix");
  if (!sm.is_array() || sm.size() != 2 || sm[0].size() != 2 || sm[1].size() != 2) {
    throw ValidationError("sync_matrix must be 2x2");
  }
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) m.sync_matrix[r][c] = sm[r][c].get<double>();
  if (j.contains("sync_threshold")) m.sync_threshold = j.at("sync_threshold").get<double>();
  for (const auto& s : j.value("diarization", json::array())) {
    m.diarization.push_back(
        {s.at("start_s").get<double>(), s.at("end_s").get<double>(), s.at("speakers").get<std::vector<int>>()});
  }
  m.segment_durations_s = j.value("segment_durations_s", std::vector<double>{});
  return m;
}

json to_json(const ClipMetadata& m) {
  json hist = json::object();
  for (const auto& [k, v] : m.face_count_histogram) hist[std::to_string(k)] = v;
  json tracks = json::array();
  for (const auto& t : m.face_tracks) tracks.push_back(afca_lab::to_json(t));
  json diar = json::array();
  for (const auto& s : m.diarization) {
    diar.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"speakers", s.speakers}});
  }
  json j{{"clip_id", m.clip_id},
         {"duration_s", m.duration_s},
         {"face_count_histogram", std::move(hist)},
         {"face_tracks", std::move(tracks)},
         {"mean_flow", m.mean_flow},
         {"sync_matrix", {{m.sync_matrix[0][0], m.sync_matrix[0][1]},
                          {m.sync_matrix[1][0], m.sync_matrix[1][1]}}},
         {"diarization", std::move(diar)},
         {"segment_durations_s", m.segment_durations_s}};
  if (m.sync_threshold) j["sync_threshold"] = *m.sync_threshold;
  return j;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kAccept:
      return "accept";
    case Verdict::kReject:
      return "reject";
    case Verdict::kValidationError:
      return "validation_error";
  }
  return "?";
}

AuditRecord curate_clip(const ClipMetadata& meta, const CurationConfig& config,
                        std::uint64_t root_seed) {
  AuditRecord rec;
  rec.clip_id = meta.clip_id;
  auto run = [&](const std::function<CheckResult()>& rule, const char* name) {
    try {
      const CheckResult r = rule();
      if (!r.accepted) {
        rec.failed_rules.push_back(r.rule);
        rec.reasons.push_back(r.reason);
        if (rec.verdict == Verdict::kAccept) rec.verdict = Verdict::kReject;
      }
    } catch (const ValidationError& e) {
      rec.failed_rules.push_back(std::string(name) + "-input");
      rec.reasons.push_back(e.what());
      rec.verdict = Verdict::kValidationError;
    }
  };
  run([&] { return check_face_count(meta.face_count_histogram, config.face_count_quorum); },
      "face-count");
  run([&] {
        validate(meta.diarization, meta.duration_s);
        return check_speaker_states(meta.diarization);
      },
      "speaker-state");
  run([&] {
        if (meta.face_tracks.size() != 2) throw ValidationError("expected two face tracks");
        return check_spatial_consistency(meta.face_tracks[0], meta.face_tracks[1]);
      },
      "spatial");
  run([&] { return check_camera_motion(meta.mean_flow, config.max_mean_flow); }, "motion");
  run([&] {
        return check_sync_matrix(meta.sync_matrix, meta.sync_threshold.value_or(config.min_sync_score));
      },
      "sync");
  if (rec.verdict == Verdict::kAccept && !meta.segment_durations_s.empty()) {
    try {
      Rng rng = make_rng(root_seed, "curate/" + meta.clip_id);
      rec.chunk_plan = sample_clip_lengths(meta.segment_durations_s, rng);
    } catch (const ValidationError& e) {
      rec.failed_rules.push_back("chunking-input");
      rec.reasons.push_back(e.what());
      rec.verdict = Verdict::kValidationError;
    }
  }
  return rec;
}

AuditRecord curate_line(std::string_view line, std::size_t line_number,
                        const CurationConfig& config, std::uint64_t root_seed) {
  std::string label = "line:" + std::to_string(line_number);
  try {
    const json j = json::parse(line);
    if (j.is_object() && j.contains("clip_id") && j["clip_id"].is_string()) {
      label = j["clip_id"].get<std::string>();
    }
    return curate_clip(metadata_from_json(j), config, root_seed);
  } catch (const json::exception& e) {
    return {label, Verdict::kValidationError, {"parse"}, {e.what()}, {}};
  } catch (const Error& e) {
    return {label, Verdict::kValidationError, {"parse"}, {e.what()}, {}};
  } catch (const std::invalid_argument& e) {
    return {label, Verdict::kValidationError, {"parse"}, {e.what()}, {}};
  }
}

CurationSummary summarize(const std::vector<AuditRecord>& records) {
  CurationSummary s;
  for (const auto& r : records) {
    ++s.total;
    switch (r.verdict) {
      case Verdict::kAccept:
        ++s.accepted;
        break;
      case Verdict::kReject:
        ++s.rejected;
        break;
      case Verdict::kValidationError:
        ++s.validation_errors;
        break;
    }
    for (const auto& rule : r.failed_rules) ++s.rule_counts[rule];
  }
  return s;
}

json to_json(const AuditRecord& r) {
  json plan = json::array();
  for (const auto& c : r.chunk_plan) {
    plan.push_back({{"first_segment", c.first_segment},
                    {"segment_count", c.segment_count},
                    {"duration_s", c.duration_s}});
  }
  return {{"clip_id", r.clip_id},
          {"verdict", std::string(to_string(r.verdict))},
          {"failed_rules", r.failed_rules},
          {"reasons", r.reasons},
          {"chunk_plan", std::move(plan)}};
}

json to_json(const CurationSummary& s) {
  return {{"total", s.total},
          {"accepted", s.accepted},
          {"rejected", s.rejected},
          {"validation_errors", s.validation_errors},
          {"yield", s.yield()},
          {"rule_counts", s.rule_counts}};
}

}  // namespace afca_lab::curation
