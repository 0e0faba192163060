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

#include "afca_lab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "afca_lab/errors.hpp"
#include "afca_lab/parallel.hpp"

namespace afca_lab::metrics {

using nlohmann::json;

void validate(const LandmarkSequence& seq) {
  const int k = seq.num_keypoints();
  for (int j = 0; j < seq.num_frames(); ++j) {
    if (static_cast<int>(seq.frames[j].size()) != k) {
      throw ValidationError("landmark frame " + std::to_string(j) + " has " +
                            std::to_string(seq.frames[j].size()) + " keypoints, expected " +
                            std::to_string(k));
    }
    for (const Point& p : seq.frames[j]) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ValidationError("landmark frame " + std::to_string(j) + " has a non-finite point");
      }
    }
  }
  if (seq.num_frames() > 0 && k == 0) throw ValidationError("landmark frames are empty");
}

double mean_displacement(const Frame& a, const Frame& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("keypoint count mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::hypot(b[i].x - a[i].x, b[i].y - a[i].y);
  return sum / static_cast<double>(a.size());
}

LandmarkSequence anomaly_clamp(const LandmarkSequence& seq, double jump_px) {
  validate(seq);
  LandmarkSequence out = seq;
  // out[j] is the last accepted frame when frame j+1 arrives.
  for (int j = 0; j + 1 < seq.num_frames(); ++j) {
    if (mean_displacement(out.frames[j], seq.frames[j + 1]) > jump_px) {
      out.frames[j + 1] = out.frames[j];
    }
  }
  return out;
}

std::vector<double> motion_series(const LandmarkSequence& seq) {
  validate(seq);
  std::vector<double> out;
  for (int j = 0; j + 1 < seq.num_frames(); ++j) {
    out.push_back(mean_displacement(seq.frames[j], seq.frames[j + 1]));
  }
  return out;
}

double motion_score(const LandmarkSequence& seq) {
  if (seq.num_frames() < 2) {
    throw ValidationError("motion needs at least 2 frames, got " + std::to_string(seq.num_frames()));
  }
  const std::vector<double> d = motion_series(seq);
  double sum = 0.0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(d.size());
}

LandmarkSequence select_keypoints(const LandmarkSequence& seq, std::span<const int> indices) {
  LandmarkSequence out{seq.fps, {}};
  for (const Frame& f : seq.frames) {
    Frame g;
    for (int i : indices) {
      if (i < 0 || i >= static_cast<int>(f.size())) {
        throw ValidationError("keypoint index " + std::to_string(i) + " out of range for " +
                              std::to_string(f.size()) + " keypoints");
      }
      g.push_back(f[i]);
    }
    out.frames.push_back(std::move(g));
  }
  return out;
}

LandmarkSequence slice(const LandmarkSequence& seq, Interval iv) {
  if (iv.start < 0 || iv.end > seq.num_frames() || iv.start >= iv.end) {
    throw ValidationError("interval [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                          ") outside " + std::to_string(seq.num_frames()) + " frames");
  }
  return {seq.fps, std::vector<Frame>(seq.frames.begin() + iv.start, seq.frames.begin() + iv.end)};
}

void validate(const SegmentAnnotation& ann, int num_frames) {
  std::set<int> ids;
  for (const auto& spk : ann.speakers) {
    if (!ids.insert(spk.id).second) {
      throw ValidationError("duplicate speaker id " + std::to_string(spk.id));
    }
    auto check = [&](const Interval& iv, const char* kind) {
      if (iv.start < 0 || iv.start >= iv.end || iv.end > num_frames) {
        throw ValidationError("speaker " + std::to_string(spk.id) + " " + kind + " interval [" +
                              std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                              ") is empty or outside " + std::to_string(num_frames) + " frames");
      }
    };
    for (const auto& iv : spk.speaking) check(iv, "speaking");
    for (const auto& iv : spk.listening) {
      check(iv, "listening");
      for (const auto& sp : spk.speaking) {
        if (iv.overlaps(sp)) {
          throw ValidationError("speaker " + std::to_string(spk.id) +
                                " listens and speaks at the same time");
        }
      }
    }
    if (spk.sync_c && !std::isfinite(*spk.sync_c)) {
      throw ValidationError("speaker " + std::to_string(spk.id) + " has a non-finite sync_c");
    }
  }
}

namespace {

struct Weighted {
  double weight;
  double value;
};

double weighted_mean(std::span<const Weighted> terms, const char* what) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& t : terms) {
    if (t.weight < 0.0) throw ValidationError(std::string(what) + ": negative interval length");
    num += t.weight * t.value;
    den += t.weight;
  }
  if (den <= 0.0) throw ValidationError(std::string(what) + " is undefined: no intervals");
  return num / den;
}

}  // namespace

double interactivity(double l2, double motion_l2, double l3, double motion_l3) {
  const Weighted terms[] = {{l2, motion_l2}, {l3, motion_l3}};
  return weighted_mean(terms, "interactivity");
}

double interactivity(std::span<const LandmarkSequence> seqs, const SegmentAnnotation& ann,
                     double jump_px) {
  if (seqs.size() != ann.speakers.size()) {
    throw ShapeError(std::to_string(seqs.size()) + " landmark sequences for " +
                     std::to_string(ann.speakers.size()) + " speakers");
  }
  std::vector<Weighted> terms;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    validate(ann, seqs[k].num_frames());
    if (ann.speakers[k].listening.empty()) continue;
    const LandmarkSequence clamped = anomaly_clamp(seqs[k], jump_px);
    for (const Interval& iv : ann.speakers[k].listening) {
      terms.push_back({static_cast<double>(iv.length()), motion_score(slice(clamped, iv))});
    }
  }
  return weighted_mean(terms, "interactivity");
}

double sync_c_star(const SegmentSyncScores& scores, double l1, double l4) {
  const Weighted terms[] = {{l1, scores.sync_l1}, {l4, scores.sync_l4}};
  return weighted_mean(terms, "Sync-C*");
}

namespace {

double speaking_length(const SpeakerSegments& s) {
  double total = 0.0;
  for (const auto& iv : s.speaking) total += iv.length();
  return total;
}

}  // namespace

double sync_c_star(const SegmentSyncScores& scores, const SegmentAnnotation& ann) {
  if (ann.speakers.size() != 2) {
    throw ValidationError("per-speaker Sync-C* needs exactly two speakers");
  }
  return sync_c_star(scores, speaking_length(ann.speakers[0]), speaking_length(ann.speakers[1]));
}

double sync_c_star(const SegmentAnnotation& ann) {
  std::vector<Weighted> terms;
  for (const auto& s : ann.speakers) {
    if (s.sync_c) terms.push_back({speaking_length(s), *s.sync_c});
  }
  return weighted_mean(terms, "Sync-C*");
}

LandmarkSequence landmarks_from_json(const json& j) {
  LandmarkSequence seq;
  seq.fps = j.value("fps", 24.0);
  if (j.contains("canvas")) {
    const auto canvas = j.at("canvas").get<std::vector<int>>();
    if (canvas != std::vector<int>{kCanvasSize, kCanvasSize}) {
      throw ValidationError("landmarks must be aligned to a 256x256 canvas");
    }
  }
  for (const auto& frame : j.at("frames")) {
    Frame f;
    for (const auto& p : frame) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("keypoint must be [x, y]");
      f.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    seq.frames.push_back(std::move(f));
  }
  validate(seq);
  return seq;
}

json to_json(const LandmarkSequence& seq) {
  json frames = json::array();
  for (const Frame& f : seq.frames) {
    json jf = json::array();
    for (const Point& p : f) jf.push_back({p.x, p.y});
    frames.push_back(std::move(jf));
  }
  return {{"fps", seq.fps}, {"canvas", {kCanvasSize, kCanvasSize}}, {"frames", std::move(frames)}};
}

namespace {

std::vector<Interval> intervals_from_json(const json& j) {
  std::vector<Interval> out;
  for (const auto& iv : j) {
    if (!iv.is_array() || iv.size() != 2) throw ValidationError("interval must be [start, end]");
    out.push_back({iv[0].get<int>(), iv[1].get<int>()});
  }
  return out;
}

json intervals_to_json(const std::vector<Interval>& ivs) {
  json out = json::array();
  for (const auto& iv : ivs) out.push_back({iv.start, iv.end});
  return out;
}

}  // namespace

SegmentAnnotation annotation_from_json(const json& j) {
  SegmentAnnotation ann;
  for (const auto& s : j.at("speakers")) {
    SpeakerSegments spk;
    spk.id = s.at("id").get<int>();
    spk.speaking = intervals_from_json(s.value("speaking", json::array()));
    spk.listening = intervals_from_json(s.value("listening", json::array()));
    if (s.contains("sync_c") && !s.at("sync_c").is_null()) spk.sync_c = s.at("sync_c").get<double>();
    ann.speakers.push_back(std::move(spk));
  }
  return ann;
}

json to_json(const SegmentAnnotation& ann) {
  json speakers = json::array();
  for (const auto& s : ann.speakers) {
    json js{{"id", s.id},
            {"speaking", intervals_to_json(s.speaking)},
            {"listening", intervals_to_json(s.listening)}};
    if (s.sync_c) js["sync_c"] = *s.sync_c;
    speakers.push_back(std::move(js));
  }
  return {{"speakers", std::move(speakers)}};
}

std::vector<int> default_eye_indices(int num_keypoints) {
  std::vector<int> idx;
  if (num_keypoints == 68) {
    for (int i = 36; i < 48; ++i) idx.push_back(i);
  } else {
    for (int i = 0; i < num_keypoints; ++i) idx.push_back(i);
  }
  return idx;
}

namespace {

json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("corrupt JSON in " + p.filename().string() + ": " + e.what());
  }
}

struct ClipFiles {
  std::optional<std::filesystem::path> annotation;
  std::map<int, std::filesystem::path> landmarks;
};

ClipResult evaluate_clip(const std::string& id, const ClipFiles& files, const EvalOptions& opt) {
  if (!files.annotation) throw IoError("missing annotation");
  SegmentAnnotation ann;
  try {
    ann = annotation_from_json(read_json_file(*files.annotation));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed annotation: ") + e.what());
  }
  std::vector<LandmarkSequence> seqs;
  for (const auto& spk : ann.speakers) {
    auto it = files.landmarks.find(spk.id);
    if (it == files.landmarks.end()) {
      throw IoError("missing landmarks for speaker " + std::to_string(spk.id));
    }
    LandmarkSequence seq;
    try {
      seq = landmarks_from_json(read_json_file(it->second));
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed landmarks: ") + e.what());
    }
    const std::vector<int> idx =
        opt.eye_indices.empty() ? default_eye_indices(seq.num_keypoints()) : opt.eye_indices;
    seqs.push_back(select_keypoints(seq, idx));
  }
  ClipResult r;
  r.clip_id = id;
  r.interactivity = interactivity(seqs, ann, opt.jump_px);
  bool any_sync = false;
  for (const auto& s : ann.speakers) any_sync = any_sync || s.sync_c.has_value();
  if (any_sync) r.sync_c_star = sync_c_star(ann);
  for (const auto& seq : seqs) {
    const LandmarkSequence clamped = anomaly_clamp(seq, opt.jump_px);
    r.motion_per_speaker.push_back(clamped.num_frames() >= 2 ? motion_score(clamped) : 0.0);
    if (opt.emit_motion_series) r.motion_series.push_back(motion_series(clamped));
  }
  return r;
}

}  // namespace

CorpusReport corpus_report(const std::filesystem::path& dir, const EvalOptions& options) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex ann_re(R"((.+)\.annotation\.json)");
  static const std::regex lm_re(R"((.+)\.spk(\d+)\.landmarks\.json)");
  std::map<std::string, ClipFiles> clips;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, lm_re)) {
      clips[m[1]].landmarks[std::stoi(m[2])] = entry.path();
    } else if (std::regex_match(name, m, ann_re)) {
      clips[m[1]].annotation = entry.path();
    }
  }
  std::vector<std::pair<std::string, ClipFiles>> work(clips.begin(), clips.end());
  std::vector<std::optional<ClipResult>> results(work.size());
  std::vector<std::string> errors(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    try {
      results[i] = evaluate_clip(work[i].first, work[i].second, options);
    } catch (const Error& e) {
      errors[i] = e.what();
    } catch (const json::exception& e) {
      errors[i] = std::string("malformed input: ") + e.what();
    }
  });
  CorpusReport report;
  double sum_i = 0.0;
  double sum_s = 0.0;
  int n_s = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (!results[i]) {
      report.skipped.push_back({work[i].first, errors[i]});
      continue;
    }
    sum_i += results[i]->interactivity;
    if (results[i]->sync_c_star) {
      sum_s += *results[i]->sync_c_star;
      ++n_s;
    }
    report.clips.push_back(std::move(*results[i]));
  }
  if (!report.clips.empty()) report.mean_interactivity = sum_i / report.clips.size();
  if (n_s > 0) report.mean_sync_c_star = sum_s / n_s;
  return report;
}

json to_json(const CorpusReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json clips = json::array();
  for (const auto& c : report.clips) {
    clips.push_back({{"clip_id", c.clip_id},
                     {"interactivity", c.interactivity},
                     {"sync_c_star", opt(c.sync_c_star)},
                     {"motion_per_speaker", c.motion_per_speaker}});
  }
  json skipped = json::array();
  for (const auto& s : report.skipped) skipped.push_back({{"clip_id", s.clip_id}, {"reason", s.reason}});
  return {{"clips", std::move(clips)},
          {"skipped", std::move(skipped)},
          {"mean", {{"interactivity", opt(report.mean_interactivity)},
                    {"sync_c_star", opt(report.mean_sync_c_star)}}}};
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_csv(const CorpusReport& report) {
  std::ostringstream os;
  os << "clip_id,interactivity,sync_c_star\n";
  for (const auto& c : report.clips) {
    os << c.clip_id << ',' << fmt(c.interactivity) << ','
       << (c.sync_c_star ? fmt(*c.sync_c_star) : std::string()) << '\n';
  }
  return os.str();
}

std::string motion_series_csv(const CorpusReport& report) {
  std::ostringstream os;
  os << "clip_id,speaker_index,frame,motion_px\n";
  for (const auto& c : report.clips) {
    for (std::size_t k = 0; k < c.motion_series.size(); ++k) {
      for (std::size_t j = 0; j < c.motion_series[k].size(); ++j) {
        os << c.clip_id << ',' << k << ',' << j << ',' << fmt(c.motion_series[k][j]) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace afca_lab::metrics
