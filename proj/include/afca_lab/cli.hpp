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

// The afca-lab command line: demo-forward, train-toy, curate and eval.
//
// Exit codes: 0 pass, 1 partial rejects, 2 IO or format error, 3 invariance
// failure, 4 numerical failure, 5 contract violation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "afca_lab/toy_dit.hpp"
#include "json.hpp"

namespace afca_lab::cli {

enum ExitCode : int {
  kOk = 0,
  kPartialReject = 1,
  kIoError = 2,
  kInvarianceFailure = 3,
  kNumericalFailure = 4,
  kContractViolation = 5,
};

struct RunConfig {
  std::uint64_t seed = 0;
  struct Paths {
    std::string input;            // curate: ndjson file; eval: corpus dir
    std::string manifest;         // train-toy clip manifest
    std::string stage2_manifest;  // train-toy stage-2 clips, defaults to manifest
    std::string weights;          // demo-forward AFCA weight blob dir
    std::string resume;           // train-toy checkpoint dir
  } paths;
  ToyDiTConfig model;
  struct Thresholds {
    double min_sync_score = 0.0;
    double face_count_quorum = 0.95;
    double max_mean_flow = std::numeric_limits<double>::infinity();  // null in JSON
    double jump_px = 10.0;
  } thresholds;
  struct Demo {
    int identities = 2;
    int latent_frames = 2;
    int rows = 4;
    int cols = 4;
    int audio_tokens = 8;
    int face_tokens = 1;
  } demo;
  struct Data {
    std::string source = "synthetic";  // or "manifest"
    int single_clips = 16;
    int multi_clips = 8;
  } data;
  std::vector<int> eye_indices;  // empty: layout default
};

// Unknown keys at any level raise ValidationError. Relative paths resolve
// against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

struct Options {
  std::filesystem::path out_dir = "out";
  std::string input_override;
  std::string resume_override;
  bool plot = false;
  bool stage2_only = false;
};

int cmd_demo_forward(const RunConfig& cfg, const Options& opt, std::ostream& log);
int cmd_train_toy(const RunConfig& cfg, const Options& opt, std::ostream& log);
int cmd_curate(const RunConfig& cfg, const Options& opt, std::ostream& log);
int cmd_eval(const RunConfig& cfg, const Options& opt, std::ostream& log);

// Full argv handling, including the run_meta.json sidecar. args excludes
// the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace afca_lab::cli
