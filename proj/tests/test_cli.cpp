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

#include <filesystem>
#include <string>

#include "cli_support.hpp"
#include "doctest.h"

using namespace afca_lab;
using namespace afca_lab::testing;
using nlohmann::json;

namespace {

const std::string kFixtures = AFCA_LAB_FIXTURES_DIR;
const std::string kStrict = std::string(AFCA_LAB_CONFIGS_DIR) + "/curate_strict.json";

std::vector<std::string> data_rows(const std::string& csv) {
  std::vector<std::string> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  return rows;
}

}  // namespace

TEST_CASE("argument errors and help") {
  CHECK(run_cli({}).code == cli::kIoError);
  CHECK(run_cli({"nope"}).code == cli::kIoError);
  CHECK(run_cli({"--help"}).code == cli::kOk);
  CHECK(run_cli({"curate", "--config", "/no/such/config.json"}).code == cli::kIoError);
}

TEST_CASE("config parsing") {
  const auto c = cli::run_config_from_json({{"paths", {{"input", "x.ndjson"}}}, {"seed", 9}}, "/base");
  CHECK(c.seed == 9);
  CHECK(c.paths.input == "/base/x.ndjson");
  CHECK(std::isinf(c.thresholds.max_mean_flow));
  CHECK_THROWS_AS(cli::run_config_from_json({{"sede", 1}}, "."), ValidationError);
  CHECK_THROWS_AS(cli::run_config_from_json({{"thresholds", {{"jump", 1}}}}, "."), ValidationError);
  CHECK_THROWS_AS(cli::run_config_from_json({{"data", {{"source", "web"}}}}, "."), ValidationError);
  const auto back = cli::run_config_from_json(cli::to_json(c), "/elsewhere");
  CHECK(cli::to_json(back) == cli::to_json(c));
}

TEST_CASE("curate over fixtures") {
  const auto dir = scratch_dir("curate");
  SUBCASE("all pass") {
    const auto r = run_cli({"curate", "--input", kFixtures + "/curation/all_pass.ndjson", "--out", dir.string()});
    CHECK(r.code == cli::kOk);
    const json s = json::parse(slurp(dir / "curation_summary.json"));
    CHECK(s["summary"]["yield"].get<double>() == 1.0);
  }
  SUBCASE("mixed corpus matches the expected verdicts") {
    const auto r = run_cli({"curate", "--config", kStrict, "--input",
                            kFixtures + "/curation/mixed.ndjson", "--out", dir.string()});
    CHECK(r.code == cli::kPartialReject);
    const json expected = json::parse(slurp(kFixtures + "/curation/mixed_expected.json"));
    std::istringstream audit(slurp(dir / "audit.ndjson"));
    std::string line;
    std::getline(audit, line);
    CHECK(json::parse(line).contains("config"));
    std::size_t i = 0;
    while (std::getline(audit, line)) {
      const json rec = json::parse(line);
      const json& e = expected["verdicts"].at(i++);
      CHECK(rec["clip_id"] == e["clip_id"]);
      CHECK(rec["verdict"] == e["verdict"]);
      CHECK(rec["failed_rules"] == e["failed_rules"]);
    }
    CHECK(i == expected["verdicts"].size());
  }
  SUBCASE("empty input") {
    write_file(dir / "empty.ndjson", "");
    const auto r = run_cli({"curate", "--input", (dir / "empty.ndjson").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kOk);
    CHECK(data_rows(slurp(dir / "o" / "audit.ndjson")).size() == 1);  // config line only
  }
  SUBCASE("missing input") {
    const auto r = run_cli({"curate", "--input", (dir / "missing.ndjson").string(), "--out", dir.string()});
    CHECK(r.code == cli::kIoError);
    CHECK(json::parse(slurp(dir / "run_meta.json"))["exit_code"] == 2);
  }
}

TEST_CASE("eval over the fixture corpus") {
  const auto dir = scratch_dir("eval");
  SUBCASE("report matches the golden values") {
    const auto r = run_cli({"eval", "--input", kFixtures + "/eval", "--out", dir.string(), "--plot"});
    REQUIRE(r.code == cli::kOk);
    const json golden = json::parse(slurp(kFixtures + "/eval_expected.json"));
    const json rep = json::parse(slurp(dir / "eval_report.json"));
    REQUIRE(rep["clips"].size() == 2);
    for (const auto& c : rep["clips"]) {
      const json& g = golden["clips"][c["clip_id"].get<std::string>()];
      CHECK(std::abs(c["interactivity"].get<double>() - g["interactivity"].get<double>()) <= 1e-9);
      CHECK(std::abs(c["sync_c_star"].get<double>() - g["sync_c_star"].get<double>()) <= 1e-9);
    }
    CHECK(fs::exists(dir / "eval_report.csv"));
    const auto series = data_rows(slurp(dir / "motion" / "conv01.csv"));
    REQUIRE(series.size() > 1);
    CHECK(series[0] == "clip_id,speaker_index,frame,motion_px");
  }
  SUBCASE("no plot, no series") {
    REQUIRE(run_cli({"eval", "--input", kFixtures + "/eval", "--out", dir.string()}).code == cli::kOk);
    CHECK_FALSE(fs::exists(dir / "motion"));
  }
  SUBCASE("missing annotation is reported") {
    const auto corpus = dir / "corpus";
    fs::create_directories(corpus);
    for (const auto& e : fs::directory_iterator(kFixtures + "/eval"))
      if (e.path().filename() != "conv02.annotation.json") fs::copy(e.path(), corpus);
    const auto r = run_cli({"eval", "--input", corpus.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kIoError);
    CHECK(r.out.find("conv02") != std::string::npos);
  }
  SUBCASE("missing corpus") {
    CHECK(run_cli({"eval", "--input", (dir / "nowhere").string(), "--out", dir.string()}).code == cli::kIoError);
  }
}

TEST_CASE("demo-forward") {
  const auto dir = scratch_dir("demo");
  SUBCASE("two identities pass every check") {
    REQUIRE(run_cli({"demo-forward", "--out", dir.string()}).code == cli::kOk);
    const json t = json::parse(slurp(dir / "demo_forward.json"));
    CHECK(t["failed_checks"].empty());
    CHECK(t["blocks"][0]["afca_norms"].size() == 2);
  }
  SUBCASE("zero identities leave the hidden state unchanged") {
    const auto cfg = write_config(dir, {{"demo", {{"identities", 0}}}});
    const auto r = run_cli({"demo-forward", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kOk);
    CHECK(json::parse(slurp(dir / "o" / "demo_forward.json"))["afca_layer_identity"] == true);
    CHECK(r.out.find("H_out == H_in is true") != std::string::npos);
  }
  SUBCASE("saved weights reload, corrupted ones are refused") {
    REQUIRE(run_cli({"demo-forward", "--out", (dir / "a").string()}).code == cli::kOk);
    const auto cfg = write_config(dir, {{"paths", {{"weights", "a/afca_weights"}}}});
    CHECK(run_cli({"demo-forward", "--config", cfg.string(), "--out", (dir / "b").string()}).code == cli::kOk);
    std::string blob = slurp(dir / "a" / "afca_weights" / "weights.bin");
    blob[blob.size() / 2] ^= 0x40;
    write_file(dir / "a" / "afca_weights" / "weights.bin", blob);
    const auto r = run_cli({"demo-forward", "--config", cfg.string(), "--out", (dir / "c").string()});
    CHECK(r.code == cli::kIoError);
    CHECK(r.err.find("checksum") != std::string::npos);
  }
}

TEST_CASE("train-toy") {
  const auto dir = scratch_dir("train");
  SUBCASE("short run writes a curve, summary and checkpoint") {
    const auto cfg = write_config(dir, quick_train_config(6, 4));
    REQUIRE(run_cli({"train-toy", "--config", cfg.string(), "--out", (dir / "o").string()}).code == cli::kOk);
    const auto rows = data_rows(slurp(dir / "o" / "loss_curve.csv"));
    REQUIRE(rows.size() == 11);
    CHECK(rows[0].rfind("step,stage,lr,base_lr,loss,mode", 0) == 0);
    CHECK(rows[6].rfind("5,1,2e-05,", 0) == 0);
    CHECK(rows[7].rfind("6,2,2.5e-06,5e-06,", 0) == 0);  // first warm-up step
    CHECK(rows[8].rfind("7,2,5e-06,5e-06,", 0) == 0);
    const json s = json::parse(slurp(dir / "o" / "train_summary.json"));
    CHECK(s["final_step"] == 10);
    CHECK(fs::exists(dir / "o" / "checkpoint" / "manifest.json"));
  }
  SUBCASE("resume matches an uninterrupted run") {
    const auto full_cfg = write_config(dir, quick_train_config(6, 4));
    REQUIRE(run_cli({"train-toy", "--config", full_cfg.string(), "--out", (dir / "full").string()}).code == 0);
    fs::create_directories(dir / "part");
    const auto part_cfg = write_config(dir / "part", quick_train_config(6, 0));
    REQUIRE(run_cli({"train-toy", "--config", part_cfg.string(), "--out", (dir / "part").string()}).code == 0);
    const auto r = run_cli({"train-toy", "--config", full_cfg.string(), "--resume",
                            (dir / "part" / "checkpoint").string(), "--out", (dir / "resumed").string()});
    REQUIRE(r.code == cli::kOk);
    CHECK(json::parse(slurp(dir / "resumed" / "train_summary.json"))["start_step"] == 6);
    const auto full = data_rows(slurp(dir / "full" / "loss_curve.csv"));
    const auto resumed = data_rows(slurp(dir / "resumed" / "loss_curve.csv"));
    REQUIRE(resumed.size() == 5);
    for (std::size_t i = 1; i < resumed.size(); ++i) CHECK(resumed[i] == full[i + 6]);
  }
  SUBCASE("stage 2 on single-identity clips is a contract violation") {
    write_file(dir / "a.f32", std::string(9 * 8 * 4, '\0'));
    write_file(dir / "a.track.json",
               json{{"identity_id", "spk"}, {"frame_dims", {720, 1280}},
                    {"boxes", std::vector<std::vector<int>>(9, {500, 200, 700, 400})}}.dump());
    write_file(dir / "manifest.json",
               json::array({{{"clip_id", "a"}, {"frame_dims", {720, 1280}}, {"frame_count", 9},
                             {"fps", 24}, {"text", "a person talks"}, {"frames", "a.mp4"},
                             {"audio_embeddings", "a.f32"}, {"audio_dim", 8},
                             {"face_track", "a.track.json"}}})
                   .dump());
    json c = quick_train_config(2, 2);
    c["data"] = {{"source", "manifest"}};
    c["paths"] = {{"manifest", "manifest.json"}};
    const auto cfg = write_config(dir, c);
    const auto r = run_cli({"train-toy", "--config", cfg.string(), "--stage2-only", "--out", (dir / "o").string()});
    CHECK(r.code == cli::kContractViolation);
    CHECK(r.err.find("identit") != std::string::npos);
  }
  SUBCASE("diverging run stops with diagnostics") {
    json c = quick_train_config(30, 0);
    c["model"]["lr_stage1"] = 1e30;
    const auto cfg = write_config(dir, c);
    const auto r = run_cli({"train-toy", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kNumericalFailure);
    const json d = json::parse(slurp(dir / "o" / "diagnostics.json"));
    CHECK(d["error"].get<std::string>().find("non-finite loss") != std::string::npos);
  }
}

TEST_CASE("reruns are byte-identical") {
  const auto dir = scratch_dir("rerun");
  const auto cfg = write_config(dir, quick_train_config(4, 2));
  const std::vector<std::vector<std::string>> commands{
      {"demo-forward", "--config", cfg.string()},
      {"train-toy", "--config", cfg.string()},
      {"curate", "--config", kStrict, "--input", kFixtures + "/curation/mixed.ndjson"},
      {"eval", "--input", kFixtures + "/eval", "--plot"},
  };
  for (const auto& base : commands) {
    CAPTURE(base[0]);
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      auto args = base;
      const auto out = dir / (base[0] + std::to_string(k));
      args.insert(args.end(), {"--out", out.string()});
      run_cli(args);
      runs[k] = output_bytes(out);
    }
    CHECK(!runs[0].empty());
    CHECK(runs[0] == runs[1]);
  }
}
