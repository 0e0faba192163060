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
#include <fstream>
#include <string>

#include "afca_lab/augmentation.hpp"
#include "afca_lab/blob_io.hpp"
#include "afca_lab/errors.hpp"
#include "afca_lab/mask_pipeline.hpp"
#include "doctest.h"

using namespace afca_lab;

namespace {

ClipSample make_clip(const std::string& id, FrameDims dims, BBox box, int frames, Rng& rng,
                     double fps = 24.0) {
  ClipSample c;
  c.clip_id = id;
  c.frame_dims = dims;
  c.frame_count = frames;
  c.fps = fps;
  c.text = "a person talks";
  ClipStream s;
  s.identity_id = "spk_" + id;
  s.audio = random_normal<float>(rng, frames, 8);
  s.face_track = {s.identity_id, dims, std::vector<BBox>(frames, box)};
  c.identity_streams.push_back(s);
  return c;
}

bool same_clip(const ClipSample& a, const ClipSample& b) {
  if (a.clip_id != b.clip_id || a.frame_dims != b.frame_dims || a.frame_count != b.frame_count ||
      a.fps != b.fps || a.text != b.text || a.identity_streams.size() != b.identity_streams.size())
    return false;
  for (std::size_t k = 0; k < a.identity_streams.size(); ++k) {
    const auto& x = a.identity_streams[k];
    const auto& y = b.identity_streams[k];
    if (x.identity_id != y.identity_id || x.audio.rows() != y.audio.rows() ||
        x.audio.cols() != y.audio.cols() || !(x.audio.array() == y.audio.array()).all() ||
        x.face_track.boxes != y.face_track.boxes || x.face_track.frame_dims != y.face_track.frame_dims)
      return false;
  }
  return true;
}

bool aspect_ok(const CropWindow& w) {
  return std::abs(w.width() - w.height() * 416.0 / 480.0) <= 1.0;
}

}  // namespace

TEST_CASE("face_centered_min_crop examples") {
  CHECK(face_centered_min_crop({1080, 1920}, 800, 500) == CropWindow{592, 260, 1008, 740});
  CHECK(face_centered_min_crop({1080, 1920}, 100, 100) == CropWindow{0, 0, 416, 480});
  CHECK(face_centered_min_crop({480, 416}, 300, 17) == CropWindow{0, 0, 416, 480});
  CHECK(face_centered_min_crop({1080, 1920}, 1919, 1079) == CropWindow{1504, 600, 1920, 1080});
  CHECK_THROWS_AS(face_centered_min_crop({479, 1920}, 800, 200), ValidationError);
  CHECK_THROWS_AS(face_centered_min_crop({1080, 415}, 200, 200), ValidationError);
  CHECK_THROWS_AS(face_centered_min_crop({1080, 1920}, 2000, 10), ValidationError);
}

TEST_CASE("crop windows stay inside the frame and keep their shape") {
  Rng rng(11);
  std::uniform_int_distribution<int> hdist(480, 2160), wdist(416, 3840);
  for (int i = 0; i < 10000; ++i) {
    const FrameDims f{hdist(rng), wdist(rng)};
    const double cx = std::uniform_real_distribution<double>(0, f.width)(rng);
    const double cy = std::uniform_real_distribution<double>(0, f.height)(rng);
    const CropWindow m = face_centered_min_crop(f, cx, cy);
    REQUIRE(m.width() == 416);
    REQUIRE(m.height() == 480);
    const CropWindow e = random_enlarge(m, f, rng);
    for (const CropWindow& w : {m, e}) {
      REQUIRE(w.x0 >= 0);
      REQUIRE(w.y0 >= 0);
      REQUIRE(w.x1 <= f.width);
      REQUIRE(w.y1 <= f.height);
      REQUIRE(aspect_ok(w));
    }
    REQUIRE(e.contains(m));
  }
}

TEST_CASE("random_enlarge") {
  Rng rng(12);
  SUBCASE("no slack means identity") {
    const CropWindow w{0, 0, 416, 480};
    CHECK(random_enlarge(w, {480, 416}, rng) == w);
    CHECK(random_enlarge(w, {480, 1920}, rng) == w);
    CHECK(random_enlarge(CropWindow{0, 300, 416, 780}, {1080, 416}, rng) ==
          CropWindow{0, 300, 416, 780});
  }
  SUBCASE("seeded draws on a 1080x1920 frame") {
    const CropWindow m = face_centered_min_crop({1080, 1920}, 800, 500);
    double lo = 1e9, hi = 0;
    for (int i = 0; i < 1000; ++i) {
      const CropWindow e = random_enlarge(m, {1080, 1920}, rng);
      REQUIRE(aspect_ok(e));
      REQUIRE(e.contains(m));
      REQUIRE(e.y1 <= 1080);
      lo = std::min<double>(lo, e.height());
      hi = std::max<double>(hi, e.height());
    }
    // Factors span [1, 1080/480].
    CHECK(lo < 500);
    CHECK(hi > 1050);
  }
  SUBCASE("same seed, same window") {
    Rng a(5), b(5);
    const CropWindow m{592, 260, 1008, 740};
    CHECK(random_enlarge(m, {1080, 1920}, a) == random_enlarge(m, {1080, 1920}, b));
  }
}

TEST_CASE("crop_clip maps boxes into the 480x416 frame") {
  Rng rng(13);
  const ClipSample c = make_clip("c", {1080, 1920}, {700, 400, 900, 600}, 5, rng);
  const ClipSample out = crop_clip(c, {592, 260, 1008, 740});
  CHECK(out.frame_dims == FrameDims{480, 416});
  CHECK(out.identity_streams[0].face_track.boxes[0] == BBox{108, 140, 308, 340});
  // A window twice as large halves the box.
  const ClipSample big = crop_clip(c, {384, 20, 1216, 980});
  CHECK(big.identity_streams[0].face_track.boxes[0] == BBox{158, 190, 258, 290});
  CHECK_THROWS_AS(crop_clip(c, {0, 0, 416, 480}), ValidationError);
  const ClipSample t = crop_for_training(c, rng);
  CHECK(t.frame_dims == FrameDims{480, 416});
  validate(t);
}

TEST_CASE("hconcat_pair") {
  Rng rng(14);
  const ClipSample a = make_clip("a", {480, 416}, {50, 100, 300, 400}, 30, rng);
  const ClipSample b = make_clip("b", {480, 416}, {60, 90, 310, 380}, 24, rng);
  const ClipSample p = hconcat_pair(a, b);
  CHECK(p.frame_dims == FrameDims{480, 832});
  CHECK(p.frame_count == 24);
  REQUIRE(p.identity_streams.size() == 2);
  CHECK(global_face_bbox(p.identity_streams[0].face_track).bbox == BBox{50, 100, 300, 400});
  CHECK(global_face_bbox(p.identity_streams[1].face_track).bbox == BBox{476, 90, 726, 380});
  validate(p);

  // Audio rows survive untouched, trimmed to the shorter clip.
  CHECK((p.identity_streams[0].audio.array() == a.identity_streams[0].audio.topRows(24).array()).all());
  CHECK((p.identity_streams[1].audio.array() == b.identity_streams[0].audio.array()).all());

  const auto prompts = dual_speaker_prompts();
  CHECK(std::find(prompts.begin(), prompts.end(), p.text) != prompts.end());

  const ClipSample q = hconcat_pair(b, a);
  CHECK(q.text == p.text);
  CHECK(q.identity_streams[0].identity_id == p.identity_streams[1].identity_id);
  CHECK(q.identity_streams[1].identity_id == p.identity_streams[0].identity_id);
  CHECK((q.identity_streams[1].audio.array() == p.identity_streams[0].audio.array()).all());

  const ClipSample slow = make_clip("s", {480, 416}, {50, 100, 300, 400}, 30, rng, 25.0);
  CHECK_THROWS_AS(hconcat_pair(a, slow), ValidationError);
  CHECK_THROWS_AS(hconcat_pair(p, a), ValidationError);
  const ClipSample raw = make_clip("r", {1080, 1920}, {50, 100, 300, 400}, 30, rng);
  CHECK_THROWS_AS(hconcat_pair(a, raw), ValidationError);

  ClipSample twin = b;
  twin.identity_streams[0].identity_id = a.identity_streams[0].identity_id;
  twin.identity_streams[0].face_track.identity_id = a.identity_streams[0].identity_id;
  CHECK(hconcat_pair(a, twin).identity_streams[1].identity_id == "spk_a#r");
}

TEST_CASE("prompt list matches the shipped resource") {
  std::ifstream in(AFCA_LAB_RESOURCES_DIR "/dual_speaker_prompts.txt");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  const auto prompts = dual_speaker_prompts();
  CHECK(std::vector<std::string>(prompts.begin(), prompts.end()) == lines);
  CHECK(lines.size() == 10);
}

TEST_CASE("select_batch_mode") {
  Rng data(15);
  std::vector<ClipSample> batch;
  for (int i = 0; i < 4; ++i)
    batch.push_back(make_clip("s" + std::to_string(i), {480, 416}, {50, 100, 300, 400}, 10, data));

  SUBCASE("mode frequency") {
    Rng rng(16);
    int paired = 0;
    for (int i = 0; i < 10000; ++i)
      paired += select_batch_mode(std::span<const ClipSample>(batch.data(), 2), rng).mode ==
                BatchMode::paired;
    CHECK(paired >= 4800);
    CHECK(paired <= 5200);
  }
  SUBCASE("both modes") {
    Rng rng(17);
    bool seen_single = false, seen_paired = false;
    for (int i = 0; i < 20; ++i) {
      const BatchSelection s = select_batch_mode(batch, rng);
      CHECK(s.input_samples == 4);
      if (s.mode == BatchMode::single) {
        seen_single = true;
        REQUIRE(s.samples.size() == 4);
        for (int k = 0; k < 4; ++k) CHECK(same_clip(s.samples[k], batch[k]));
        CHECK(s.identity_streams == 4);
      } else {
        seen_paired = true;
        REQUIRE(s.samples.size() == 2);
        CHECK(same_clip(s.samples[0], hconcat_pair(batch[0], batch[1])));
        CHECK(same_clip(s.samples[1], hconcat_pair(batch[2], batch[3])));
        CHECK(s.output_samples == 2);
        CHECK(s.identity_streams == 4);
      }
    }
    CHECK(seen_single);
    CHECK(seen_paired);
  }
  SUBCASE("odd batch drops the last sample in paired mode") {
    Rng rng(18);
    for (int i = 0; i < 20; ++i) {
      const BatchSelection s = select_batch_mode(std::span<const ClipSample>(batch.data(), 3), rng);
      if (s.mode == BatchMode::paired) {
        CHECK(s.samples.size() == 1);
        CHECK(s.warnings.size() == 1);
      } else {
        CHECK(s.samples.size() == 3);
        CHECK(s.warnings.empty());
      }
    }
  }
}

TEST_CASE("clip manifest loader") {
  const auto dir = std::filesystem::temp_directory_path() / "afca_lab_manifest_test";
  std::filesystem::create_directories(dir);
  Rng rng(19);
  const Matrix<float> audio = random_normal<float>(rng, 6, 4);
  std::vector<unsigned char> bytes;
  append_f32_le(bytes, std::span<const float>(audio.data(), audio.size()));
  write_bytes(dir / "a.f32", bytes);
  {
    std::ofstream t(dir / "a.track.json");
    t << to_json(FaceTrack{"spk", {1080, 1920}, std::vector<BBox>(6, {700, 400, 900, 600})});
  }
  nlohmann::json item{{"clip_id", "a"},  {"frame_dims", {1080, 1920}}, {"frame_count", 6},
                      {"fps", 24},       {"text", "hi"},              {"frames", "a.mp4"},
                      {"audio_embeddings", "a.f32"}, {"audio_dim", 4}, {"face_track", "a.track.json"}};
  {
    std::ofstream m(dir / "manifest.json");
    m << nlohmann::json{{"clips", {item}}};
  }
  const auto clips = load_clip_manifest(dir / "manifest.json");
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].identity_streams[0].identity_id == "spk");
  CHECK((clips[0].identity_streams[0].audio.array() == audio.array()).all());

  item["frame_count"] = 7;
  CHECK_THROWS_AS(clip_from_manifest_item(item, dir), ValidationError);
  item["frame_count"] = 6;
  item["extra"] = 1;
  CHECK_THROWS_AS(clip_from_manifest_item(item, dir), ValidationError);
  item.erase("extra");
  item["audio_embeddings"] = "missing.f32";
  CHECK_THROWS_AS(clip_from_manifest_item(item, dir), IoError);
  std::filesystem::remove_all(dir);
}
