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

#include "afca_lab/checkpoint.hpp"

#include <fstream>
#include <zlib.h>

#include "afca_lab/blob_io.hpp"
#include "afca_lab/errors.hpp"

namespace afca_lab {

namespace {

constexpr const char* kFormat = "afca-lab-weights/1";

std::vector<NamedTensor> train_state_tensors(const TrainState& s) {
  std::vector<NamedTensor> out;
  s.weights.visit([&](const std::string& name, const Matrix<float>& m) { out.push_back({name, m}); });
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.push_back({"adam.m/" + out[i].name, s.opt.m.at(i)});
  for (std::size_t i = 0; i < n; ++i) out.push_back({"adam.v/" + out[i].name, s.opt.v.at(i)});
  return out;
}

}  // namespace

std::uint32_t tensor_crc32(const Matrix<float>& m) {
  std::vector<unsigned char> bytes;
  append_f32_le(bytes, std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
  return static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

void write_weight_blob(const std::filesystem::path& dir, std::span<const NamedTensor> tensors,
                       const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  std::vector<unsigned char> bytes;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& t : tensors) {
    entries.push_back({{"name", t.name},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"dtype", "float32"},
                       {"offset", bytes.size()},
                       {"checksum", tensor_crc32(t.value)}});
    append_f32_le(bytes, std::span<const float>(t.value.data(), static_cast<std::size_t>(t.value.size())));
  }
  write_bytes(dir / "weights.bin", bytes);
  const nlohmann::json manifest{{"format", kFormat}, {"meta", meta}, {"tensors", entries}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<NamedTensor> read_weight_blob(const std::filesystem::path& dir, nlohmann::json* meta) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  std::vector<NamedTensor> out;
  try {
    const nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.at("format") != kFormat) throw IoError("unknown weight format");
    const std::vector<unsigned char> bytes = read_bytes(dir / "weights.bin");
    for (const auto& e : manifest.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      if (e.at("dtype") != "float32") throw IoError("tensor '" + name + "' is not float32");
      const auto shape = e.at("shape").get<std::vector<long>>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw IoError("bad shape for '" + name + "'");
      const std::size_t count = static_cast<std::size_t>(shape[0] * shape[1]);
      if (offset + 4 * count > bytes.size()) throw IoError("tensor '" + name + "' runs past weights.bin");
      const std::vector<float> values = decode_f32_le(
          std::span<const unsigned char>(bytes.data() + offset, 4 * count));
      NamedTensor t{name, Eigen::Map<const Matrix<float>>(values.data(), shape[0], shape[1])};
      if (tensor_crc32(t.value) != e.at("checksum").get<std::uint32_t>()) {
        throw IoError("checksum mismatch for tensor '" + name + "'");
      }
      out.push_back(std::move(t));
    }
    if (meta) *meta = manifest.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad weight manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, nlohmann::json meta) {
  meta["stage"] = state.stage;
  meta["step"] = state.step;
  meta["adam_updates"] = state.opt.updates;
  const std::vector<NamedTensor> tensors = train_state_tensors(state);
  write_weight_blob(dir, tensors, meta);
}

TrainState load_checkpoint(const std::filesystem::path& dir, const ToyDiTConfig& cfg,
                           nlohmann::json* meta_out) {
  nlohmann::json meta;
  const std::vector<NamedTensor> tensors = read_weight_blob(dir, &meta);
  Rng shapes(0);
  TrainState s = TrainState::init(cfg, shapes);
  std::vector<NamedTensor> expect = train_state_tensors(s);
  if (expect.size() != tensors.size()) {
    throw IoError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, config expects " +
                  std::to_string(expect.size()));
  }
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (expect[i].name != tensors[i].name || expect[i].value.rows() != tensors[i].value.rows() ||
        expect[i].value.cols() != tensors[i].value.cols()) {
      throw IoError("checkpoint tensor '" + tensors[i].name + "' does not match the config");
    }
  }
  std::size_t i = 0;
  s.weights.visit([&](const std::string&, Matrix<float>& m) { m = tensors[i++].value; });
  const std::size_t n = s.opt.m.size();
  for (std::size_t k = 0; k < n; ++k) {
    s.opt.m[k] = tensors[n + k].value;
    s.opt.v[k] = tensors[2 * n + k].value;
  }
  try {
    s.stage = meta.at("stage").get<int>();
    s.step = meta.at("step").get<long>();
    s.opt.updates = meta.at("adam_updates").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint meta: ") + e.what());
  }
  if (meta_out) *meta_out = meta;
  return s;
}

std::vector<NamedTensor> afca_tensors(const AfcaWeights<float>& w) {
  return {{"afca.w_q", w.w_q}, {"afca.w_k", w.w_k}, {"afca.w_v", w.w_v}, {"afca.w_o", w.w_o}};
}

AfcaWeights<float> afca_from_tensors(std::span<const NamedTensor> tensors, const AfcaDims& dims) {
  if (tensors.size() != 4) throw IoError("AFCA weights need 4 tensors");
  const char* names[] = {"afca.w_q", "afca.w_k", "afca.w_v", "afca.w_o"};
  for (int i = 0; i < 4; ++i) {
    if (tensors[i].name != names[i]) throw IoError("unexpected tensor '" + tensors[i].name + "'");
  }
  AfcaWeights<float> w{dims.heads, dims.head_dim_k, dims.head_dim_v,
                       tensors[0].value, tensors[1].value, tensors[2].value, tensors[3].value};
  try {
    w.validate();
  } catch (const Error& e) {
    throw IoError(std::string("AFCA weights: ") + e.what());
  }
  return w;
}

}  // namespace afca_lab
