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

// Random instance generators and check routines shared by the unit suites
// and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "afca_lab/afca.hpp"
#include "afca_lab/augmentation.hpp"
#include "afca_lab/toy_dit.hpp"
#include "oracles.hpp"

namespace afca_lab::testing {

struct AfcaInstance {
  GridShape grid;
  AfcaWeights<double> weights;
  VideoTokenGrid<double> hidden{GridShape{}, 1};
  std::vector<IdentityStream<double>> streams;
  std::vector<TokenMask> masks;
};

inline IdentityStream<double> random_stream(Rng& rng, const std::string& id, int audio_tokens,
                                            int face_tokens, int d_af) {
  IdentityStream<double> s;
  s.identity_id = id;
  s.audio = {id, random_normal<double>(rng, audio_tokens, d_af)};
  s.face = {id, random_normal<double>(rng, face_tokens, d_af)};
  s.pixel_mask = {{0, 0, 1, 1}, {1, 1}};
  return s;
}

inline TokenMask random_binary_mask(Rng& rng, int n) {
  std::bernoulli_distribution coin(0.5);
  TokenMask m = TokenMask::zeros(n);
  for (double& v : m.values) v = coin(rng) ? 1.0 : 0.0;
  return m;
}

// Random grid/weights/streams with the given identity count. Token counts
// respect N <= max_tokens and A <= max_audio.
inline AfcaInstance random_instance(Rng& rng, int identities, int d_model = 16,
                                    int max_tokens = 32, int max_audio = 16) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  AfcaInstance inst;
  const int max_frames = std::min(4, 1 + (max_audio / 4));
  inst.grid.latent_frames = uni(1, max_frames);
  const int per_frame = std::max(1, max_tokens / inst.grid.latent_frames);
  inst.grid.rows = uni(1, std::min(4, per_frame));
  inst.grid.cols = uni(1, std::max(1, std::min(4, per_frame / inst.grid.rows)));
  const int heads = uni(1, 2);
  const AfcaDims dims{d_model, uni(2, 8), heads, uni(1, 4), uni(1, 4)};
  inst.weights = AfcaWeights<double>::init(dims, rng);
  inst.hidden = VideoTokenGrid<double>(
      inst.grid, random_normal<double>(rng, inst.grid.num_tokens(), d_model));
  const int min_audio = 4 * (inst.grid.latent_frames - 1);
  for (int k = 0; k < identities; ++k) {
    const int a = uni(std::max(1, min_audio), std::max(std::max(1, min_audio), max_audio));
    inst.streams.push_back(random_stream(rng, "id" + std::to_string(k), a, uni(1, 2), dims.d_af));
    inst.masks.push_back(random_binary_mask(rng, inst.grid.num_tokens()));
  }
  return inst;
}

inline double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// masked_mhca recomputed with oracle::dense_attention.
inline Matrix<double> oracle_mhca(const VideoTokenGrid<double>& q, const Matrix<double>& keys,
                                  const Matrix<double>& values, int audio_tokens,
                                  const AfcaWeights<double>& w) {
  const GridShape g = q.shape();
  auto allowed = [&](int query, int key) {
    return oracle::temporal_allowed(query / (g.rows * g.cols), key, audio_tokens);
  };
  const oracle::Dense out =
      oracle::dense_attention(oracle::to_dense(q.tokens()), oracle::to_dense(keys),
                              oracle::to_dense(values), allowed, oracle::to_dense(w.w_q),
                              oracle::to_dense(w.w_o), w.heads, w.head_dim_k, w.head_dim_v);
  Matrix<double> m(out.size(), out[0].size());
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) m(i, j) = out[i][j];
  return m;
}

// Finite-difference check of every entry of each listed matrix. Returns the
// worst norm-wise relative error across the matrices.
struct GradTarget {
  std::string name;
  Matrix<double>* value;
  Matrix<double> analytic;
};

inline double gradient_check(std::vector<GradTarget>& targets, const std::function<double()>& loss,
                             double step = 1e-4, int max_entries = -1, Rng* pick = nullptr) {
  double worst = 0.0;
  for (auto& t : targets) {
    std::vector<long> idx(t.value->size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries > 0 && static_cast<long>(idx.size()) > max_entries && pick != nullptr) {
      std::shuffle(idx.begin(), idx.end(), *pick);
      idx.resize(max_entries);
    }
    std::vector<double> numeric;
    std::vector<double> analytic;
    for (long i : idx) {
      numeric.push_back(oracle::central_difference(loss, t.value->data()[i], step));
      analytic.push_back(t.analytic.data()[i]);
    }
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

// Gradient check of ||aggregate_identities(...)||^2 with respect to the four
// projections, the hidden state and every stream's audio and face tokens.
inline double afca_gradient_check(AfcaInstance inst) {
  ad::Tape<double> tape;
  const ad::AfcaVars w = ad::bind(tape, inst.weights, true);
  ad::Var hidden = tape.parameter(inst.hidden.tokens());
  std::vector<ad::Var> audio;
  std::vector<ad::Var> face;
  for (const auto& s : inst.streams) {
    audio.push_back(tape.parameter(s.audio.tokens));
    face.push_back(tape.parameter(s.face.tokens));
  }
  ad::Var out = ad::aggregate_identities(tape, hidden, inst.grid, std::span<const ad::Var>(audio),
                                         std::span<const ad::Var>(face),
                                         std::span<const TokenMask>(inst.masks), w);
  ad::Var loss = ad::sum_squares(tape, out);
  tape.backward(loss);

  std::vector<GradTarget> targets{
      {"W_Q", &inst.weights.w_q, tape.grad(w.attn.w_q)},
      {"W_K", &inst.weights.w_k, tape.grad(w.attn.w_k)},
      {"W_V", &inst.weights.w_v, tape.grad(w.attn.w_v)},
      {"W_O", &inst.weights.w_o, tape.grad(w.attn.w_o)},
      {"H", &inst.hidden.tokens(), tape.grad(hidden)},
  };
  for (std::size_t k = 0; k < inst.streams.size(); ++k) {
    targets.push_back({"audio", &inst.streams[k].audio.tokens, tape.grad(audio[k])});
    targets.push_back({"face", &inst.streams[k].face.tokens, tape.grad(face[k])});
  }
  auto numeric_loss = [&inst]() {
    const Matrix<double> h = aggregate_identities<double>(
        inst.hidden, std::span<const IdentityStream<double>>(inst.streams),
        std::span<const TokenMask>(inst.masks), inst.weights);
    return h.squaredNorm();
  };
  return gradient_check(targets, numeric_loss);
}

// Small model config for double-precision checks: N = 16 tokens.
inline ToyDiTConfig toy_check_config() {
  ToyDiTConfig cfg;
  cfg.depth = 2;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_af = 4;
  cfg.latent_frames = 2;
  cfg.latent_channels = 3;
  cfg.text_tokens = 5;
  return cfg;
}

inline ModelInputs<double> random_model_inputs(Rng& rng, const ToyDiTConfig& cfg, int identities,
                                               GridShape grid = {2, 2, 4}) {
  ModelInputs<double> in;
  in.video = VideoTokenGrid<double>(grid, random_normal<double>(rng, grid.num_tokens(),
                                                                cfg.latent_channels));
  in.text = random_normal<double>(rng, cfg.text_tokens, cfg.d_model);
  in.ref = random_normal<double>(rng, std::max(1, identities), cfg.d_model);
  const int audio = 4 * grid.latent_frames;
  for (int k = 0; k < identities; ++k) {
    in.streams.push_back(random_stream(rng, "id" + std::to_string(k), audio, 1, cfg.d_af));
    in.token_masks.push_back(random_binary_mask(rng, grid.num_tokens()));
  }
  return in;
}

// Gradient check of MSE(predict_noise, target) through the whole model, with
// respect to every weight tensor (up to max_entries sampled entries each)
// and the video, text, reference, audio and face inputs.
inline double toy_gradient_check(const ToyDiTConfig& cfg, Rng& rng, int identities,
                                 int max_entries = 12) {
  ToyDiTWeights<double> w = ToyDiTWeights<double>::init(cfg, rng);
  ModelInputs<double> in = random_model_inputs(rng, cfg, identities);
  const Matrix<double> target = random_normal<double>(rng, in.grid().num_tokens(), cfg.latent_channels);
  const int t = std::uniform_int_distribution<int>(0, cfg.diffusion_steps - 1)(rng);

  ad::Tape<double> tape;
  const ad::ModelVars wv = ad::bind(tape, w, true);
  const ad::InputVars iv = ad::bind(tape, in, true);
  ad::Var loss = ad::mse(tape, ad::model_forward(tape, wv, iv, in.grid(),
                                                 std::span<const TokenMask>(in.token_masks), t),
                         target);
  tape.backward(loss);

  std::vector<GradTarget> targets;
  std::size_t i = 0;
  w.visit([&](const std::string& name, Matrix<double>& m) {
    targets.push_back({name, &m, tape.grad(wv.flat[i++])});
  });
  targets.push_back({"video", &in.video.tokens(), tape.grad(iv.video)});
  targets.push_back({"text", &in.text, tape.grad(iv.text)});
  targets.push_back({"ref", &in.ref, tape.grad(iv.ref)});
  for (std::size_t k = 0; k < in.streams.size(); ++k) {
    targets.push_back({"audio", &in.streams[k].audio.tokens, tape.grad(iv.audio[k])});
    targets.push_back({"face", &in.streams[k].face.tokens, tape.grad(iv.face[k])});
  }
  auto numeric = [&]() {
    const Matrix<double> p = predict_noise(in, w, t);
    return (p - target).squaredNorm() / static_cast<double>(p.size());
  };
  return gradient_check(targets, numeric, 1e-4, max_entries, &rng);
}

// Eight encoded samples: four cropped single-speaker clips and four
// two-speaker clips.
inline std::vector<TrainingSample> fixed_training_set(const ToyDiTConfig& cfg, std::uint64_t seed) {
  SyntheticEncoder enc{seed, cfg.d_model};
  Rng crop = make_rng(seed, "crop");
  std::vector<TrainingSample> set;
  for (int i = 0; i < 8; ++i) {
    const ClipSample c =
        i < 4 ? crop_for_training(synthetic_single_clip(seed, "s" + std::to_string(i), cfg), crop)
              : synthetic_multi_clip(seed, "m" + std::to_string(i), cfg);
    set.push_back(make_training_sample(c, enc, cfg));
  }
  return set;
}

}  // namespace afca_lab::testing
