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

// A small diffusion transformer with AFCA conditioning.
//
// Each block is pre-norm self attention, then text and reference cross
// attention plus the summed per-identity AFCA terms in one residual update,
// then an FFN. Everything is written against the autodiff tape so the same
// code trains in float and is gradient-checked in double.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afca_lab/afca.hpp"
#include "afca_lab/augmentation.hpp"
#include "afca_lab/mask_pipeline.hpp"
#include "afca_lab/rng.hpp"
#include "json.hpp"

namespace afca_lab {

struct ToyDiTConfig {
  int depth = 2;
  int d_model = 16;
  int heads = 2;
  int d_af = 8;
  int ffn_mult = 2;
  PatchSize patch{240, 208};
  int latent_frames = 2;
  int latent_channels = 4;
  int text_tokens = 512;
  int diffusion_steps = 50;
  int mask_dilation_px = 8;
  double lr_stage1 = 2e-5;
  double lr_stage2 = 5e-6;
  int stage1_steps = 200;
  int stage2_steps = 50;
  int warmup_steps = 10;
  int batch_size = 4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double cfg_scale = 4.0;

  // Throws ValidationError naming the first bad field.
  void validate() const;
};

// Unknown keys are rejected; missing keys keep their defaults.
ToyDiTConfig toy_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ToyDiTConfig& cfg);

// Seeded stand-in for frozen pretrained encoders: an embedding is a
// Gaussian draw keyed by (seed, content).
struct SyntheticEncoder {
  std::uint64_t seed = 0;
  int out_dim = 16;

  Matrix<float> embed(std::string_view content, int rows = 1) const;
  Matrix<float> embed(std::string_view content, int rows, int dim) const;
  // Whitespace tokens, one row each, then padded with the "<pad>" row or
  // truncated to exactly length rows.
  Matrix<float> embed_text(std::string_view text, int length) const;
};

template <typename T>
struct ModelInputs {
  VideoTokenGrid<T> video{GridShape{1, 1, 1}, 1};  // (N, latent_channels)
  Matrix<T> text;                                  // (L_text, d_model)
  Matrix<T> ref;                                   // (L_ref, d_model)
  std::vector<IdentityStream<T>> streams;
  std::vector<TokenMask> token_masks;  // token_masks[k] gates streams[k]

  const GridShape& grid() const { return video.shape(); }
  template <typename U>
  ModelInputs<U> cast() const;
};

// Text, reference rows (one per identity), per-identity audio tokens (the
// first min(A, 4 T_lat) audio rows), one face token per identity and token
// masks from the dilated global face boxes. The video slot is zero.
ModelInputs<float> encode_inputs(const ClipSample& clip, const SyntheticEncoder& enc,
                                 const ToyDiTConfig& cfg);

// Target latents: a per-clip background plus, inside each identity's mask,
// a fixed projection of that identity's audio window for the frame.
Matrix<float> synthetic_clean_latents(const ModelInputs<float>& inputs, const std::string& clip_id,
                                      const SyntheticEncoder& enc, const ToyDiTConfig& cfg);

// Zeroes text and every audio token. Face tokens and masks are kept.
template <typename T>
ModelInputs<T> unconditional(const ModelInputs<T>& inputs);

template <typename T>
struct BlockWeights {
  AfcaWeights<T> self_attn;
  AfcaWeights<T> text_attn;
  AfcaWeights<T> ref_attn;
  AfcaWeights<T> afca;  // one instance shared by every identity
  Matrix<T> ffn_w1;
  Matrix<T> ffn_b1;
  Matrix<T> ffn_w2;
  Matrix<T> ffn_b2;
};

template <typename T>
struct ToyDiTWeights {
  Matrix<T> in_w, in_b;      // latent_channels -> d_model
  Matrix<T> time_w, time_b;  // sinusoid -> d_model
  std::vector<BlockWeights<T>> blocks;
  Matrix<T> out_w, out_b;  // d_model -> latent_channels

  static ToyDiTWeights init(const ToyDiTConfig& cfg, Rng& rng);

  // Fixed traversal order used by the optimizer and checkpoints.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  std::size_t parameter_count() const;

  template <typename U>
  ToyDiTWeights<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& w, F& f) {
    f("in.w", w.in_w);
    f("in.b", w.in_b);
    f("time.w", w.time_w);
    f("time.b", w.time_b);
    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
      auto& blk = w.blocks[b];
      const std::string p = "blocks." + std::to_string(b) + ".";
      for (auto [name, attn] : {std::pair{"self_attn", &blk.self_attn}, std::pair{"text_attn", &blk.text_attn},
                                std::pair{"ref_attn", &blk.ref_attn}, std::pair{"afca", &blk.afca}}) {
        f(p + name + ".w_q", attn->w_q);
        f(p + name + ".w_k", attn->w_k);
        f(p + name + ".w_v", attn->w_v);
        f(p + name + ".w_o", attn->w_o);
      }
      f(p + "ffn.w1", blk.ffn_w1);
      f(p + "ffn.b1", blk.ffn_b1);
      f(p + "ffn.w2", blk.ffn_w2);
      f(p + "ffn.b2", blk.ffn_b2);
    }
    f("out.w", w.out_w);
    f("out.b", w.out_b);
  }
};

namespace ad {

struct BlockVars {
  AttentionVars self_attn, text_attn, ref_attn;
  AfcaVars afca;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct ModelVars {
  Var in_w, in_b, time_w, time_b, out_w, out_b;
  std::vector<BlockVars> blocks;
  std::vector<Var> flat;  // visit order
};

template <typename T>
ModelVars bind(Tape<T>& tape, const ToyDiTWeights<T>& w, bool trainable);

struct InputVars {
  Var video, text, ref;
  std::vector<Var> audio, face;
};

template <typename T>
InputVars bind(Tape<T>& tape, const ModelInputs<T>& in, bool trainable);

// One block on hidden state h (N, d_model).
template <typename T>
Var block_forward(Tape<T>& tape, Var h, const InputVars& in, const GridShape& grid,
                  std::span<const TokenMask> masks, const BlockVars& w);

// Predicted noise (N, latent_channels) for the latent in in.video.
template <typename T>
Var model_forward(Tape<T>& tape, const ModelVars& w, const InputVars& in, const GridShape& grid,
                  std::span<const TokenMask> masks, int timestep);

}  // namespace ad

// Row t of the sinusoidal timestep table, width dim.
template <typename T>
Matrix<T> timestep_embedding(int timestep, int dim);

// Eval-mode block on a plain matrix.
template <typename T>
Matrix<T> block_forward(const Matrix<T>& h, const ModelInputs<T>& inputs,
                        const ToyDiTWeights<T>& w, int block_idx);

// Each identity's gated AFCA term inside block block_idx for block input h.
template <typename T>
std::vector<Matrix<T>> afca_contributions(const Matrix<T>& h, const ModelInputs<T>& inputs,
                                          const ToyDiTWeights<T>& w, int block_idx);

template <typename T>
Matrix<T> predict_noise(const ModelInputs<T>& inputs, const ToyDiTWeights<T>& w, int timestep);

// Linear beta schedule stretched to the step count: beta runs from
// 1e-4 * 1000/steps to 0.02 * 1000/steps.
struct NoiseSchedule {
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(int steps);
  int steps() const { return static_cast<int>(alpha_bar.size()); }
};

struct TrainingSample {
  std::string id;
  ModelInputs<float> inputs;
  Matrix<float> clean;  // (N, latent_channels)
};

TrainingSample make_training_sample(const ClipSample& clip, const SyntheticEncoder& enc,
                                    const ToyDiTConfig& cfg);

struct AdamState {
  std::vector<Matrix<float>> m, v;
  long updates = 0;
};

struct TrainState {
  ToyDiTWeights<float> weights;
  AdamState opt;
  long step = 0;
  int stage = 1;

  static TrainState init(const ToyDiTConfig& cfg, Rng& rng);
};

struct NoiseDraw {
  int timestep = 0;
  Matrix<float> noise;
};

// Uniform timestep and standard normal noise per sample.
std::vector<NoiseDraw> draw_noise(std::span<const TrainingSample> batch, int steps, Rng& rng);

// Mean over the batch of MSE(predicted noise, noise), followed by one AdamW
// update at learning rate lr. Throws NumericalError (weights untouched)
// when the loss or a gradient is not finite.
double training_step(std::span<const TrainingSample> batch, std::span<const NoiseDraw> draws,
                     TrainState& state, double lr, const ToyDiTConfig& cfg);
double training_step(std::span<const TrainingSample> batch, TrainState& state, Rng& rng, double lr,
                     const ToyDiTConfig& cfg);

struct StageSpec {
  int stage = 1;
  double lr = 0.0;
  int steps = 0;
  int warmup_steps = 0;
  bool mixed_pairing = false;  // batches go through select_batch_mode
  int min_identities = 1;
};

struct StagePlan {
  std::vector<StageSpec> stages;

  // Effective rate at step_in_stage, linear warm-up included.
  double lr_at(std::size_t stage_idx, int step_in_stage) const;
};

StagePlan two_stage_schedule(const ToyDiTConfig& cfg);

// Throws ContractError if a sample has fewer than min_identities streams.
void require_min_identities(std::span<const ClipSample> batch, int min_identities);

// (1 - s) * uncond + s * cond.
template <typename T>
Matrix<T> guided_prediction(const Matrix<T>& uncond, const Matrix<T>& cond, double scale);

// Deterministic DDIM from Gaussian noise drawn with rng. cfg_sample mixes
// the conditional and unconditional predictions at every step; sample uses
// the conditional branch only.
Matrix<float> cfg_sample(const ModelInputs<float>& inputs, const ToyDiTWeights<float>& w,
                         double cfg_scale, Rng& rng, int steps);
Matrix<float> sample(const ModelInputs<float>& inputs, const ToyDiTWeights<float>& w, Rng& rng,
                     int steps);

// Synthetic corpora for the toy runs. Single clips are 720x1280 with one
// face; multi clips are 480x832 with two faces, left and right.
ClipSample synthetic_single_clip(std::uint64_t seed, const std::string& clip_id,
                                 const ToyDiTConfig& cfg);
ClipSample synthetic_multi_clip(std::uint64_t seed, const std::string& clip_id,
                                const ToyDiTConfig& cfg);

template <typename T>
template <typename U>
ModelInputs<U> ModelInputs<T>::cast() const {
  ModelInputs<U> out;
  out.video = VideoTokenGrid<U>(video.shape(), video.tokens().template cast<U>());
  out.text = text.template cast<U>();
  out.ref = ref.template cast<U>();
  for (const auto& s : streams) {
    out.streams.push_back({s.identity_id,
                           {s.audio.identity_id, s.audio.tokens.template cast<U>()},
                           {s.face.identity_id, s.face.tokens.template cast<U>()},
                           s.pixel_mask});
  }
  out.token_masks = token_masks;
  return out;
}

template <typename T>
template <typename U>
ToyDiTWeights<U> ToyDiTWeights<T>::cast() const {
  ToyDiTWeights<U> out;
  out.in_w = in_w.template cast<U>();
  out.in_b = in_b.template cast<U>();
  out.time_w = time_w.template cast<U>();
  out.time_b = time_b.template cast<U>();
  for (const auto& b : blocks) {
    out.blocks.push_back({b.self_attn.template cast<U>(), b.text_attn.template cast<U>(),
                          b.ref_attn.template cast<U>(), b.afca.template cast<U>(),
                          b.ffn_w1.template cast<U>(), b.ffn_b1.template cast<U>(),
                          b.ffn_w2.template cast<U>(), b.ffn_b2.template cast<U>()});
  }
  out.out_w = out_w.template cast<U>();
  out.out_b = out_b.template cast<U>();
  return out;
}

}  // namespace afca_lab
