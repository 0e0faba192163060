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

#include "afca_lab/toy_dit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "afca_lab/errors.hpp"

namespace afca_lab {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("toy config: " + what);
}

int afca_audio_rows(long available, int latent_frames) {
  return static_cast<int>(std::min<long>(available, long{kAudioTokensPerLatentFrame} * latent_frames));
}

// Audio rows seen by latent frame t, clipped to the available rows.
std::pair<int, int> audio_window(int t, int audio_tokens) {
  if (t == 0) return {0, audio_tokens};
  return {std::min(kAudioTokensPerLatentFrame * (t - 1), audio_tokens),
          std::min(kAudioTokensPerLatentFrame * t, audio_tokens)};
}

}  // namespace

void ToyDiTConfig::validate() const {
  require(depth >= 1, "depth must be >= 1");
  require(d_model >= 1, "d_model must be >= 1");
  require(heads >= 1 && d_model % heads == 0, "heads must divide d_model");
  require(d_af >= 1, "d_af must be >= 1");
  require(ffn_mult >= 1, "ffn_mult must be >= 1");
  require(patch.height >= 1 && patch.width >= 1, "patch must be positive");
  require(latent_frames >= 1, "latent_frames must be >= 1");
  require(latent_channels >= 1, "latent_channels must be >= 1");
  require(text_tokens >= 1, "text_tokens must be >= 1");
  require(diffusion_steps >= 1, "diffusion_steps must be >= 1");
  require(mask_dilation_px >= 0, "mask_dilation_px must be >= 0");
  require(lr_stage1 > 0 && lr_stage2 > 0, "learning rates must be positive");
  require(stage1_steps >= 0 && stage2_steps >= 0, "stage step counts must be >= 0");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "adam betas must lie in [0, 1)");
  require(adam_eps > 0, "adam_eps must be positive");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(cfg_scale >= 0 && std::isfinite(cfg_scale), "cfg_scale must be >= 0");
}

nlohmann::json to_json(const ToyDiTConfig& c) {
  return {{"depth", c.depth},
          {"d_model", c.d_model},
          {"heads", c.heads},
          {"d_af", c.d_af},
          {"ffn_mult", c.ffn_mult},
          {"patch", {c.patch.height, c.patch.width}},
          {"latent_frames", c.latent_frames},
          {"latent_channels", c.latent_channels},
          {"text_tokens", c.text_tokens},
          {"diffusion_steps", c.diffusion_steps},
          {"mask_dilation_px", c.mask_dilation_px},
          {"lr_stage1", c.lr_stage1},
          {"lr_stage2", c.lr_stage2},
          {"stage1_steps", c.stage1_steps},
          {"stage2_steps", c.stage2_steps},
          {"warmup_steps", c.warmup_steps},
          {"batch_size", c.batch_size},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"cfg_scale", c.cfg_scale}};
}

ToyDiTConfig toy_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("toy config must be an object");
  ToyDiTConfig c;
  const nlohmann::json known = to_json(c);
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ValidationError("toy config has unknown key '" + k + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("depth", c.depth);
    get("d_model", c.d_model);
    get("heads", c.heads);
    get("d_af", c.d_af);
    get("ffn_mult", c.ffn_mult);
    if (j.contains("patch")) {
      const auto p = j.at("patch").get<std::vector<int>>();
      if (p.size() != 2) throw ValidationError("patch must be [height, width]");
      c.patch = {p[0], p[1]};
    }
    get("latent_frames", c.latent_frames);
    get("latent_channels", c.latent_channels);
    get("text_tokens", c.text_tokens);
    get("diffusion_steps", c.diffusion_steps);
    get("mask_dilation_px", c.mask_dilation_px);
    get("lr_stage1", c.lr_stage1);
    get("lr_stage2", c.lr_stage2);
    get("stage1_steps", c.stage1_steps);
    get("stage2_steps", c.stage2_steps);
    get("warmup_steps", c.warmup_steps);
    get("batch_size", c.batch_size);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("weight_decay", c.weight_decay);
    get("cfg_scale", c.cfg_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("toy config: ") + e.what());
  }
  c.validate();
  return c;
}

Matrix<float> SyntheticEncoder::embed(std::string_view content, int rows) const {
  return embed(content, rows, out_dim);
}

Matrix<float> SyntheticEncoder::embed(std::string_view content, int rows, int dim) const {
  Rng rng = make_rng(seed, "embed/" + std::string(content));
  return random_normal<float>(rng, rows, dim);
}

Matrix<float> SyntheticEncoder::embed_text(std::string_view text, int length) const {
  std::istringstream in{std::string(text)};
  std::vector<std::string> words;
  for (std::string w; in >> w && static_cast<int>(words.size()) < length;) words.push_back(w);
  Matrix<float> out(length, out_dim);
  const Matrix<float> pad = embed("<pad>");
  for (int i = 0; i < length; ++i) {
    out.row(i) = i < static_cast<int>(words.size()) ? embed("tok:" + words[i]) : pad;
  }
  return out;
}

ModelInputs<float> encode_inputs(const ClipSample& clip, const SyntheticEncoder& enc,
                                 const ToyDiTConfig& cfg) {
  validate(clip);
  if (enc.out_dim != cfg.d_model) {
    throw ShapeError("encoder width " + std::to_string(enc.out_dim) + " differs from d_model " +
                     std::to_string(cfg.d_model));
  }
  ModelInputs<float> in;
  const GridShape grid = token_grid_for(clip.frame_dims, cfg.latent_frames, cfg.patch, true);
  in.video = VideoTokenGrid<float>(grid, cfg.latent_channels);
  in.text = enc.embed_text(clip.text, cfg.text_tokens);
  in.ref = Matrix<float>(static_cast<long>(clip.identity_streams.size()), cfg.d_model);
  for (std::size_t k = 0; k < clip.identity_streams.size(); ++k) {
    const ClipStream& s = clip.identity_streams[k];
    if (s.audio.cols() != cfg.d_af) {
      throw ShapeError("clip '" + clip.clip_id + "' audio width " + std::to_string(s.audio.cols()) +
                       " differs from d_af " + std::to_string(cfg.d_af));
    }
    in.ref.row(static_cast<long>(k)) = enc.embed("ref:" + s.identity_id);
    IdentityStream<float> stream;
    stream.identity_id = s.identity_id;
    stream.audio = {s.identity_id, s.audio.topRows(afca_audio_rows(s.audio.rows(), cfg.latent_frames))};
    stream.face = {s.identity_id, enc.embed("face:" + s.identity_id, 1, cfg.d_af)};
    stream.pixel_mask = dilate_bbox(global_face_bbox(s.face_track), cfg.mask_dilation_px);
    in.token_masks.push_back(
        token_mask_from_bbox(stream.pixel_mask, cfg.latent_frames, cfg.patch, true));
    in.streams.push_back(std::move(stream));
  }
  return in;
}

Matrix<float> synthetic_clean_latents(const ModelInputs<float>& in, const std::string& clip_id,
                                      const SyntheticEncoder& enc, const ToyDiTConfig& cfg) {
  const GridShape& g = in.grid();
  Matrix<float> x = 0.5f * enc.embed("latent:" + clip_id, g.num_tokens(), cfg.latent_channels);
  const Matrix<float> proj = enc.embed("latent-proj", cfg.d_af, cfg.latent_channels) /
                             std::sqrt(static_cast<float>(cfg.d_af));
  for (std::size_t k = 0; k < in.streams.size(); ++k) {
    const Matrix<float>& audio = in.streams[k].audio.tokens;
    const int a = static_cast<int>(audio.rows());
    for (int i = 0; i < g.num_tokens(); ++i) {
      const double m = in.token_masks[k].values[i];
      if (m == 0.0) continue;
      const auto [lo, hi] = audio_window(g.frame_of(i), a);
      if (hi <= lo) continue;
      const Matrix<float> mean = audio.middleRows(lo, hi - lo).colwise().mean();
      x.row(i) += static_cast<float>(m) * (mean * proj);
    }
  }
  return x;
}

template <typename T>
ModelInputs<T> unconditional(const ModelInputs<T>& inputs) {
  ModelInputs<T> out = inputs;
  out.text.setZero();
  for (auto& s : out.streams) s.audio.tokens.setZero();
  return out;
}

template <typename T>
ToyDiTWeights<T> ToyDiTWeights<T>::init(const ToyDiTConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.d_model;
  const int hd = d / cfg.heads;
  const int c = cfg.latent_channels;
  const int f = d * cfg.ffn_mult;
  auto gauss = [&](int r, int cols) { return random_normal<T>(rng, r, cols, 1.0 / std::sqrt(double(r))); };
  ToyDiTWeights w;
  w.in_w = gauss(c, d);
  w.in_b = Matrix<T>::Zero(1, d);
  w.time_w = gauss(d, d);
  w.time_b = Matrix<T>::Zero(1, d);
  for (int b = 0; b < cfg.depth; ++b) {
    BlockWeights<T> blk;
    blk.self_attn = AfcaWeights<T>::init({d, d, cfg.heads, hd, hd}, rng);
    blk.text_attn = AfcaWeights<T>::init({d, d, cfg.heads, hd, hd}, rng);
    blk.ref_attn = AfcaWeights<T>::init({d, d, cfg.heads, hd, hd}, rng);
    blk.afca = AfcaWeights<T>::init({d, cfg.d_af, cfg.heads, hd, hd}, rng);
    blk.ffn_w1 = gauss(d, f);
    blk.ffn_b1 = Matrix<T>::Zero(1, f);
    blk.ffn_w2 = gauss(f, d);
    blk.ffn_b2 = Matrix<T>::Zero(1, d);
    w.blocks.push_back(std::move(blk));
  }
  w.out_w = gauss(d, c);
  w.out_b = Matrix<T>::Zero(1, c);
  return w;
}

template <typename T>
std::size_t ToyDiTWeights<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

namespace ad {

namespace {

constexpr std::size_t kHeadParams = 4;
constexpr std::size_t kBlockParams = 20;

template <typename T>
AttentionVars attention_at(const std::vector<Var>& flat, std::size_t at, const AfcaWeights<T>& w) {
  return {flat[at], flat[at + 1], flat[at + 2], flat[at + 3], w.heads, w.head_dim_k, w.head_dim_v};
}

}  // namespace

template <typename T>
ModelVars bind(Tape<T>& tape, const ToyDiTWeights<T>& w, bool trainable) {
  ModelVars v;
  w.visit([&](const std::string&, const Matrix<T>& m) {
    v.flat.push_back(trainable ? tape.parameter(m) : tape.constant(m));
  });
  v.in_w = v.flat[0];
  v.in_b = v.flat[1];
  v.time_w = v.flat[2];
  v.time_b = v.flat[3];
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const std::size_t base = kHeadParams + b * kBlockParams;
    const BlockWeights<T>& blk = w.blocks[b];
    BlockVars bv;
    bv.self_attn = attention_at(v.flat, base, blk.self_attn);
    bv.text_attn = attention_at(v.flat, base + 4, blk.text_attn);
    bv.ref_attn = attention_at(v.flat, base + 8, blk.ref_attn);
    bv.afca = {attention_at(v.flat, base + 12, blk.afca)};
    bv.ffn_w1 = v.flat[base + 16];
    bv.ffn_b1 = v.flat[base + 17];
    bv.ffn_w2 = v.flat[base + 18];
    bv.ffn_b2 = v.flat[base + 19];
    v.blocks.push_back(bv);
  }
  v.out_w = v.flat[v.flat.size() - 2];
  v.out_b = v.flat[v.flat.size() - 1];
  return v;
}

template <typename T>
InputVars bind(Tape<T>& tape, const ModelInputs<T>& in, bool trainable) {
  auto put = [&](const Matrix<T>& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  InputVars v{put(in.video.tokens()), put(in.text), put(in.ref), {}, {}};
  for (const auto& s : in.streams) {
    v.audio.push_back(put(s.audio.tokens));
    v.face.push_back(put(s.face.tokens));
  }
  return v;
}

template <typename T>
Var block_forward(Tape<T>& tape, Var h, const InputVars& in, const GridShape& grid,
                  std::span<const TokenMask> masks, const BlockVars& w) {
  if (masks.size() != in.audio.size() || in.audio.size() != in.face.size()) {
    throw ShapeError("block_forward: " + std::to_string(in.audio.size()) + " streams, " +
                     std::to_string(masks.size()) + " token masks");
  }
  if (tape.value(h).rows() != grid.num_tokens()) {
    throw ShapeError("block_forward: hidden has " + std::to_string(tape.value(h).rows()) +
                     " rows, grid has " + std::to_string(grid.num_tokens()) + " tokens");
  }
  const std::span<const unsigned char> all;
  Var a = layer_norm(tape, h);
  h = add(tape, h, cross_attention(tape, a, a, all, w.self_attn));

  Var b = layer_norm(tape, h);
  std::vector<Var> terms{h, cross_attention(tape, b, in.text, all, w.text_attn),
                         cross_attention(tape, b, in.ref, all, w.ref_attn)};
  for (std::size_t k = 0; k < masks.size(); ++k) {
    terms.push_back(afca_term(tape, h, grid, in.audio[k], in.face[k], masks[k], w.afca));
  }
  h = add_all(tape, std::span<const Var>(terms));

  Var c = layer_norm(tape, h);
  Var hidden = silu(tape, add_row(tape, matmul(tape, c, w.ffn_w1), w.ffn_b1));
  return add(tape, h, add_row(tape, matmul(tape, hidden, w.ffn_w2), w.ffn_b2));
}

template <typename T>
Var model_forward(Tape<T>& tape, const ModelVars& w, const InputVars& in, const GridShape& grid,
                  std::span<const TokenMask> masks, int timestep) {
  const long d = tape.value(w.time_w).rows();
  Var h = add_row(tape, matmul(tape, in.video, w.in_w), w.in_b);
  Var t = tape.constant(timestep_embedding<T>(timestep, static_cast<int>(d)));
  Var temb = silu(tape, add_row(tape, matmul(tape, t, w.time_w), w.time_b));
  h = add_row(tape, h, temb);
  for (const BlockVars& b : w.blocks) h = block_forward(tape, h, in, grid, masks, b);
  return add_row(tape, matmul(tape, layer_norm(tape, h), w.out_w), w.out_b);
}

}  // namespace ad

template <typename T>
Matrix<T> timestep_embedding(int timestep, int dim) {
  Matrix<T> row = Matrix<T>::Zero(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    row(0, i) = static_cast<T>(std::sin(timestep * freq));
    row(0, half + i) = static_cast<T>(std::cos(timestep * freq));
  }
  return row;
}

template <typename T>
Matrix<T> block_forward(const Matrix<T>& h, const ModelInputs<T>& inputs,
                        const ToyDiTWeights<T>& w, int block_idx) {
  if (block_idx < 0 || block_idx >= static_cast<int>(w.blocks.size())) {
    throw ValidationError("block index " + std::to_string(block_idx) + " out of range");
  }
  ad::Tape<T> tape;
  const ad::ModelVars vars = ad::bind(tape, w, false);
  const ad::InputVars in = ad::bind(tape, inputs, false);
  ad::Var out = ad::block_forward(tape, tape.constant(h), in, inputs.grid(),
                                  std::span<const TokenMask>(inputs.token_masks),
                                  vars.blocks[block_idx]);
  return tape.value(out);
}

template <typename T>
std::vector<Matrix<T>> afca_contributions(const Matrix<T>& h, const ModelInputs<T>& inputs,
                                          const ToyDiTWeights<T>& w, int block_idx) {
  if (block_idx < 0 || block_idx >= static_cast<int>(w.blocks.size())) {
    throw ValidationError("block index " + std::to_string(block_idx) + " out of range");
  }
  if (inputs.token_masks.size() != inputs.streams.size()) {
    throw ShapeError("afca_contributions: one token mask per stream");
  }
  ad::Tape<T> tape;
  const ad::ModelVars vars = ad::bind(tape, w, false);
  const ad::InputVars in = ad::bind(tape, inputs, false);
  const ad::BlockVars& b = vars.blocks[block_idx];
  ad::Var x = tape.constant(h);
  ad::Var a = ad::layer_norm(tape, x);
  x = ad::add(tape, x, ad::cross_attention(tape, a, a, {}, b.self_attn));
  std::vector<Matrix<T>> out;
  for (std::size_t k = 0; k < inputs.streams.size(); ++k) {
    out.push_back(tape.value(ad::afca_term(tape, x, inputs.grid(), in.audio[k], in.face[k],
                                           inputs.token_masks[k], b.afca)));
  }
  return out;
}

template <typename T>
Matrix<T> predict_noise(const ModelInputs<T>& inputs, const ToyDiTWeights<T>& w, int timestep) {
  ad::Tape<T> tape;
  const ad::ModelVars vars = ad::bind(tape, w, false);
  const ad::InputVars in = ad::bind(tape, inputs, false);
  return tape.value(ad::model_forward(tape, vars, in, inputs.grid(),
                                      std::span<const TokenMask>(inputs.token_masks), timestep));
}

NoiseSchedule NoiseSchedule::linear(int steps) {
  if (steps < 1) throw ValidationError("noise schedule needs at least one step");
  const double stretch = 1000.0 / steps;
  const double b0 = 1e-4 * stretch;
  const double b1 = 0.02 * stretch;
  NoiseSchedule s;
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double beta = steps == 1 ? b0 : b0 + (b1 - b0) * i / (steps - 1);
    prod *= 1.0 - std::min(beta, 0.999);
    s.alpha_bar.push_back(prod);
  }
  return s;
}

TrainingSample make_training_sample(const ClipSample& clip, const SyntheticEncoder& enc,
                                    const ToyDiTConfig& cfg) {
  TrainingSample s;
  s.id = clip.clip_id;
  s.inputs = encode_inputs(clip, enc, cfg);
  s.clean = synthetic_clean_latents(s.inputs, clip.clip_id, enc, cfg);
  return s;
}

TrainState TrainState::init(const ToyDiTConfig& cfg, Rng& rng) {
  TrainState s;
  s.weights = ToyDiTWeights<float>::init(cfg, rng);
  s.weights.visit([&](const std::string&, const Matrix<float>& m) {
    s.opt.m.push_back(Matrix<float>::Zero(m.rows(), m.cols()));
    s.opt.v.push_back(Matrix<float>::Zero(m.rows(), m.cols()));
  });
  return s;
}

std::vector<NoiseDraw> draw_noise(std::span<const TrainingSample> batch, int steps, Rng& rng) {
  std::vector<NoiseDraw> out;
  for (const auto& s : batch) {
    NoiseDraw d;
    d.timestep = std::uniform_int_distribution<int>(0, steps - 1)(rng);
    d.noise = random_normal<float>(rng, s.clean.rows(), s.clean.cols());
    out.push_back(std::move(d));
  }
  return out;
}

double training_step(std::span<const TrainingSample> batch, std::span<const NoiseDraw> draws,
                     TrainState& state, double lr, const ToyDiTConfig& cfg) {
  if (batch.empty()) throw ValidationError("training_step: empty batch");
  if (draws.size() != batch.size()) throw ShapeError("training_step: one noise draw per sample");
  const NoiseSchedule sched = NoiseSchedule::linear(cfg.diffusion_steps);
  ad::Tape<float> tape;
  const ad::ModelVars vars = ad::bind(tape, state.weights, true);
  std::vector<ad::Var> losses;
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TrainingSample& s = batch[k];
    const NoiseDraw& d = draws[k];
    if (d.timestep < 0 || d.timestep >= sched.steps()) throw ValidationError("timestep out of range");
    if (d.noise.rows() != s.clean.rows() || d.noise.cols() != s.clean.cols()) {
      throw ShapeError("noise shape differs from the clean latent of '" + s.id + "'");
    }
    const double ab = sched.alpha_bar[d.timestep];
    ModelInputs<float> in = s.inputs;
    in.video.tokens() = static_cast<float>(std::sqrt(ab)) * s.clean +
                        static_cast<float>(std::sqrt(1.0 - ab)) * d.noise;
    const ad::InputVars iv = ad::bind(tape, in, false);
    ad::Var pred = ad::model_forward(tape, vars, iv, in.grid(),
                                     std::span<const TokenMask>(in.token_masks), d.timestep);
    losses.push_back(ad::scale(tape, ad::mse(tape, pred, d.noise), inv_b));
  }
  ad::Var total = ad::add_all(tape, std::span<const ad::Var>(losses));
  const double loss = tape.value(total)(0, 0);

  auto diagnose = [&](const std::string& what) {
    std::ostringstream msg;
    msg << what << " at step " << state.step << " (stage " << state.stage << "): loss=" << loss
        << ", samples=[";
    for (std::size_t k = 0; k < batch.size(); ++k) {
      msg << (k ? ", " : "") << batch[k].id << "@t" << draws[k].timestep;
    }
    msg << "]";
    return NumericalError(msg.str());
  };
  if (!std::isfinite(loss)) throw diagnose("non-finite loss");
  tape.backward(total);

  std::vector<Matrix<float>> grads;
  for (ad::Var v : vars.flat) {
    grads.push_back(tape.grad(v));
    if (!grads.back().allFinite()) throw diagnose("non-finite gradient");
  }

  AdamState& opt = state.opt;
  ++opt.updates;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const float c1 = static_cast<float>(1.0 - std::pow(b1, static_cast<double>(opt.updates)));
  const float c2 = static_cast<float>(1.0 - std::pow(b2, static_cast<double>(opt.updates)));
  const float flr = static_cast<float>(lr);
  const float wd = static_cast<float>(cfg.weight_decay);
  std::size_t i = 0;
  state.weights.visit([&](const std::string&, Matrix<float>& p) {
    const Matrix<float>& g = grads[i];
    Matrix<float>& m = opt.m[i];
    Matrix<float>& v = opt.v[i];
    m = static_cast<float>(b1) * m + static_cast<float>(1.0 - b1) * g;
    v = static_cast<float>(b2) * v + static_cast<float>(1.0 - b2) * g.cwiseProduct(g);
    const auto step = (m.array() / c1) / ((v.array() / c2).sqrt() + static_cast<float>(cfg.adam_eps));
    p.array() -= flr * (step + wd * p.array());
    ++i;
  });
  ++state.step;
  return loss;
}

double training_step(std::span<const TrainingSample> batch, TrainState& state, Rng& rng, double lr,
                     const ToyDiTConfig& cfg) {
  const std::vector<NoiseDraw> draws = draw_noise(batch, cfg.diffusion_steps, rng);
  return training_step(batch, draws, state, lr, cfg);
}

double StagePlan::lr_at(std::size_t stage_idx, int step_in_stage) const {
  const StageSpec& s = stages.at(stage_idx);
  if (s.warmup_steps > 0 && step_in_stage < s.warmup_steps) {
    return s.lr * (step_in_stage + 1) / s.warmup_steps;
  }
  return s.lr;
}

StagePlan two_stage_schedule(const ToyDiTConfig& cfg) {
  cfg.validate();
  StagePlan plan;
  plan.stages.push_back({1, cfg.lr_stage1, cfg.stage1_steps, 0, true, 1});
  plan.stages.push_back({2, cfg.lr_stage2, cfg.stage2_steps, cfg.warmup_steps, false, 2});
  return plan;
}

void require_min_identities(std::span<const ClipSample> batch, int min_identities) {
  for (const auto& c : batch) {
    if (static_cast<int>(c.identity_streams.size()) < min_identities) {
      throw ContractError("sample '" + c.clip_id + "' has " +
                          std::to_string(c.identity_streams.size()) +
                          " identity stream(s); this stage needs at least " +
                          std::to_string(min_identities));
    }
  }
}

template <typename T>
Matrix<T> guided_prediction(const Matrix<T>& uncond, const Matrix<T>& cond, double scale) {
  return static_cast<T>(1.0 - scale) * uncond + static_cast<T>(scale) * cond;
}

namespace {

template <typename Predict>
Matrix<float> ddim(const ModelInputs<float>& inputs, Rng& rng, int steps, Predict&& predict) {
  const NoiseSchedule sched = NoiseSchedule::linear(steps);
  Matrix<float> x = random_normal<float>(rng, inputs.grid().num_tokens(), inputs.video.channels());
  for (int t = steps - 1; t >= 0; --t) {
    const Matrix<float> eps = predict(x, t);
    const double ab = sched.alpha_bar[t];
    const double ab_prev = t > 0 ? sched.alpha_bar[t - 1] : 1.0;
    const Matrix<float> x0 =
        (x - static_cast<float>(std::sqrt(1.0 - ab)) * eps) / static_cast<float>(std::sqrt(ab));
    x = static_cast<float>(std::sqrt(ab_prev)) * x0 + static_cast<float>(std::sqrt(1.0 - ab_prev)) * eps;
  }
  return x;
}

}  // namespace

Matrix<float> cfg_sample(const ModelInputs<float>& inputs, const ToyDiTWeights<float>& w,
                         double cfg_scale, Rng& rng, int steps) {
  if (!(cfg_scale >= 0.0)) throw ValidationError("cfg_scale must be >= 0");
  ModelInputs<float> cond = inputs;
  ModelInputs<float> uncond = unconditional(inputs);
  return ddim(inputs, rng, steps, [&](const Matrix<float>& x, int t) {
    cond.video.tokens() = x;
    uncond.video.tokens() = x;
    return guided_prediction<float>(predict_noise(uncond, w, t), predict_noise(cond, w, t), cfg_scale);
  });
}

Matrix<float> sample(const ModelInputs<float>& inputs, const ToyDiTWeights<float>& w, Rng& rng,
                     int steps) {
  ModelInputs<float> cond = inputs;
  return ddim(inputs, rng, steps, [&](const Matrix<float>& x, int t) {
    cond.video.tokens() = x;
    return predict_noise(cond, w, t);
  });
}

ClipSample synthetic_single_clip(std::uint64_t seed, const std::string& clip_id,
                                 const ToyDiTConfig& cfg) {
  Rng rng = make_rng(seed, "synthetic/single/" + clip_id);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ClipSample c;
  c.clip_id = clip_id;
  c.frame_dims = {720, 1280};
  c.frame_count = kAudioTokensPerLatentFrame * cfg.latent_frames + 1;
  c.text = "a person is talking about topic " + std::to_string(uni(0, 99));
  ClipStream s;
  s.identity_id = "spk_" + clip_id;
  s.audio = random_normal<float>(rng, c.frame_count, cfg.d_af);
  const int size = uni(120, 260);
  const int cx = uni(size, 1280 - size);
  const int cy = uni(size, 720 - size);
  s.face_track = {s.identity_id, c.frame_dims, {}};
  for (int f = 0; f < c.frame_count; ++f) {
    const int jx = cx + uni(-3, 3);
    const int jy = cy + uni(-3, 3);
    s.face_track.boxes.push_back({jx - size / 2, jy - size / 2, jx + size / 2, jy + size / 2});
  }
  c.identity_streams.push_back(std::move(s));
  return c;
}

ClipSample synthetic_multi_clip(std::uint64_t seed, const std::string& clip_id,
                                const ToyDiTConfig& cfg) {
  Rng rng = make_rng(seed, "synthetic/multi/" + clip_id);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ClipSample c;
  c.clip_id = clip_id;
  c.frame_dims = {kCropHeight, 2 * kCropWidth};
  c.frame_count = kAudioTokensPerLatentFrame * cfg.latent_frames + 1;
  const auto prompts = dual_speaker_prompts();
  c.text = prompts[content_hash(clip_id) % prompts.size()];
  for (const auto& [side, lo, hi] : {std::tuple{"L", 100, 300}, std::tuple{"R", 532, 732}}) {
    ClipStream s;
    s.identity_id = clip_id + "_" + side;
    s.audio = random_normal<float>(rng, c.frame_count, cfg.d_af);
    const int size = uni(100, 180);
    const int cx = uni(lo, hi);
    const int cy = uni(140, 340);
    s.face_track = {s.identity_id, c.frame_dims, {}};
    for (int f = 0; f < c.frame_count; ++f) {
      s.face_track.boxes.push_back({cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2});
    }
    c.identity_streams.push_back(std::move(s));
  }
  return c;
}

#define AFCA_LAB_INSTANTIATE(T)                                                                  \
  template ModelInputs<T> unconditional<T>(const ModelInputs<T>&);                              \
  template struct ToyDiTWeights<T>;                                                              \
  template ad::ModelVars ad::bind<T>(ad::Tape<T>&, const ToyDiTWeights<T>&, bool);              \
  template ad::InputVars ad::bind<T>(ad::Tape<T>&, const ModelInputs<T>&, bool);                \
  template ad::Var ad::block_forward<T>(ad::Tape<T>&, ad::Var, const ad::InputVars&,            \
                                        const GridShape&, std::span<const TokenMask>,            \
                                        const ad::BlockVars&);                                   \
  template ad::Var ad::model_forward<T>(ad::Tape<T>&, const ad::ModelVars&, const ad::InputVars&, \
                                        const GridShape&, std::span<const TokenMask>, int);     \
  template Matrix<T> timestep_embedding<T>(int, int);                                            \
  template Matrix<T> block_forward<T>(const Matrix<T>&, const ModelInputs<T>&,                  \
                                      const ToyDiTWeights<T>&, int);                             \
  template std::vector<Matrix<T>> afca_contributions<T>(const Matrix<T>&, const ModelInputs<T>&, \
                                                        const ToyDiTWeights<T>&, int);           \
  template Matrix<T> predict_noise<T>(const ModelInputs<T>&, const ToyDiTWeights<T>&, int);     \
  template Matrix<T> guided_prediction<T>(const Matrix<T>&, const Matrix<T>&, double);

AFCA_LAB_INSTANTIATE(float)
AFCA_LAB_INSTANTIATE(double)

}  // namespace afca_lab
