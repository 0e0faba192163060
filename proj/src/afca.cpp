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

#include "afca_lab/afca.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "afca_lab/errors.hpp"

namespace afca_lab {

std::vector<unsigned char> TemporalAttentionMask::expand(const GridShape& grid) const {
  if (grid.latent_frames != latent_frames) {
    throw ShapeError("temporal mask has " + std::to_string(latent_frames) +
                     " latent frames, grid has " + std::to_string(grid.latent_frames));
  }
  const int n = grid.num_tokens();
  const int m = columns();
  std::vector<unsigned char> out(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    const int t = grid.frame_of(i);
    std::copy_n(allow.begin() + static_cast<long>(t) * m, m,
                out.begin() + static_cast<long>(i) * m);
  }
  return out;
}

TemporalAttentionMask build_temporal_mask(int latent_frames, int audio_tokens, int face_tokens) {
  if (latent_frames < 1) throw ValidationError("latent_frames must be >= 1");
  if (audio_tokens < 1) throw ValidationError("audio_tokens must be >= 1");
  if (face_tokens < 0) throw ValidationError("face_tokens must be >= 0");
  const long required = long{kAudioTokensPerLatentFrame} * (latent_frames - 1);
  if (audio_tokens < required) {
    throw ShortfallError("temporal mask for " + std::to_string(latent_frames) +
                             " latent frames requires at least " + std::to_string(required) +
                             " audio tokens, got " + std::to_string(audio_tokens),
                         required);
  }
  TemporalAttentionMask mask{latent_frames, audio_tokens, face_tokens, {}};
  const int m = mask.columns();
  mask.allow.assign(static_cast<std::size_t>(latent_frames) * m, 0);
  for (int t = 0; t < latent_frames; ++t) {
    unsigned char* row = mask.allow.data() + static_cast<std::size_t>(t) * m;
    const int lo = t == 0 ? 0 : kAudioTokensPerLatentFrame * (t - 1);
    const int hi = t == 0 ? audio_tokens : std::min(kAudioTokensPerLatentFrame * t, audio_tokens);
    for (int a = lo; a < hi; ++a) row[a] = 1;
    for (int f = 0; f < face_tokens; ++f) row[audio_tokens + f] = 1;
  }
  return mask;
}

template <typename T>
void validate(const IdentityStream<T>& s) {
  if (s.audio.identity_id != s.identity_id || s.face.identity_id != s.identity_id) {
    throw ValidationError("identity stream '" + s.identity_id +
                          "' carries audio/face tokens labelled '" + s.audio.identity_id +
                          "'/'" + s.face.identity_id + "'");
  }
  if (s.audio.tokens.rows() < 1) {
    throw ValidationError("identity '" + s.identity_id + "' has no audio tokens");
  }
  if (!s.audio.tokens.allFinite() || !s.face.tokens.allFinite()) {
    throw ValidationError("identity '" + s.identity_id + "' has non-finite tokens");
  }
  if (s.audio.tokens.cols() != s.face.tokens.cols()) {
    throw ShapeError("identity '" + s.identity_id + "': audio channels " +
                     std::to_string(s.audio.tokens.cols()) + " != face channels " +
                     std::to_string(s.face.tokens.cols()));
  }
}

template <typename T>
AfcaWeights<T> AfcaWeights<T>::init(const AfcaDims& d, Rng& rng) {
  AfcaWeights w;
  w.heads = d.heads;
  w.head_dim_k = d.head_dim_k;
  w.head_dim_v = d.head_dim_v;
  w.w_q = random_normal<T>(rng, d.d_model, d.heads * d.head_dim_k, 1.0 / std::sqrt(d.d_model));
  w.w_k = random_normal<T>(rng, d.d_af, d.heads * d.head_dim_k, 1.0 / std::sqrt(d.d_af));
  w.w_v = random_normal<T>(rng, d.d_af, d.heads * d.head_dim_v, 1.0 / std::sqrt(d.d_af));
  w.w_o = random_normal<T>(rng, d.heads * d.head_dim_v, d.d_model,
                           1.0 / std::sqrt(d.heads * d.head_dim_v));
  return w;
}

template <typename T>
AfcaDims AfcaWeights<T>::dims() const {
  return {static_cast<int>(w_q.rows()), static_cast<int>(w_k.rows()), heads, head_dim_k,
          head_dim_v};
}

template <typename T>
void AfcaWeights<T>::validate() const {
  const long hk = long{heads} * head_dim_k;
  const long hv = long{heads} * head_dim_v;
  if (heads < 1 || head_dim_k < 1 || head_dim_v < 1) {
    throw ShapeError("AFCA head configuration must be positive");
  }
  if (w_q.cols() != hk || w_k.cols() != hk || w_v.cols() != hv || w_o.rows() != hv ||
      w_v.rows() != w_k.rows() || w_o.cols() != w_q.rows()) {
    throw ShapeError("AFCA weights are inconsistent: W_Q " + ad::detail::dims(w_q.rows(), w_q.cols()) +
                     ", W_K " + ad::detail::dims(w_k.rows(), w_k.cols()) + ", W_V " +
                     ad::detail::dims(w_v.rows(), w_v.cols()) + ", W_O " +
                     ad::detail::dims(w_o.rows(), w_o.cols()));
  }
}

template <typename T>
KeyValue<T> audio_face_kv(const IdentityStream<T>& stream, const AfcaWeights<T>& weights) {
  weights.validate();
  const long d_af = weights.w_k.rows();
  if (stream.audio.tokens.cols() != d_af || stream.face.tokens.cols() != d_af) {
    throw ShapeError("audio/face channels (" + std::to_string(stream.audio.tokens.cols()) + ", " +
                     std::to_string(stream.face.tokens.cols()) + ") do not match W_K input dim " +
                     std::to_string(d_af));
  }
  Matrix<T> ctx(stream.audio.tokens.rows() + stream.face.tokens.rows(), d_af);
  ctx.topRows(stream.audio.tokens.rows()) = stream.audio.tokens;
  ctx.bottomRows(stream.face.tokens.rows()) = stream.face.tokens;
  return {ctx * weights.w_k, ctx * weights.w_v};
}

template <typename T>
Matrix<T> masked_mhca(const VideoTokenGrid<T>& query_grid, const Matrix<T>& keys,
                      const Matrix<T>& values, const TemporalAttentionMask& temporal_mask,
                      const AfcaWeights<T>& weights) {
  weights.validate();
  if (query_grid.channels() != weights.w_q.rows()) {
    throw ShapeError("query channels " + std::to_string(query_grid.channels()) +
                     " != W_Q input dim " + std::to_string(weights.w_q.rows()));
  }
  if (keys.rows() != temporal_mask.columns()) {
    throw ShapeError("temporal mask has " + std::to_string(temporal_mask.columns()) +
                     " columns for " + std::to_string(keys.rows()) + " keys");
  }
  ad::Tape<T> tape;
  const ad::AfcaVars w = ad::bind(tape, weights, false);
  const std::vector<unsigned char> allow = temporal_mask.expand(query_grid.shape());
  ad::Var h = tape.constant(query_grid.tokens());
  ad::Var q = ad::matmul(tape, h, w.attn.w_q);
  ad::Var out = ad::attend(tape, q, tape.constant(keys), tape.constant(values), allow, w.attn);
  return tape.value(out);
}

template <typename T>
Matrix<T> afca_forward(const VideoTokenGrid<T>& hidden, const IdentityStream<T>& stream,
                       const AfcaWeights<T>& weights, const TokenMask& token_mask) {
  validate(stream);
  if (token_mask.size() != hidden.num_tokens()) {
    throw ShapeError("token mask length " + std::to_string(token_mask.size()) +
                     " != token count " + std::to_string(hidden.num_tokens()));
  }
  ad::Tape<T> tape;
  const ad::AfcaVars w = ad::bind(tape, weights, false);
  ad::Var out = ad::afca_term(tape, tape.constant(hidden.tokens()), hidden.shape(),
                              tape.constant(stream.audio.tokens),
                              tape.constant(stream.face.tokens), token_mask, w);
  return tape.value(out);
}

template <typename T>
void require_unique_identities(std::span<const IdentityStream<T>> streams) {
  std::set<std::string> seen;
  for (const auto& s : streams) {
    if (!seen.insert(s.identity_id).second) {
      throw ValidationError("duplicate identity_id '" + s.identity_id + "'");
    }
  }
}

template <typename T>
Matrix<T> aggregate_identities(const VideoTokenGrid<T>& hidden,
                               std::span<const IdentityStream<T>> streams,
                               std::span<const TokenMask> token_masks,
                               const AfcaWeights<T>& weights) {
  require_unique_identities(streams);
  if (token_masks.size() != streams.size()) {
    throw ShapeError(std::to_string(token_masks.size()) + " token masks for " +
                     std::to_string(streams.size()) + " streams");
  }
  ad::Tape<T> tape;
  const ad::AfcaVars w = ad::bind(tape, weights, false);
  std::vector<ad::Var> audio;
  std::vector<ad::Var> face;
  for (const auto& s : streams) {
    validate(s);
    audio.push_back(tape.constant(s.audio.tokens));
    face.push_back(tape.constant(s.face.tokens));
  }
  ad::Var out = ad::aggregate_identities(tape, tape.constant(hidden.tokens()), hidden.shape(),
                                         std::span<const ad::Var>(audio),
                                         std::span<const ad::Var>(face), token_masks, w);
  return tape.value(out);
}

template <typename T>
Matrix<T> aggregate_identities(const VideoTokenGrid<T>& hidden,
                               std::span<const IdentityStream<T>> streams, PatchSize patch,
                               const AfcaWeights<T>& weights) {
  std::vector<TokenMask> masks;
  masks.reserve(streams.size());
  for (const auto& s : streams) {
    TokenMask m = token_mask_from_bbox(s.pixel_mask, hidden.shape().latent_frames, patch);
    if (m.size() != hidden.num_tokens()) {
      throw ShapeError("pixel mask of '" + s.identity_id + "' rasterizes to " +
                       std::to_string(m.size()) + " tokens, grid has " +
                       std::to_string(hidden.num_tokens()));
    }
    masks.push_back(std::move(m));
  }
  return aggregate_identities(hidden, streams, std::span<const TokenMask>(masks), weights);
}

namespace ad {

template <typename T>
AfcaVars bind(Tape<T>& tape, const AfcaWeights<T>& w, bool trainable) {
  w.validate();
  auto leaf = [&](const Matrix<T>& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  return {AttentionVars{leaf(w.w_q), leaf(w.w_k), leaf(w.w_v), leaf(w.w_o), w.heads,
                        w.head_dim_k, w.head_dim_v}};
}

template <typename T>
Var afca_term(Tape<T>& tape, Var hidden, const GridShape& grid, Var audio, Var face,
              const TokenMask& token_mask, const AfcaVars& w) {
  const long n = tape.value(hidden).rows();
  if (n != grid.num_tokens() || token_mask.size() != n) {
    throw ShapeError("token mask length " + std::to_string(token_mask.size()) + ", hidden rows " +
                     std::to_string(n) + ", grid tokens " + std::to_string(grid.num_tokens()));
  }
  const auto a = static_cast<int>(tape.value(audio).rows());
  const auto f = static_cast<int>(tape.value(face).rows());
  const TemporalAttentionMask temporal = build_temporal_mask(grid.latent_frames, a, f);
  const std::vector<unsigned char> allow = temporal.expand(grid);
  Var ctx = concat_rows(tape, audio, face);
  Var keys = matmul(tape, ctx, w.attn.w_k);
  Var values = matmul(tape, ctx, w.attn.w_v);
  Var queries = matmul(tape, hidden, w.attn.w_q);
  Var attn = attend(tape, queries, keys, values, allow, w.attn);
  return gate_rows(tape, attn, std::span<const double>(token_mask.values));
}

template <typename T>
Var aggregate_identities(Tape<T>& tape, Var hidden, const GridShape& grid,
                         std::span<const Var> audio, std::span<const Var> face,
                         std::span<const TokenMask> token_masks, const AfcaVars& w) {
  if (audio.size() != face.size() || audio.size() != token_masks.size()) {
    throw ShapeError("per-identity inputs differ in count");
  }
  std::vector<Var> terms{hidden};
  for (std::size_t k = 0; k < audio.size(); ++k) {
    terms.push_back(afca_term(tape, hidden, grid, audio[k], face[k], token_masks[k], w));
  }
  if (terms.size() == 1) return hidden;
  return add_all(tape, std::span<const Var>(terms));
}

}  // namespace ad

#define AFCA_LAB_INSTANTIATE(T)                                                                 \
  template void validate<T>(const IdentityStream<T>&);                                          \
  template struct AfcaWeights<T>;                                                               \
  template KeyValue<T> audio_face_kv<T>(const IdentityStream<T>&, const AfcaWeights<T>&);       \
  template Matrix<T> masked_mhca<T>(const VideoTokenGrid<T>&, const Matrix<T>&,                 \
                                    const Matrix<T>&, const TemporalAttentionMask&,             \
                                    const AfcaWeights<T>&);                                     \
  template Matrix<T> afca_forward<T>(const VideoTokenGrid<T>&, const IdentityStream<T>&,        \
                                     const AfcaWeights<T>&, const TokenMask&);                  \
  template void require_unique_identities<T>(std::span<const IdentityStream<T>>);               \
  template Matrix<T> aggregate_identities<T>(const VideoTokenGrid<T>&,                          \
                                             std::span<const IdentityStream<T>>,                \
                                             std::span<const TokenMask>, const AfcaWeights<T>&); \
  template Matrix<T> aggregate_identities<T>(const VideoTokenGrid<T>&,                          \
                                             std::span<const IdentityStream<T>>, PatchSize,     \
                                             const AfcaWeights<T>&);                            \
  template ad::AfcaVars ad::bind<T>(ad::Tape<T>&, const AfcaWeights<T>&, bool);                 \
  template ad::Var ad::afca_term<T>(ad::Tape<T>&, ad::Var, const GridShape&, ad::Var, ad::Var,  \
                                    const TokenMask&, const ad::AfcaVars&);                     \
  template ad::Var ad::aggregate_identities<T>(ad::Tape<T>&, ad::Var, const GridShape&,         \
                                               std::span<const ad::Var>,                        \
                                               std::span<const ad::Var>,                        \
                                               std::span<const TokenMask>, const ad::AfcaVars&);

AFCA_LAB_INSTANTIATE(float)
AFCA_LAB_INSTANTIATE(double)

#undef AFCA_LAB_INSTANTIATE

}  // namespace afca_lab
