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

// Audio-Face Cross Attention.
//
// Each identity contributes one pass of the same attention layer: video
// tokens query the identity's audio tokens concatenated with its face
// token(s), under a temporal mask that binds latent frames to audio windows.
// The pass output is gated row-wise by the identity's token mask, and the
// gated passes are summed into the residual stream.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "afca_lab/attention.hpp"
#include "afca_lab/mask_pipeline.hpp"
#include "afca_lab/rng.hpp"
#include "afca_lab/tensor.hpp"

namespace afca_lab {

// Latent frames after the first each see this many audio tokens.
inline constexpr int kAudioTokensPerLatentFrame = 4;

// Boolean allow-matrix of shape (latent_frames, audio_tokens + face_tokens).
// Columns are audio tokens first, then face tokens.
struct TemporalAttentionMask {
  int latent_frames = 0;
  int audio_tokens = 0;
  int face_tokens = 0;
  std::vector<unsigned char> allow;

  int columns() const { return audio_tokens + face_tokens; }
  bool at(int t, int col) const { return allow[static_cast<std::size_t>(t) * columns() + col] != 0; }

  // Repeats row t for every token of latent frame t: (N, columns) row-major.
  std::vector<unsigned char> expand(const GridShape& grid) const;
};

// Frame 0 sees every audio token; frame t >= 1 sees audio tokens
// [4(t-1), 4t). Face columns are visible to all frames. Throws
// ShortfallError when audio_tokens < 4(latent_frames - 1).
TemporalAttentionMask build_temporal_mask(int latent_frames, int audio_tokens, int face_tokens);

template <typename T>
struct AudioTokenStream {
  std::string identity_id;
  Matrix<T> tokens;  // (A, d_af)
};

template <typename T>
struct FaceTokens {
  std::string identity_id;
  Matrix<T> tokens;  // (F, d_af), F = 1 by default
};

template <typename T>
struct IdentityStream {
  std::string identity_id;
  AudioTokenStream<T> audio;
  FaceTokens<T> face;
  PixelMask pixel_mask;
};

template <typename T>
void validate(const IdentityStream<T>& stream);

struct AfcaDims {
  int d_model = 16;
  int d_af = 8;
  int heads = 2;
  int head_dim_k = 8;
  int head_dim_v = 8;
};

template <typename T>
struct AfcaWeights {
  int heads = 1;
  int head_dim_k = 1;
  int head_dim_v = 1;
  Matrix<T> w_q;  // (d_model, heads*head_dim_k)
  Matrix<T> w_k;  // (d_af, heads*head_dim_k)
  Matrix<T> w_v;  // (d_af, heads*head_dim_v)
  Matrix<T> w_o;  // (heads*head_dim_v, d_model)

  // Gaussian init scaled by 1/sqrt(fan_in).
  static AfcaWeights init(const AfcaDims& dims, Rng& rng);
  AfcaDims dims() const;
  void validate() const;

  template <typename U>
  AfcaWeights<U> cast() const {
    return {heads, head_dim_k, head_dim_v, w_q.template cast<U>(), w_k.template cast<U>(),
            w_v.template cast<U>(), w_o.template cast<U>()};
  }
};

template <typename T>
struct KeyValue {
  Matrix<T> keys;    // (A+F, heads*head_dim_k)
  Matrix<T> values;  // (A+F, heads*head_dim_v)
};

// Projects concat(audio, face) by W_K and W_V.
template <typename T>
KeyValue<T> audio_face_kv(const IdentityStream<T>& stream, const AfcaWeights<T>& weights);

// Multi-head cross attention from the grid tokens (projected by W_Q) to the
// given keys/values. A query in latent frame t uses mask row t.
template <typename T>
Matrix<T> masked_mhca(const VideoTokenGrid<T>& query_grid, const Matrix<T>& keys,
                      const Matrix<T>& values, const TemporalAttentionMask& temporal_mask,
                      const AfcaWeights<T>& weights);

// token_mask (broadcast over channels) times the masked attention output of
// one identity.
template <typename T>
Matrix<T> afca_forward(const VideoTokenGrid<T>& hidden, const IdentityStream<T>& stream,
                       const AfcaWeights<T>& weights, const TokenMask& token_mask);

// hidden + sum over identities of afca_forward. Every identity queries the
// same input hidden state. token_masks[k] gates streams[k].
template <typename T>
Matrix<T> aggregate_identities(const VideoTokenGrid<T>& hidden,
                               std::span<const IdentityStream<T>> streams,
                               std::span<const TokenMask> token_masks,
                               const AfcaWeights<T>& weights);

// Same, with each token mask rasterized from the stream's pixel mask.
template <typename T>
Matrix<T> aggregate_identities(const VideoTokenGrid<T>& hidden,
                               std::span<const IdentityStream<T>> streams, PatchSize patch,
                               const AfcaWeights<T>& weights);

// Throws ValidationError when two streams share an identity_id.
template <typename T>
void require_unique_identities(std::span<const IdentityStream<T>> streams);

namespace ad {

struct AfcaVars {
  AttentionVars attn;
};

template <typename T>
AfcaVars bind(Tape<T>& tape, const AfcaWeights<T>& w, bool trainable);

// One identity's gated contribution. hidden is (N, d_model).
template <typename T>
Var afca_term(Tape<T>& tape, Var hidden, const GridShape& grid, Var audio, Var face,
              const TokenMask& token_mask, const AfcaVars& w);

// hidden + sum of afca_term over streams, on the tape.
template <typename T>
Var aggregate_identities(Tape<T>& tape, Var hidden, const GridShape& grid,
                         std::span<const Var> audio, std::span<const Var> face,
                         std::span<const TokenMask> token_masks, const AfcaVars& w);

}  // namespace ad

}  // namespace afca_lab
