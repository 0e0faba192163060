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

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "afca_lab/autodiff.hpp"

namespace afca_lab::ad {

// Projection weights of one multi-head attention layer, bound to a tape.
struct AttentionVars {
  Var w_q;  // (d_query_in, heads*head_dim_k)
  Var w_k;  // (d_context, heads*head_dim_k)
  Var w_v;  // (d_context, heads*head_dim_v)
  Var w_o;  // (heads*head_dim_v, d_out)
  int heads = 1;
  int head_dim_k = 1;
  int head_dim_v = 1;
};

// Scaled dot-product attention over already-projected queries, keys and
// values, one softmax per head with scale 1/sqrt(head_dim_k), heads
// concatenated then projected by w_o. allow is a row-major (N x M) boolean
// matrix; an empty span allows every key.
template <typename T>
Var attend(Tape<T>& tape, Var queries, Var keys, Var values,
           std::span<const unsigned char> allow, const AttentionVars& w) {
  const long n = tape.value(queries).rows();
  const long m = tape.value(keys).rows();
  detail::check(tape.value(queries).cols() == long{w.heads} * w.head_dim_k,
                "query width does not match heads*head_dim_k");
  detail::check(tape.value(keys).cols() == long{w.heads} * w.head_dim_k,
                "key width does not match heads*head_dim_k");
  detail::check(tape.value(values).cols() == long{w.heads} * w.head_dim_v,
                "value width does not match heads*head_dim_v");
  detail::check(tape.value(values).rows() == m, "keys and values differ in length");
  std::vector<unsigned char> all;
  if (allow.empty()) {
    all.assign(static_cast<std::size_t>(n * m), 1);
    allow = all;
  }
  detail::check(static_cast<long>(allow.size()) == n * m, "attention mask shape mismatch");
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(w.head_dim_k));
  std::vector<Var> heads;
  heads.reserve(w.heads);
  for (int h = 0; h < w.heads; ++h) {
    Var q = cols(tape, queries, long{h} * w.head_dim_k, w.head_dim_k);
    Var k = cols(tape, keys, long{h} * w.head_dim_k, w.head_dim_k);
    Var v = cols(tape, values, long{h} * w.head_dim_v, w.head_dim_v);
    Var logits = scale(tape, matmul_nt(tape, q, k), inv_sqrt);
    Var probs = masked_softmax(tape, logits, allow);
    heads.push_back(matmul(tape, probs, v));
  }
  Var merged = heads.size() == 1 ? heads.front() : concat_cols(tape, std::span<const Var>(heads));
  return matmul(tape, merged, w.w_o);
}

// Full cross attention: queries from x, keys/values from context.
template <typename T>
Var cross_attention(Tape<T>& tape, Var x, Var context, std::span<const unsigned char> allow,
                    const AttentionVars& w) {
  Var q = matmul(tape, x, w.w_q);
  Var k = matmul(tape, context, w.w_k);
  Var v = matmul(tape, context, w.w_v);
  return attend(tape, q, k, v, allow, w);
}

}  // namespace afca_lab::ad
