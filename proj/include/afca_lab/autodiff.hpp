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

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Values are computed eagerly when an op is recorded. Each node keeps a
// closure that scatters its output gradient into its parents; backward()
// replays the closures in reverse recording order. Nodes whose inputs are
// all constants carry no closure, so a tape used only for inference costs
// one extra matrix copy per op.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "afca_lab/errors.hpp"
#include "afca_lab/tensor.hpp"

namespace afca_lab::ad {

struct Var {
  std::size_t id = 0;
};

// Additive bias for disallowed attention logits.
inline constexpr double kMaskedLogit = -1e9;

template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using Backward = std::function<void(Tape&, const Mat&)>;

  Var constant(Mat value) { return push(std::move(value), false, {}); }
  Var parameter(Mat value) { return push(std::move(value), true, {}); }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulated by the last backward(); zeros if none reached v.
  Mat grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Records a derived node. The closure runs only if some parent needs grad.
  Var record(Mat value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }
  Var record(Mat value, std::span<const Var> parents, Backward fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  void accumulate(Var v, const Mat& g) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var out) {
    const Mat& v = value(out);
    if (v.rows() != 1 || v.cols() != 1) {
      throw ShapeError("backward() needs a scalar output");
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    accumulate(out, Mat::Constant(1, 1, T(1)));
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      // Copy: the closure may append to grads of earlier nodes only.
      const Mat g = n.grad;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Mat value, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Mat{}, requires_grad, std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

namespace detail {

inline void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline std::string dims(long r, long c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

}  // namespace detail

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::check(A.cols() == B.rows(), "matmul " + detail::dims(A.rows(), A.cols()) +
                                          " x " + detail::dims(B.rows(), B.cols()));
  Matrix<T> out = A * B;
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

// a * b^T
template <typename T>
Var matmul_nt(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::check(A.cols() == B.cols(), "matmul_nt " + detail::dims(A.rows(), A.cols()) +
                                          " x " + detail::dims(B.rows(), B.cols()) + "^T");
  Matrix<T> out = A * B.transpose();
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::check(A.rows() == B.rows() && A.cols() == B.cols(),
                "add " + detail::dims(A.rows(), A.cols()) + " + " +
                    detail::dims(B.rows(), B.cols()));
  Matrix<T> out = A + B;
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var add_all(Tape<T>& tape, std::span<const Var> terms) {
  detail::check(!terms.empty(), "add_all of nothing");
  const auto& first = tape.value(terms.front());
  Matrix<T> out = first;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const auto& v = tape.value(terms[i]);
    detail::check(v.rows() == out.rows() && v.cols() == out.cols(), "add_all shape mismatch");
    out += v;
  }
  std::vector<Var> ids(terms.begin(), terms.end());
  return tape.record(std::move(out), std::span<const Var>(ids),
                     [ids](Tape<T>& t, const Matrix<T>& g) {
                       for (Var v : ids) t.accumulate(v, g);
                     });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::check(A.rows() == B.rows() && A.cols() == B.cols(), "sub shape mismatch");
  Matrix<T> out = A - B;
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T s) {
  Matrix<T> out = tape.value(a) * s;
  return tape.record(std::move(out), {a}, [a, s](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g * s);
  });
}

// a (n x d) + bias (1 x d) broadcast over rows.
template <typename T>
Var add_row(Tape<T>& tape, Var a, Var bias) {
  const auto& A = tape.value(a);
  const auto& b = tape.value(bias);
  detail::check(b.rows() == 1 && b.cols() == A.cols(),
                "add_row bias " + detail::dims(b.rows(), b.cols()) + " vs " +
                    detail::dims(A.rows(), A.cols()));
  Matrix<T> out = A.rowwise() + b.row(0);
  return tape.record(std::move(out), {a, bias}, [a, bias](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

// Row i of a multiplied by the constant gate[i].
template <typename T>
Var gate_rows(Tape<T>& tape, Var a, std::span<const double> gate) {
  const auto& A = tape.value(a);
  detail::check(static_cast<long>(gate.size()) == A.rows(),
                "row gate length " + std::to_string(gate.size()) + " vs " +
                    std::to_string(A.rows()) + " rows");
  Eigen::Matrix<T, Eigen::Dynamic, 1> m(A.rows());
  for (long i = 0; i < A.rows(); ++i) m(i) = static_cast<T>(gate[i]);
  Matrix<T> out = m.asDiagonal() * A;
  return tape.record(std::move(out), {a}, [a, m](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, m.asDiagonal() * g);
  });
}

template <typename T>
Var cols(Tape<T>& tape, Var a, long start, long count) {
  const auto& A = tape.value(a);
  detail::check(start >= 0 && count >= 0 && start + count <= A.cols(), "column slice out of range");
  Matrix<T> out = A.middleCols(start, count);
  const long total = A.cols();
  return tape.record(std::move(out), {a},
                     [a, start, count, total](Tape<T>& t, const Matrix<T>& g) {
                       Matrix<T> full = Matrix<T>::Zero(g.rows(), total);
                       full.middleCols(start, count) = g;
                       t.accumulate(a, full);
                     });
}

template <typename T>
Var concat_cols(Tape<T>& tape, std::span<const Var> parts) {
  detail::check(!parts.empty(), "concat_cols of nothing");
  const long rows = tape.value(parts.front()).rows();
  long total = 0;
  for (Var p : parts) {
    detail::check(tape.value(p).rows() == rows, "concat_cols row mismatch");
    total += tape.value(p).cols();
  }
  Matrix<T> out(rows, total);
  std::vector<long> offsets;
  long off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    out.middleCols(off, tape.value(p).cols()) = tape.value(p);
    off += tape.value(p).cols();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return tape.record(std::move(out), std::span<const Var>(ids),
                     [ids, offsets](Tape<T>& t, const Matrix<T>& g) {
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!t.requires_grad(ids[i])) continue;
                         t.accumulate(ids[i], g.middleCols(offsets[i], t.value(ids[i]).cols()));
                       }
                     });
}

// [a; b] stacked along rows.
template <typename T>
Var concat_rows(Tape<T>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::check(A.cols() == B.cols(), "concat_rows channel mismatch " +
                                          std::to_string(A.cols()) + " vs " +
                                          std::to_string(B.cols()));
  Matrix<T> out(A.rows() + B.rows(), A.cols());
  out.topRows(A.rows()) = A;
  out.bottomRows(B.rows()) = B;
  const long ra = A.rows();
  const long rb = B.rows();
  return tape.record(std::move(out), {a, b}, [a, b, ra, rb](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.topRows(ra));
    if (t.requires_grad(b)) t.accumulate(b, g.bottomRows(rb));
  });
}

// Row-wise softmax restricted to allowed entries. Disallowed logits get
// kMaskedLogit added; afterwards their probabilities are forced to exactly
// zero and the allowed ones renormalized. allow is row-major, same shape.
template <typename T>
Var masked_softmax(Tape<T>& tape, Var logits, std::span<const unsigned char> allow) {
  const auto& X = tape.value(logits);
  detail::check(static_cast<long>(allow.size()) == X.size(), "softmax mask shape mismatch");
  Matrix<T> P(X.rows(), X.cols());
  for (long i = 0; i < X.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (long j = 0; j < X.cols(); ++j) {
      const bool ok = allow[i * X.cols() + j] != 0;
      any = any || ok;
      const T z = X(i, j) + (ok ? T(0) : static_cast<T>(kMaskedLogit));
      P(i, j) = z;
      mx = std::max(mx, z);
    }
    if (!any) throw ValidationError("attention row " + std::to_string(i) + " has no allowed key");
    T sum = 0;
    for (long j = 0; j < X.cols(); ++j) {
      P(i, j) = std::exp(P(i, j) - mx);
    }
    for (long j = 0; j < X.cols(); ++j) {
      if (allow[i * X.cols() + j] == 0) P(i, j) = 0;
      sum += P(i, j);
    }
    P.row(i) /= sum;
  }
  Matrix<T> probs = P;
  return tape.record(std::move(P), {logits}, [logits, probs](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> dot = (g.cwiseProduct(probs)).rowwise().sum();
    Matrix<T> dx = probs.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(logits, dx);
  });
}

// Per-row standardization without affine parameters.
template <typename T>
Var layer_norm(Tape<T>& tape, Var a, T eps = T(1e-6)) {
  const auto& X = tape.value(a);
  const long d = X.cols();
  Matrix<T> Y(X.rows(), d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(X.rows());
  for (long i = 0; i < X.rows(); ++i) {
    const T mean = X.row(i).mean();
    const T var = (X.row(i).array() - mean).square().mean();
    inv_std(i) = T(1) / std::sqrt(var + eps);
    Y.row(i) = (X.row(i).array() - mean) * inv_std(i);
  }
  Matrix<T> y = Y;
  return tape.record(std::move(Y), {a}, [a, y, inv_std, d](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> dx(g.rows(), g.cols());
    for (long i = 0; i < g.rows(); ++i) {
      const T gm = g.row(i).mean();
      const T gy = g.row(i).dot(y.row(i)) / static_cast<T>(d);
      dx.row(i) = inv_std(i) * (g.row(i).array() - gm - y.row(i).array() * gy);
    }
    t.accumulate(a, dx);
  });
}

// x * sigmoid(x)
template <typename T>
Var silu(Tape<T>& tape, Var a) {
  const auto& X = tape.value(a);
  Matrix<T> sig = (T(1) / (T(1) + (-X.array()).exp())).matrix();
  Matrix<T> out = X.cwiseProduct(sig);
  Matrix<T> x = X;
  return tape.record(std::move(out), {a}, [a, x, sig](Tape<T>& t, const Matrix<T>& g) {
    auto d = sig.array() * (T(1) + x.array() * (T(1) - sig.array()));
    t.accumulate(a, (g.array() * d).matrix());
  });
}

// Sum of squared entries, 1x1.
template <typename T>
Var sum_squares(Tape<T>& tape, Var a) {
  const auto& X = tape.value(a);
  Matrix<T> out = Matrix<T>::Constant(1, 1, X.squaredNorm());
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, t.value(a) * (T(2) * g(0, 0)));
  });
}

// mean((a - target)^2), 1x1. target is treated as a constant.
template <typename T>
Var mse(Tape<T>& tape, Var a, const Matrix<T>& target) {
  const auto& X = tape.value(a);
  detail::check(X.rows() == target.rows() && X.cols() == target.cols(), "mse shape mismatch");
  Matrix<T> diff = X - target;
  const T n = static_cast<T>(diff.size());
  Matrix<T> out = Matrix<T>::Constant(1, 1, diff.squaredNorm() / n);
  return tape.record(std::move(out), {a}, [a, diff, n](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a, diff * (T(2) * g(0, 0) / n));
  });
}

}  // namespace afca_lab::ad
