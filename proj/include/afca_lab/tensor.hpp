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

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace afca_lab {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Latent grid geometry: latent frames x token rows x token cols.
struct GridShape {
  int latent_frames = 1;
  int rows = 1;
  int cols = 1;

  int tokens_per_frame() const { return rows * cols; }
  int num_tokens() const { return latent_frames * rows * cols; }
  int frame_of(int token) const { return token / tokens_per_frame(); }
  int flat_index(int t, int r, int c) const { return (t * rows + r) * cols + c; }

  bool operator==(const GridShape&) const = default;
};

void validate(const GridShape& shape);

// Latent video tokens stored already flattened: row (t*R + r)*C + c holds the
// channel vector of token (t, r, c). Latent frame is outermost, then row,
// then column.
template <typename T>
class VideoTokenGrid {
 public:
  VideoTokenGrid(GridShape shape, int channels);
  VideoTokenGrid(GridShape shape, Matrix<T> flat);

  // Builds a grid from a dense (T, R, C, D) buffer in C order.
  static VideoTokenGrid unflatten(GridShape shape, int channels,
                                  std::span<const T> dense);
  // Dense (T, R, C, D) buffer in C order.
  std::vector<T> flatten() const;

  const GridShape& shape() const { return shape_; }
  int channels() const { return static_cast<int>(data_.cols()); }
  int num_tokens() const { return shape_.num_tokens(); }

  const Matrix<T>& tokens() const { return data_; }
  Matrix<T>& tokens() { return data_; }

  T& at(int t, int r, int c, int ch) { return data_(shape_.flat_index(t, r, c), ch); }
  T at(int t, int r, int c, int ch) const {
    return data_(shape_.flat_index(t, r, c), ch);
  }

 private:
  GridShape shape_;
  Matrix<T> data_;
};

extern template class VideoTokenGrid<float>;
extern template class VideoTokenGrid<double>;

}  // namespace afca_lab
