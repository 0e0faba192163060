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

#include "afca_lab/tensor.hpp"

#include <algorithm>
#include <string>

#include "afca_lab/errors.hpp"

namespace afca_lab {

void validate(const GridShape& shape) {
  if (shape.latent_frames < 1 || shape.rows < 1 || shape.cols < 1) {
    throw ShapeError("grid shape must be positive, got (" +
                     std::to_string(shape.latent_frames) + ", " +
                     std::to_string(shape.rows) + ", " +
                     std::to_string(shape.cols) + ")");
  }
}

template <typename T>
VideoTokenGrid<T>::VideoTokenGrid(GridShape shape, int channels)
    : shape_(shape) {
  validate(shape_);
  if (channels < 1) throw ShapeError("grid channels must be >= 1");
  data_ = Matrix<T>::Zero(shape_.num_tokens(), channels);
}

template <typename T>
VideoTokenGrid<T>::VideoTokenGrid(GridShape shape, Matrix<T> flat)
    : shape_(shape), data_(std::move(flat)) {
  validate(shape_);
  if (data_.rows() != shape_.num_tokens() || data_.cols() < 1) {
    throw ShapeError("grid data has " + std::to_string(data_.rows()) +
                     " rows, expected " + std::to_string(shape_.num_tokens()));
  }
}

template <typename T>
VideoTokenGrid<T> VideoTokenGrid<T>::unflatten(GridShape shape, int channels,
                                               std::span<const T> dense) {
  VideoTokenGrid grid(shape, channels);
  if (dense.size() != static_cast<std::size_t>(grid.data_.size())) {
    throw ShapeError("dense buffer has " + std::to_string(dense.size()) +
                     " values, expected " + std::to_string(grid.data_.size()));
  }
  std::copy(dense.begin(), dense.end(), grid.data_.data());
  return grid;
}

template <typename T>
std::vector<T> VideoTokenGrid<T>::flatten() const {
  return std::vector<T>(data_.data(), data_.data() + data_.size());
}

template class VideoTokenGrid<float>;
template class VideoTokenGrid<double>;

}  // namespace afca_lab
