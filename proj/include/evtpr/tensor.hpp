// Copyright (c) the evtpr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "evtpr/errors.hpp"

namespace evtpr {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-major 2-D plane of doubles; the native layout for frames and fields.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Shape-tagged row-major dense array. Storage is a contiguous Eigen vector so
/// any leading/trailing split of the shape can be viewed as a row-major matrix
/// without copying.
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = Vector<Scalar>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() : data_(Storage::Zero(1)) {}

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Storage::Constant(checked_size(shape_), fill)) {}

  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    detail::require(data_.size() == checked_size(shape_),
                    "tensor data length does not match shape " + shape_string(shape_));
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  Index ndim() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<size_t>(i)); }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  /// View as rows x cols (rows * cols must equal size()).
  MatrixMap matrix(Index rows, Index cols) {
    detail::require(rows * cols == size(), "matrix view does not cover tensor");
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    detail::require(rows * cols == size(), "matrix view does not cover tensor");
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  /// Slice along the leading axis, viewed as a matrix.
  MatrixMap slice(Index i, Index rows, Index cols) {
    return MatrixMap(data_.data() + i * rows * cols, rows, cols);
  }
  ConstMatrixMap slice(Index i, Index rows, Index cols) const {
    return ConstMatrixMap(data_.data() + i * rows * cols, rows, cols);
  }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[offset({static_cast<Index>(idx)...})];
  }
  template <typename... Idx>
  const Scalar& operator()(Idx... idx) const {
    return data_[offset({static_cast<Index>(idx)...})];
  }

  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  template <typename To>
  BasicTensor<To> cast() const {
    return BasicTensor<To>(shape_, data_.template cast<To>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Index checked_size(const Shape& shape) {
    for (Index d : shape) detail::require(d >= 0, "negative tensor extent");
    return shape_size(shape);
  }

  Index offset(std::initializer_list<Index> idx) const {
    Index off = 0;
    size_t k = 0;
    for (Index i : idx) off = off * shape_[k++] + i;
    return off;
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace evtpr
