#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rangeseg/error.hpp"

namespace rangeseg {

/// Dense row-major tensor of arbitrary rank, templated on the element type.
/// float is the runtime type; double is used by oracles and gradient checks.
template <typename Scalar>
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  /// Zero-initialized tensor of the given shape.
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), Scalar(0));
  }

  Tensor(Shape shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor full(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](std::size_t flat) { return data_[flat]; }
  const Scalar& operator[](std::size_t flat) const { return data_[flat]; }

  /// Flat offset of a rank-2 index.
  Scalar& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const Scalar& at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  /// Flat offset of a rank-3 index (H, W, C layout).
  Scalar& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const Scalar& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename To>
  Tensor<To> cast() const {
    Tensor<To> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<To>(data_[i]);
    }
    return out;
  }

  using MatrixType =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// View the flat buffer as a rows x cols row-major matrix.
  Eigen::Map<MatrixType> matrix_view(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) {
      throw DimensionError("matrix view " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " does not cover tensor of size " +
                           std::to_string(data_.size()));
    }
    return Eigen::Map<MatrixType>(data_.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
  }

  Eigen::Map<const MatrixType> matrix_view(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) {
      throw DimensionError("matrix view " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " does not cover tensor of size " +
                           std::to_string(data_.size()));
    }
    return Eigen::Map<const MatrixType>(data_.data(), static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
  }

  static std::size_t count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }

  static std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ",";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const typename Tensor<Scalar>::Shape& want,
                   const char* what) {
  if (t.shape() != want) {
    throw DimensionError(std::string(what) + ": expected shape " +
                         Tensor<Scalar>::shape_string(want) + ", got " +
                         Tensor<Scalar>::shape_string(t.shape()));
  }
}

}  // namespace rangeseg
