// bsskit/ndarray.hpp

// Copyright 2026  The bsskit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef BSSKIT_NDARRAY_HPP_
#define BSSKIT_NDARRAY_HPP_

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bsskit/common.hpp"

namespace bsskit {

// Dense row-major array of doubles with a dynamic shape.  This is the single
// numeric container shared by the autodiff tape, the NMF factors and the
// network parameters; it carries no gradient state of its own.
class NdArray {
 public:
  NdArray() = default;

  explicit NdArray(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  static NdArray from(std::vector<std::size_t> shape,
                      std::vector<double> data) {
    if (count(shape) != data.size())
      throw DimensionError("NdArray::from: data size " +
                           std::to_string(data.size()) +
                           " does not match shape volume " +
                           std::to_string(count(shape)));
    NdArray a;
    a.shape_ = std::move(shape);
    a.data_ = std::move(data);
    return a;
  }

  static NdArray scalar(double v) { return from({1}, {v}); }

  const std::vector<std::size_t> &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const {
    if (i >= shape_.size())
      throw DimensionError("NdArray::dim: axis out of range");
    return shape_[i];
  }
  std::size_t size() const { return data_.size(); }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }
  std::vector<double> &vec() { return data_; }
  const std::vector<double> &vec() const { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double &at(std::size_t i) {
    if (i >= data_.size()) throw DimensionError("NdArray::at: out of range");
    return data_[i];
  }

  // Rank-checked accessors for the common ranks.
  double &operator()(std::size_t i) { return data_[check_index1(i)]; }
  double operator()(std::size_t i) const { return data_[check_index1(i)]; }

  double &operator()(std::size_t i, std::size_t j) {
    return data_[check_index2(i, j)];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[check_index2(i, j)];
  }

  double &operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[check_index3(i, j, k)];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[check_index3(i, j, k)];
  }

  bool same_shape(const NdArray &o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool finite() const { return all_finite(data_); }

  double sum() const {
    double s = 0.0;
    for (double x : data_) s += x;
    return s;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static std::size_t count(const std::vector<std::size_t> &shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::size_t check_index1(std::size_t i) const {
    if (rank() != 1) throw DimensionError("NdArray: rank-1 access on rank " +
                                          std::to_string(rank()));
    if (i >= shape_[0]) throw DimensionError("NdArray: index out of range");
    return i;
  }
  std::size_t check_index2(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw DimensionError("NdArray: rank-2 access on rank " +
                                          std::to_string(rank()));
    if (i >= shape_[0] || j >= shape_[1])
      throw DimensionError("NdArray: index out of range");
    return i * shape_[1] + j;
  }
  std::size_t check_index3(std::size_t i, std::size_t j, std::size_t k) const {
    if (rank() != 3) throw DimensionError("NdArray: rank-3 access on rank " +
                                          std::to_string(rank()));
    if (i >= shape_[0] || j >= shape_[1] || k >= shape_[2])
      throw DimensionError("NdArray: index out of range");
    return (i * shape_[1] + j) * shape_[2] + k;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace bsskit

#endif  // BSSKIT_NDARRAY_HPP_
