// tsot/tensor.hpp

// Copyright 2026  tsot-fnt authors
//
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

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsot {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix. Vectors are 1 x n. Every tensor in the library is
/// two dimensional; shape() reports {rows, cols}.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, S fill = S(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<S> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
  }

  static Tensor row_vector(std::vector<S> v) {
    auto n = v.size();
    return Tensor(1, n, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }

  S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  S operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }

  std::span<S> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const S> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& storage() { return data_; }
  const std::vector<S>& storage() const { return data_; }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](S v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  std::string shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<RowMatrix<S>> as_matrix(Tensor<S>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

template <typename S>
Eigen::Map<const RowMatrix<S>> as_matrix(const Tensor<S>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

template <typename S>
S log_sum_exp(std::span<const S> v) {
  if (v.empty()) return -std::numeric_limits<S>::infinity();
  S m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  S acc = 0;
  for (S x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

template <typename S>
S log_add(S a, S b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<S>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// Forward kernels. The autodiff ops and the no-tape inference path both call
// these, so the two modes produce bit-identical values for identical inputs.
namespace kernels {

inline void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": shape mismatch " + detail);
}

// a (m x k) * b (k x n)
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows())
    shape_fail("matmul", a.shape_str() + " * " + b.shape_str());
  Tensor<S> out(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

// a (m x k) * w^T, w (n x k). Weights are stored out x in.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& w) {
  if (a.cols() != w.cols())
    shape_fail("matmul_nt", a.shape_str() + " * " + w.shape_str() + "^T");
  Tensor<S> out(a.rows(), w.rows());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(w).transpose();
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) shape_fail("add", a.shape_str() + " + " + b.shape_str());
  Tensor<S> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// a (m x n) + bias (1 x n) broadcast over rows.
template <typename S>
Tensor<S> add_row(const Tensor<S>& a, const Tensor<S>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    shape_fail("add_row", a.shape_str() + " + " + bias.shape_str());
  Tensor<S> out = a;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias[c];
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) shape_fail("mul", a.shape_str() + " * " + b.shape_str());
  Tensor<S> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  Tensor<S> out = a;
  for (auto& v : out.storage()) v *= s;
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Tensor<S> out = a;
  for (auto& v : out.storage()) v = std::tanh(v);
  return out;
}

template <typename S>
S sigmoid_scalar(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out = a;
  for (auto& v : out.storage()) v = sigmoid_scalar(v);
  return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, std::size_t start, std::size_t len) {
  if (start + len > a.cols())
    shape_fail("slice_cols", a.shape_str() + " [" + std::to_string(start) +
                                 ", " + std::to_string(start + len) + ")");
  Tensor<S> out(a.rows(), len);
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(a.row(r).begin() + start, len, out.row(r).begin());
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<const Tensor<S>*>& parts) {
  if (parts.empty()) return {};
  std::size_t rows = parts[0]->rows(), cols = 0;
  for (auto* p : parts) {
    if (p->rows() != rows)
      shape_fail("concat_cols", p->shape_str() + " rows != " + std::to_string(rows));
    cols += p->cols();
  }
  Tensor<S> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (auto* p : parts) {
      std::copy(p->row(r).begin(), p->row(r).end(), out.row(r).begin() + off);
      off += p->cols();
    }
  }
  return out;
}

template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::span<const int> ids) {
  Tensor<S> out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows())
      throw ShapeError("embedding: id " + std::to_string(ids[i]) +
                       " outside table " + table.shape_str());
    std::copy(table.row(ids[i]).begin(), table.row(ids[i]).end(),
              out.row(i).begin());
  }
  return out;
}

// out[t * U + u] = a[t] + b[u]
template <typename S>
Tensor<S> grid_add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.cols())
    shape_fail("grid_add", a.shape_str() + " (+) " + b.shape_str());
  Tensor<S> out(a.rows() * b.rows(), a.cols());
  for (std::size_t t = 0; t < a.rows(); ++t)
    for (std::size_t u = 0; u < b.rows(); ++u) {
      auto o = out.row(t * b.rows() + u);
      auto ar = a.row(t);
      auto br = b.row(u);
      for (std::size_t c = 0; c < a.cols(); ++c) o[c] = ar[c] + br[c];
    }
  return out;
}

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) {
  Tensor<S> out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = out.row(r);
    S lse = log_sum_exp<S>(std::span<const S>(row.data(), row.size()));
    for (auto& v : row) v -= lse;
  }
  return out;
}

template <typename S>
Tensor<S> log_sum_exp_rows(const Tensor<S>& a) {
  Tensor<S> out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = log_sum_exp<S>(a.row(r));
  return out;
}

template <typename S>
Tensor<S> stack_rows(const std::vector<const Tensor<S>*>& rows) {
  if (rows.empty()) return {};
  std::size_t cols = rows[0]->cols();
  Tensor<S> out(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->rows() != 1 || rows[i]->cols() != cols)
      shape_fail("stack_rows", rows[i]->shape_str() + " into width " +
                                   std::to_string(cols));
    std::copy(rows[i]->row(0).begin(), rows[i]->row(0).end(),
              out.row(i).begin());
  }
  return out;
}

template <typename S>
Tensor<S> take_row(const Tensor<S>& a, std::size_t r) {
  if (r >= a.rows())
    shape_fail("take_row", a.shape_str() + " row " + std::to_string(r));
  Tensor<S> out(1, a.cols());
  std::copy(a.row(r).begin(), a.row(r).end(), out.row(0).begin());
  return out;
}

}  // namespace kernels

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> d(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.rows(), t.cols(), std::move(d));
}

}  // namespace tsot
