// tsot/ops.hpp

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

// Two evaluation contexts with one vocabulary of op names. Layer code is
// written once against `Ops::Value` and runs either on plain tensors
// (EvalOps, used for decoding) or on a tape (TapeOps, used for training).

#pragma once

#include <vector>

#include "tsot/autodiff.hpp"
#include "tsot/params.hpp"
#include "tsot/tensor.hpp"

namespace tsot {

// Tensor overloads matching the Var ops in autodiff.hpp.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) { return kernels::matmul(a, b); }
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& w) { return kernels::matmul_nt(a, w); }
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) { return kernels::add(a, b); }
template <typename S>
Tensor<S> add_row(const Tensor<S>& a, const Tensor<S>& b) { return kernels::add_row(a, b); }
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) { return kernels::mul(a, b); }
template <typename S>
Tensor<S> tanh(const Tensor<S>& a) { return kernels::tanh(a); }
template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) { return kernels::sigmoid(a); }
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, std::size_t start, std::size_t len) {
  return kernels::slice_cols(a, start, len);
}
template <typename S>
Tensor<S> take_row(const Tensor<S>& a, std::size_t r) { return kernels::take_row(a, r); }
template <typename S>
Tensor<S> grid_add(const Tensor<S>& a, const Tensor<S>& b) { return kernels::grid_add(a, b); }
template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) { return kernels::log_softmax_rows(a); }
template <typename S>
Tensor<S> log_sum_exp_rows(const Tensor<S>& a) { return kernels::log_sum_exp_rows(a); }
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::vector<int> ids) {
  return kernels::embedding(table, std::span<const int>(ids));
}
template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  std::vector<const Tensor<S>*> p;
  for (const auto& t : parts) p.push_back(&t);
  return kernels::concat_cols(p);
}
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows) {
  std::vector<const Tensor<S>*> p;
  for (const auto& t : rows) p.push_back(&t);
  return kernels::stack_rows(p);
}

template <typename S>
class EvalOps {
 public:
  using Scalar = S;
  using Value = Tensor<S>;

  explicit EvalOps(const ParamStore<S>& store) : store_(store) {}

  const Tensor<S>& param(std::size_t index) const { return store_.at(index).value; }
  Tensor<S> zeros(std::size_t r, std::size_t c) const { return Tensor<S>(r, c); }
  Tensor<S> constant(Tensor<S> t) const { return t; }
  static const Tensor<S>& value(const Tensor<S>& v) { return v; }

 private:
  const ParamStore<S>& store_;
};

template <typename S>
class TapeOps {
 public:
  using Scalar = S;
  using Value = Var<S>;

  explicit TapeOps(TapeBinding<S>& binding) : binding_(binding) {}

  Var<S> param(std::size_t index) { return binding_(index); }
  Var<S> zeros(std::size_t r, std::size_t c) { return tape().constant(Tensor<S>(r, c)); }
  Var<S> constant(Tensor<S> t) { return tape().constant(std::move(t)); }
  static const Tensor<S>& value(const Var<S>& v) { return v.value(); }
  Tape<S>& tape() { return binding_.tape(); }

 private:
  TapeBinding<S>& binding_;
};

}  // namespace tsot
