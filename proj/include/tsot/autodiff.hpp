// tsot/autodiff.hpp

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

// Reverse-mode differentiation over Tensor values. A Tape records every op of
// one forward pass; Tape::backward walks it in reverse and accumulates
// gradients. Tracked tensors are never mutated after they are recorded.

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tsot/tensor.hpp"

namespace tsot {

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Tensor<S>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

#ifdef NDEBUG
  static constexpr bool kCheckFiniteDefault = false;
#else
  static constexpr bool kCheckFiniteDefault = true;
#endif

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

  Var<S> constant(Tensor<S> v) { return push(std::move(v), false, nullptr, "constant"); }

  // Free input whose gradient is kept on the tape (read with grad()).
  Var<S> input(Tensor<S> v) { return push(std::move(v), true, nullptr, "input"); }

  // Leaf bound to externally owned storage; gradients accumulate into grad.
  Var<S> param(const Tensor<S>& value, Tensor<S>& grad) {
    Node n;
    n.ext_value = &value;
    n.ext_grad = &grad;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Leaf bound to external storage that never receives gradients.
  Var<S> frozen(const Tensor<S>& value) {
    Node n;
    n.ext_value = &value;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> record(Tensor<S> value, bool needs_grad, Backward bw, const char* op) {
    return push(std::move(value), needs_grad, needs_grad ? std::move(bw) : nullptr, op);
  }

  const Tensor<S>& value(int id) const {
    const Node& n = nodes_[id];
    return n.ext_value ? *n.ext_value : n.value;
  }

  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // Gradient accumulator for node id, zero-initialised on first access.
  Tensor<S>& grad(int id) {
    Node& n = nodes_[id];
    if (n.ext_grad) {
      n.touched = true;
      return *n.ext_grad;
    }
    if (!n.touched) {
      const Tensor<S>& v = value(id);
      n.grad = Tensor<S>(v.rows(), v.cols());
      n.touched = true;
    }
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[id].touched; }

  void backward(Var<S> root, S seed = S(1)) {
    const Tensor<S>& rv = value(root.id);
    if (rv.size() != 1)
      throw ShapeError("backward: root must be a scalar, got " + rv.shape_str());
    if (!nodes_[root.id].needs_grad) return;
    grad(root.id)[0] += seed;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.touched || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    const Tensor<S>* ext_value = nullptr;
    Tensor<S>* ext_grad = nullptr;
    bool needs_grad = false;
    bool touched = false;
    Backward backward;
  };

  Var<S> push(Tensor<S> v, bool needs_grad, Backward bw, const char* op) {
    if (check_finite_ && !v.all_finite())
      throw NumericError(std::string(op) + ": non-finite value in output " +
                         v.shape_str());
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool check_finite_ = kCheckFiniteDefault;
};

namespace detail {

template <typename S>
Tape<S>& same_tape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr)
    throw std::logic_error(std::string(op) + ": operands live on different tapes");
  return *a.tape;
}

template <typename S>
void add_into(Tensor<S>& dst, const Tensor<S>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---- differentiable ops -------------------------------------------------

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b, "matmul");
  int ia = a.id, ib = b.id;
  return tape.record(
      kernels::matmul(a.value(), b.value()),
      tape.needs_grad(ia) || tape.needs_grad(ib),
      [ia, ib](Tape<S>& t, int self) {
        auto g = as_matrix(t.grad(self));
        if (t.needs_grad(ia))
          as_matrix(t.grad(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
        if (t.needs_grad(ib))
          as_matrix(t.grad(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
      },
      "matmul");
}

// a * w^T with w stored (out x in).
template <typename S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& w) {
  Tape<S>& tape = detail::same_tape(a, w, "matmul_nt");
  int ia = a.id, iw = w.id;
  return tape.record(
      kernels::matmul_nt(a.value(), w.value()),
      tape.needs_grad(ia) || tape.needs_grad(iw),
      [ia, iw](Tape<S>& t, int self) {
        auto g = as_matrix(t.grad(self));
        if (t.needs_grad(ia))
          as_matrix(t.grad(ia)).noalias() += g * as_matrix(t.value(iw));
        if (t.needs_grad(iw))
          as_matrix(t.grad(iw)).noalias() += g.transpose() * as_matrix(t.value(ia));
      },
      "matmul_nt");
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b, "add");
  int ia = a.id, ib = b.id;
  return tape.record(
      kernels::add(a.value(), b.value()),
      tape.needs_grad(ia) || tape.needs_grad(ib),
      [ia, ib](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        if (t.needs_grad(ia)) detail::add_into(t.grad(ia), g);
        if (t.needs_grad(ib)) detail::add_into(t.grad(ib), g);
      },
      "add");
}

template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& bias) {
  Tape<S>& tape = detail::same_tape(a, bias, "add_row");
  int ia = a.id, ib = bias.id;
  return tape.record(
      kernels::add_row(a.value(), bias.value()),
      tape.needs_grad(ia) || tape.needs_grad(ib),
      [ia, ib](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        if (t.needs_grad(ia)) detail::add_into(t.grad(ia), g);
        if (t.needs_grad(ib)) {
          Tensor<S>& gb = t.grad(ib);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
        }
      },
      "add_row");
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b, "mul");
  int ia = a.id, ib = b.id;
  return tape.record(
      kernels::mul(a.value(), b.value()),
      tape.needs_grad(ia) || tape.needs_grad(ib),
      [ia, ib](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        if (t.needs_grad(ia)) {
          Tensor<S>& ga = t.grad(ia);
          const Tensor<S>& vb = t.value(ib);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.needs_grad(ib)) {
          Tensor<S>& gb = t.grad(ib);
          const Tensor<S>& va = t.value(ia);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
      },
      "mul");
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::scale(a.value(), s), tape.needs_grad(ia),
      [ia, s](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
      },
      "scale");
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::tanh(a.value()), tape.needs_grad(ia),
      [ia](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        const Tensor<S>& y = t.value(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (S(1) - y[i] * y[i]);
      },
      "tanh");
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::sigmoid(a.value()), tape.needs_grad(ia),
      [ia](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        const Tensor<S>& y = t.value(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (S(1) - y[i]);
      },
      "sigmoid");
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, std::size_t start, std::size_t len) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::slice_cols(a.value(), start, len), tape.needs_grad(ia),
      [ia, start, len](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < len; ++c) ga(r, start + c) += g(r, c);
      },
      "slice_cols");
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape<S>& tape = *parts[0].tape;
  std::vector<const Tensor<S>*> vals;
  std::vector<int> ids;
  bool ng = false;
  for (const auto& p : parts) {
    detail::same_tape(parts[0], p, "concat_cols");
    vals.push_back(&p.value());
    ids.push_back(p.id);
    ng = ng || tape.needs_grad(p.id);
  }
  return tape.record(
      kernels::concat_cols(vals), ng,
      [ids](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        std::size_t off = 0;
        for (int id : ids) {
          std::size_t w = t.value(id).cols();
          if (t.needs_grad(id)) {
            Tensor<S>& gi = t.grad(id);
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, off + c);
          }
          off += w;
        }
      },
      "concat_cols");
}

template <typename S>
Var<S> embedding(const Var<S>& table, std::vector<int> ids) {
  Tape<S>& tape = *table.tape;
  int it = table.id;
  auto out = kernels::embedding(table.value(), std::span<const int>(ids));
  return tape.record(
      std::move(out), tape.needs_grad(it),
      [it, ids = std::move(ids)](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        Tensor<S>& gt = t.grad(it);
        for (std::size_t i = 0; i < ids.size(); ++i)
          for (std::size_t c = 0; c < g.cols(); ++c) gt(ids[i], c) += g(i, c);
      },
      "embedding");
}

template <typename S>
Var<S> grid_add(const Var<S>& a, const Var<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b, "grid_add");
  int ia = a.id, ib = b.id;
  return tape.record(
      kernels::grid_add(a.value(), b.value()),
      tape.needs_grad(ia) || tape.needs_grad(ib),
      [ia, ib](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        std::size_t T = t.value(ia).rows(), U = t.value(ib).rows();
        std::size_t C = g.cols();
        bool ga_on = t.needs_grad(ia), gb_on = t.needs_grad(ib);
        Tensor<S>* ga = ga_on ? &t.grad(ia) : nullptr;
        Tensor<S>* gb = gb_on ? &t.grad(ib) : nullptr;
        for (std::size_t ti = 0; ti < T; ++ti)
          for (std::size_t u = 0; u < U; ++u) {
            auto gr = g.row(ti * U + u);
            if (ga)
              for (std::size_t c = 0; c < C; ++c) (*ga)(ti, c) += gr[c];
            if (gb)
              for (std::size_t c = 0; c < C; ++c) (*gb)(u, c) += gr[c];
          }
      },
      "grid_add");
}

template <typename S>
Var<S> log_softmax_rows(const Var<S>& a) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::log_softmax_rows(a.value()), tape.needs_grad(ia),
      [ia](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        const Tensor<S>& y = t.value(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          S gs = 0;
          for (std::size_t c = 0; c < g.cols(); ++c) gs += g(r, c);
          for (std::size_t c = 0; c < g.cols(); ++c)
            ga(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
        }
      },
      "log_softmax");
}

template <typename S>
Var<S> log_sum_exp_rows(const Var<S>& a) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::log_sum_exp_rows(a.value()), tape.needs_grad(ia),
      [ia](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        const Tensor<S>& y = t.value(self);
        const Tensor<S>& x = t.value(ia);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c)
            ga(r, c) += g[r] * std::exp(x(r, c) - y[r]);
      },
      "log_sum_exp");
}

template <typename S>
Var<S> stack_rows(const std::vector<Var<S>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  Tape<S>& tape = *rows[0].tape;
  std::vector<const Tensor<S>*> vals;
  std::vector<int> ids;
  bool ng = false;
  for (const auto& r : rows) {
    detail::same_tape(rows[0], r, "stack_rows");
    vals.push_back(&r.value());
    ids.push_back(r.id);
    ng = ng || tape.needs_grad(r.id);
  }
  return tape.record(
      kernels::stack_rows(vals), ng,
      [ids](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.needs_grad(ids[i])) continue;
          Tensor<S>& gi = t.grad(ids[i]);
          for (std::size_t c = 0; c < g.cols(); ++c) gi[c] += g(i, c);
        }
      },
      "stack_rows");
}

template <typename S>
Var<S> take_row(const Var<S>& a, std::size_t r) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  return tape.record(
      kernels::take_row(a.value(), r), tape.needs_grad(ia),
      [ia, r](Tape<S>& t, int self) {
        const Tensor<S>& g = t.grad(self);
        Tensor<S>& ga = t.grad(ia);
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g[c];
      },
      "take_row");
}

// Sum of all entries, as a 1x1 tensor.
template <typename S>
Var<S> sum(const Var<S>& a) {
  Tape<S>& tape = *a.tape;
  int ia = a.id;
  S acc = 0;
  for (S v : a.value().storage()) acc += v;
  return tape.record(
      Tensor<S>(1, 1, acc), tape.needs_grad(ia),
      [ia](Tape<S>& t, int self) {
        S g = t.grad(self)[0];
        for (auto& v : t.grad(ia).storage()) v += g;
      },
      "sum");
}

}  // namespace tsot
