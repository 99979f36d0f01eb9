// tsot/layers.hpp

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

#include <string>
#include <vector>

#include "tsot/ops.hpp"
#include "tsot/params.hpp"

namespace tsot {

struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;
  int in = 0, out = 0;

  template <typename S>
  static Linear create(ParamStore<S>& store, const std::string& name, int in, int out,
                       Rng& rng, bool with_bias = true) {
    Linear l;
    l.in = in;
    l.out = out;
    l.has_bias = with_bias;
    l.weight = store.add_uniform(name + ".weight", out, in, in, rng);
    if (with_bias) l.bias = store.add_uniform(name + ".bias", 1, out, in, rng);
    return l;
  }

  template <class Ops, class V>
  V operator()(Ops& ops, const V& x) const {
    V y = matmul_nt(x, ops.param(weight));
    return has_bias ? add_row(y, ops.param(bias)) : y;
  }
};

template <typename V>
struct LstmState {
  std::vector<V> h;
  std::vector<V> c;
};

/// (h', c') from the stacked gate pre-activations [i | f | g | o] and c.
template <class V>
std::pair<V, V> lstm_gates(const V& gates, const V& c, std::size_t hidden) {
  V i = sigmoid(slice_cols(gates, 0, hidden));
  V f = sigmoid(slice_cols(gates, hidden, hidden));
  V g = tanh(slice_cols(gates, 2 * hidden, hidden));
  V o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  V c_next = add(mul(f, c), mul(i, g));
  V h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

/// Unidirectional LSTM stack. Layer l maps [x ; h] through input and
/// recurrent weights (4H x in, 4H x H) and a shared bias.
struct LstmStack {
  struct Layer {
    std::size_t w_ih = 0, w_hh = 0, bias = 0;
  };
  std::vector<Layer> layers;
  int input_dim = 0;
  int hidden = 0;

  template <typename S>
  static LstmStack create(ParamStore<S>& store, const std::string& name, int input_dim,
                          int hidden, int num_layers, Rng& rng) {
    LstmStack s;
    s.input_dim = input_dim;
    s.hidden = hidden;
    for (int l = 0; l < num_layers; ++l) {
      int in = l == 0 ? input_dim : hidden;
      std::string p = name + ".lstm" + std::to_string(l);
      Layer layer;
      layer.w_ih = store.add_uniform(p + ".weight_ih", 4 * hidden, in, in + hidden, rng);
      layer.w_hh = store.add_uniform(p + ".weight_hh", 4 * hidden, hidden, in + hidden, rng);
      layer.bias = store.add_uniform(p + ".bias", 1, 4 * hidden, in + hidden, rng);
      s.layers.push_back(layer);
    }
    return s;
  }

  int num_layers() const { return static_cast<int>(layers.size()); }

  template <class Ops>
  LstmState<typename Ops::Value> zero_state(Ops& ops) const {
    LstmState<typename Ops::Value> st;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      st.h.push_back(ops.zeros(1, hidden));
      st.c.push_back(ops.zeros(1, hidden));
    }
    return st;
  }

  // One time step for a single 1 x in row; returns the top hidden state.
  template <class Ops, class V>
  V step(Ops& ops, V x, LstmState<V>& st) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& L = layers[l];
      V gates = add_row(add(matmul_nt(x, ops.param(L.w_ih)), matmul_nt(st.h[l], ops.param(L.w_hh))),
                        ops.param(L.bias));
      auto [h, c] = lstm_gates(gates, st.c[l], static_cast<std::size_t>(hidden));
      st.h[l] = h;
      st.c[l] = c;
      x = h;
    }
    return x;
  }

  // Whole-sequence form (rows are time steps). Input projections of each
  // layer are computed for all steps with a single product.
  template <class Ops, class V>
  V sequence(Ops& ops, V x) const {
    std::size_t steps = Ops::value(x).rows();
    for (const Layer& L : layers) {
      V pre = add_row(matmul_nt(x, ops.param(L.w_ih)), ops.param(L.bias));
      V h = ops.zeros(1, hidden);
      V c = ops.zeros(1, hidden);
      std::vector<V> outs;
      outs.reserve(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        V gates = add(take_row(pre, t), matmul_nt(h, ops.param(L.w_hh)));
        auto hc = lstm_gates(gates, c, static_cast<std::size_t>(hidden));
        h = hc.first;
        c = hc.second;
        outs.push_back(h);
      }
      x = stack_rows(outs);
    }
    return x;
  }
};

}  // namespace tsot
