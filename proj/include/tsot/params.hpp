// tsot/params.hpp

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

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsot/autodiff.hpp"
#include "tsot/tensor.hpp"

namespace tsot {

using Rng = std::mt19937_64;

// splitmix64 finaliser; used to derive independent seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Named parameters with matching gradient accumulators. Iteration order is
/// insertion order, which is also the checkpoint order.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
  };

  std::size_t add(const std::string& name, Tensor<S> value) {
    if (index_.count(name))
      throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Tensor<S> g(value.rows(), value.cols());
    entries_.push_back({name, std::move(value), std::move(g)});
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  std::size_t add_uniform(const std::string& name, std::size_t rows,
                          std::size_t cols, std::size_t fan_in, Rng& rng) {
    Tensor<S> t(rows, cols);
    double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.storage()) v = static_cast<S>(dist(rng));
    return add(name, std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  Entry& at(std::size_t i) { return entries_.at(i); }
  const Entry& at(std::size_t i) const { return entries_.at(i); }
  Entry& at(const std::string& name) { return entries_[index(name)]; }
  const Entry& at(const std::string& name) const { return entries_[index(name)]; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(S(0));
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Binds the parameters of a store to one tape, creating each leaf at most
/// once. Parameters outside `trainable` become frozen leaves.
template <typename S>
class TapeBinding {
 public:
  TapeBinding(Tape<S>& tape, ParamStore<S>& store)
      : tape_(tape), store_(store), ids_(store.size(), -1) {}

  // Restrict gradient flow to parameters whose name starts with one of the
  // given prefixes.
  void set_trainable_prefixes(std::vector<std::string> prefixes) {
    prefixes_ = std::move(prefixes);
  }

  Var<S> operator()(std::size_t index) {
    if (ids_[index] < 0) {
      auto& e = store_.at(index);
      Var<S> v = trainable(e.name) ? tape_.param(e.value, e.grad) : tape_.frozen(e.value);
      ids_[index] = v.id;
    }
    return {&tape_, ids_[index]};
  }

  Tape<S>& tape() { return tape_; }

 private:
  bool trainable(const std::string& name) const {
    if (prefixes_.empty()) return true;
    for (const auto& p : prefixes_)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  Tape<S>& tape_;
  ParamStore<S>& store_;
  std::vector<int> ids_;
  std::vector<std::string> prefixes_;
};

}  // namespace tsot
