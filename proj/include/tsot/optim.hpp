// tsot/optim.hpp

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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tsot/params.hpp"

namespace tsot {

/// Linear warm-up to the peak rate, then linear decay to `final_lr` at
/// `total_steps`. Steps are 0-based.
struct LinearSchedule {
  double peak_lr = 3e-3;
  double final_lr = 0.0;
  long warmup_steps = 300;
  long total_steps = 3000;

  double operator()(long step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    long span = std::max(1L, total_steps - warmup_steps);
    double frac = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
    return peak_lr + (final_lr - peak_lr) * frac;
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

/// Adam with decoupled weight decay. Moment buffers are kept per parameter
/// index; parameters whose name does not match the trainable prefixes are
/// skipped entirely (their values stay bit-identical).
template <typename S>
class AdamW {
 public:
  AdamW(const ParamStore<S>& store, AdamWConfig cfg = {}) : cfg_(cfg) {
    for (const auto& e : store) {
      m_.emplace_back(e.value.rows(), e.value.cols());
      v_.emplace_back(e.value.rows(), e.value.cols());
    }
  }

  void set_trainable_prefixes(std::vector<std::string> prefixes) {
    prefixes_ = std::move(prefixes);
  }

  // Global L2 norm of the gradients of trainable parameters.
  double grad_norm(const ParamStore<S>& store) const {
    double acc = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!trainable(store.at(i).name)) continue;
      for (S g : store.at(i).grad.storage()) acc += static_cast<double>(g) * g;
    }
    return std::sqrt(acc);
  }

  // Applies one update with learning rate lr and returns the pre-clip norm.
  double step(ParamStore<S>& store, double lr) {
    double norm = grad_norm(store);
    if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient norm");
    double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& e = store.at(i);
      if (!trainable(e.name)) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < e.value.size(); ++k) {
        double g = static_cast<double>(e.grad[k]) * clip;
        double mk = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        double vk = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        m[k] = static_cast<S>(mk);
        v[k] = static_cast<S>(vk);
        double update = (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
        double w = static_cast<double>(e.value[k]);
        w -= lr * (update + cfg_.weight_decay * w);
        e.value[k] = static_cast<S>(w);
      }
    }
    return norm;
  }

  long steps_taken() const { return t_; }
  void set_steps_taken(long t) { t_ = t; }
  std::vector<Tensor<S>>& first_moments() { return m_; }
  std::vector<Tensor<S>>& second_moments() { return v_; }
  const std::vector<Tensor<S>>& first_moments() const { return m_; }
  const std::vector<Tensor<S>>& second_moments() const { return v_; }

 private:
  bool trainable(const std::string& name) const {
    if (prefixes_.empty()) return true;
    for (const auto& p : prefixes_)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  AdamWConfig cfg_;
  std::vector<Tensor<S>> m_, v_;
  std::vector<std::string> prefixes_;
  long t_ = 0;
};

}  // namespace tsot
