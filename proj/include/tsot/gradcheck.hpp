// tsot/gradcheck.hpp

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
#include <functional>
#include <string>

#include "tsot/params.hpp"

namespace tsot {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient of `f` with central differences for every
/// scalar of every parameter. `f` must return the loss and accumulate its
/// gradient into the store (the store is zeroed before each call).
///
/// The relative error of one entry is |a - n| / max(|a|, |n|, floor); the
/// floor keeps entries whose true gradient is ~0 from dividing by noise.
template <typename S>
GradCheckResult finite_diff_check(ParamStore<S>& store,
                                  const std::function<S(ParamStore<S>&)>& f,
                                  double eps = 1e-4, double floor = 1e-6) {
  store.zero_grad();
  S base = f(store);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: f is not finite");
  std::vector<Tensor<S>> analytic;
  for (const auto& e : store) analytic.push_back(e.grad);

  GradCheckResult res;
  for (std::size_t p = 0; p < store.size(); ++p) {
    for (std::size_t k = 0; k < store.at(p).value.size(); ++k) {
      S saved = store.at(p).value[k];
      store.at(p).value[k] = saved + static_cast<S>(eps);
      store.zero_grad();
      S up = f(store);
      store.at(p).value[k] = saved - static_cast<S>(eps);
      store.zero_grad();
      S down = f(store);
      store.at(p).value[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("finite_diff_check: f is not finite at " + store.at(p).name);
      double num = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * eps);
      double ana = static_cast<double>(analytic[p][k]);
      double denom = std::max({std::abs(num), std::abs(ana), floor});
      double rel = std::abs(num - ana) / denom;
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = store.at(p).name;
        res.worst_index = k;
        res.analytic = ana;
        res.numeric = num;
      }
    }
  }
  store.zero_grad();
  return res;
}

}  // namespace tsot
