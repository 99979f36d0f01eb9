// tsot/losses.hpp

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
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsot/autodiff.hpp"
#include "tsot/labels.hpp"
#include "tsot/model.hpp"

namespace tsot {

enum class KlDirection {
  kOriginalToAdapted,  // KL(P_original || P_adapted)
  kAdaptedToOriginal,  // KL(P_adapted || P_original)
};

enum class Reduction { kMean, kSum };

struct LossConfig {
  double lambda = 0.5;  // LM loss weight in L_rnnt + lambda * L_nll
  double omega = 1.0;   // KL weight in L_nll + omega * L_kl
  KlDirection kl_direction = KlDirection::kOriginalToAdapted;
  Reduction reduction = Reduction::kMean;

  void validate() const {
    if (!(lambda >= 0) || !(omega >= 0))
      throw std::invalid_argument("loss config: lambda and omega must be >= 0");
  }
};

// ---- transducer loss -----------------------------------------------------

template <typename S>
struct RnntResult {
  S loss = 0;
  Tensor<S> grad;  // d loss / d lattice, same shape as the lattice
};

/// -log of the total probability of all monotonic alignments of `labels`
/// through a T x (U+1) lattice of normalized log-probabilities. Row
/// t*(U+1)+u holds the distribution at node (t, u). Blank advances t; every
/// label (including <cc>) advances u. The last step is a blank at (T-1, U).
template <typename S>
RnntResult<S> rnnt_loss_and_grad(const Tensor<S>& lattice, const std::vector<int>& labels,
                                 int blank, std::size_t frames, bool want_grad = true) {
  const std::size_t U = labels.size();
  const std::size_t T = frames;
  const S ninf = -std::numeric_limits<S>::infinity();
  if (T == 0) throw std::invalid_argument("rnnt_loss: zero frames");
  if (lattice.rows() != T * (U + 1))
    throw ShapeError("rnnt_loss: lattice has " + std::to_string(lattice.rows()) +
                     " rows, expected " + std::to_string(T * (U + 1)));
  if (!lattice.all_finite()) throw NumericError("rnnt_loss: non-finite lattice");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= lattice.cols() || y == blank)
      throw std::invalid_argument("rnnt_loss: invalid label id " + std::to_string(y));

  auto lp = [&](std::size_t t, std::size_t u, int k) { return lattice(t * (U + 1) + u, k); };
  std::vector<S> alpha(T * (U + 1), ninf), beta(T * (U + 1), ninf);
  auto A = [&](std::size_t t, std::size_t u) -> S& { return alpha[t * (U + 1) + u]; };
  auto B = [&](std::size_t t, std::size_t u) -> S& { return beta[t * (U + 1) + u]; };

  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) {
        A(0, 0) = 0;
        continue;
      }
      S a = t > 0 ? A(t - 1, u) + lp(t - 1, u, blank) : ninf;
      S b = u > 0 ? A(t, u - 1) + lp(t, u - 1, labels[u - 1]) : ninf;
      A(t, u) = log_add(a, b);
    }
  S log_z = A(T - 1, U) + lp(T - 1, U, blank);

  RnntResult<S> res;
  res.loss = -log_z;
  if (!want_grad) return res;

  for (std::size_t t = T; t-- > 0;)
    for (std::size_t u = U + 1; u-- > 0;) {
      if (t == T - 1 && u == U) {
        B(t, u) = lp(t, u, blank);
        continue;
      }
      S a = t + 1 < T ? B(t + 1, u) + lp(t, u, blank) : ninf;
      S b = u < U ? B(t, u + 1) + lp(t, u, labels[u]) : ninf;
      B(t, u) = log_add(a, b);
    }

  res.grad = Tensor<S>(lattice.rows(), lattice.cols());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      std::size_t row = t * (U + 1) + u;
      S base = A(t, u) - log_z;
      if (t + 1 < T)
        res.grad(row, blank) = -std::exp(base + lp(t, u, blank) + B(t + 1, u));
      else if (u == U)
        res.grad(row, blank) = -std::exp(base + lp(t, u, blank));
      if (u < U) res.grad(row, labels[u]) = -std::exp(base + lp(t, u, labels[u]) + B(t, u + 1));
    }
  return res;
}

template <typename S>
Var<S> rnnt_loss(const Var<S>& lattice, const std::vector<int>& labels, int blank,
                 std::size_t frames) {
  Tape<S>& tape = *lattice.tape;
  int il = lattice.id;
  auto res = rnnt_loss_and_grad(lattice.value(), labels, blank, frames, tape.needs_grad(il));
  return tape.record(
      Tensor<S>(1, 1, res.loss), tape.needs_grad(il),
      [il, grad = std::move(res.grad)](Tape<S>& t, int self) {
        S g = t.grad(self)[0];
        Tensor<S>& gl = t.grad(il);
        for (std::size_t i = 0; i < grad.size(); ++i) gl[i] += g * grad[i];
      },
      "rnnt_loss");
}

// ---- language-model losses -----------------------------------------------

/// Positions u = 0..U-1 of a label: the predictor reads input_u (the start
/// symbol at u = 0, y_u afterwards) and is scored on target_u = y_{u+1}.
/// A position is unmasked when both input and target can be scored by the
/// vocabulary distribution.
struct NllTargets {
  std::vector<int> columns;  // target column in the vocab distribution
  std::vector<bool> mask;    // true = contributes

  std::size_t active() const {
    std::size_t n = 0;
    for (bool m : mask) n += m;
    return n;
  }
};

template <typename S>
NllTargets nll_targets(const Transducer<S>& model, const SerializedLabel& label) {
  NllTargets out;
  const int cc = model.cc_id();
  for (std::size_t u = 0; u < label.size(); ++u) {
    int input = u == 0 ? model.start_id() : label.tokens[u - 1];
    int target = label.tokens[u];
    bool masked = model.variant() == Variant::kIntegrated && (input == cc || target == cc);
    out.columns.push_back(masked ? -1 : model.vocab_column(target));
    out.mask.push_back(!masked);
  }
  return out;
}

/// Mean (or sum) over unmasked positions of -logprobs[u][column_u].
template <typename S>
Var<S> nll_loss(const Var<S>& logprobs, const NllTargets& targets,
                Reduction reduction = Reduction::kMean) {
  Tape<S>& tape = *logprobs.tape;
  const Tensor<S>& lp = logprobs.value();
  if (targets.columns.size() != targets.mask.size() || targets.mask.size() > lp.rows())
    throw ShapeError("nll_loss: " + std::to_string(targets.mask.size()) +
                     " targets for logprob rows " + lp.shape_str());
  std::size_t n = targets.active();
  S acc = 0;
  for (std::size_t u = 0; u < targets.mask.size(); ++u) {
    if (!targets.mask[u]) continue;
    int c = targets.columns[u];
    if (c < 0 || static_cast<std::size_t>(c) >= lp.cols())
      throw std::invalid_argument("nll_loss: unmasked target at position " + std::to_string(u) +
                                  " is not a vocabulary column");
    acc -= lp(u, c);
  }
  S norm = (reduction == Reduction::kMean && n > 0) ? S(1) / static_cast<S>(n) : S(1);
  int il = logprobs.id;
  return tape.record(
      Tensor<S>(1, 1, acc * norm), tape.needs_grad(il),
      [il, targets, norm](Tape<S>& t, int self) {
        S g = t.grad(self)[0];
        Tensor<S>& gl = t.grad(il);
        for (std::size_t u = 0; u < targets.mask.size(); ++u)
          if (targets.mask[u]) gl(u, targets.columns[u]) -= g * norm;
      },
      "nll_loss");
}

/// KL divergence between per-position distributions. `original` is a
/// constant; gradients flow into `adapted` only.
template <typename S>
Var<S> kl_loss(const Var<S>& adapted, const Tensor<S>& original, const std::vector<bool>& mask,
               KlDirection dir = KlDirection::kOriginalToAdapted,
               Reduction reduction = Reduction::kMean) {
  Tape<S>& tape = *adapted.tape;
  const Tensor<S>& a = adapted.value();
  if (!a.same_shape(original))
    throw ShapeError("kl_loss: adapted " + a.shape_str() + " vs original " + original.shape_str());
  if (mask.size() > a.rows()) throw ShapeError("kl_loss: mask longer than row count");
  std::size_t n = 0;
  for (bool m : mask) n += m;
  S norm = (reduction == Reduction::kMean && n > 0) ? S(1) / static_cast<S>(n) : S(1);
  S acc = 0;
  for (std::size_t u = 0; u < mask.size(); ++u) {
    if (!mask[u]) continue;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      S o = original(u, k), q = a(u, k);
      acc += dir == KlDirection::kOriginalToAdapted ? std::exp(o) * (o - q) : std::exp(q) * (q - o);
    }
  }
  int ia = adapted.id;
  return tape.record(
      Tensor<S>(1, 1, acc * norm), tape.needs_grad(ia),
      [ia, original, mask, dir, norm](Tape<S>& t, int self) {
        S g = t.grad(self)[0] * norm;
        const Tensor<S>& q = t.value(ia);
        Tensor<S>& gq = t.grad(ia);
        for (std::size_t u = 0; u < mask.size(); ++u) {
          if (!mask[u]) continue;
          for (std::size_t k = 0; k < q.cols(); ++k) {
            if (dir == KlDirection::kOriginalToAdapted)
              gq(u, k) -= g * std::exp(original(u, k));
            else
              gq(u, k) += g * std::exp(q(u, k)) * (q(u, k) - original(u, k) + S(1));
          }
        }
      },
      "kl_loss");
}

template <typename S>
Var<S> weighted_sum(const Var<S>& a, const Var<S>& b, S wb) {
  if (wb == S(0)) return a;
  return add(a, scale(b, wb));
}

/// Forward-only NLL over plain log-probability rows.
template <typename S>
S nll_value(const Tensor<S>& lp, const NllTargets& targets, Reduction reduction = Reduction::kMean) {
  std::size_t n = targets.active();
  S acc = 0;
  for (std::size_t u = 0; u < targets.mask.size(); ++u)
    if (targets.mask[u]) acc -= lp(u, targets.columns[u]);
  return (reduction == Reduction::kMean && n > 0) ? acc / static_cast<S>(n) : acc;
}

// ---- objectives ------------------------------------------------------------

template <typename S>
struct FntLossParts {
  Var<S> total;
  S rnnt = 0;
  S nll = 0;
};

/// L_rnnt + lambda * L_nll for one utterance, recorded on the tape behind
/// `ops`. The baseline has no LM term.
template <typename S>
FntLossParts<S> fnt_loss(TapeOps<S>& ops, const Transducer<S>& model, const Tensor<S>& features,
                         const SerializedLabel& label, const LossConfig& cfg) {
  cfg.validate();
  auto enc = model.encode(ops, features);
  auto out = model.assemble_lattice(ops, enc, label);
  FntLossParts<S> parts;
  Var<S> rnnt = rnnt_loss(out.lattice, label.tokens, model.blank_id(), out.frames);
  parts.rnnt = rnnt.value()[0];
  parts.total = rnnt;
  if (model.has_vocab_predictor()) {
    Var<S> nll = nll_loss(out.vocab_logprobs, nll_targets(model, label), cfg.reduction);
    parts.nll = nll.value()[0];
    parts.total = weighted_sum(rnnt, nll, static_cast<S>(cfg.lambda));
  }
  return parts;
}

template <typename S>
struct LossValues {
  S total = 0;
  S rnnt = 0;
  S nll = 0;
};

/// Forward-only form of fnt_loss (no tape).
template <typename S>
LossValues<S> fnt_loss_value(const Transducer<S>& model, const Tensor<S>& features,
                             const SerializedLabel& label, const LossConfig& cfg) {
  cfg.validate();
  EvalOps<S> ops(model.params());
  auto enc = model.encode(ops, features);
  auto out = model.assemble_lattice(ops, enc, label);
  LossValues<S> v;
  v.rnnt = rnnt_loss_and_grad(out.lattice, label.tokens, model.blank_id(), out.frames, false).loss;
  v.total = v.rnnt;
  if (model.has_vocab_predictor()) {
    v.nll = nll_value(out.vocab_logprobs, nll_targets(model, label), cfg.reduction);
    v.total = v.rnnt + static_cast<S>(cfg.lambda) * v.nll;
  }
  return v;
}

/// Log-probability rows of the vocabulary predictor over a plain token
/// sequence (no <cc>), plus the NLL targets for next-token prediction.
template <class Ops, typename S>
typename Ops::Value lm_logprobs(Ops& ops, const Transducer<S>& model, const std::vector<int>& tokens) {
  std::vector<int> ids{model.start_id()};
  ids.insert(ids.end(), tokens.begin(), tokens.end());
  return log_softmax_rows(stack_rows(model.vocab_run(ops, ids)));
}

template <typename S>
NllTargets lm_targets(const Transducer<S>& model, const std::vector<int>& tokens) {
  SerializedLabel l{tokens};
  return nll_targets(model, l);
}

template <typename S>
struct AdaptLossParts {
  Var<S> total;
  S nll = 0;
  S kl = 0;
};

/// L_nll + omega * L_kl on one text sequence. Only parameters bound as
/// trainable on `ops` receive gradients; `original` is the frozen reference.
template <typename S>
AdaptLossParts<S> adapt_loss(TapeOps<S>& ops, const Transducer<S>& model,
                             const Transducer<S>& original, const std::vector<int>& tokens,
                             const LossConfig& cfg) {
  cfg.validate();
  Var<S> lp = lm_logprobs(ops, model, tokens);
  NllTargets tg = lm_targets(model, tokens);
  AdaptLossParts<S> parts;
  Var<S> nll = nll_loss(lp, tg, cfg.reduction);
  parts.nll = nll.value()[0];
  parts.total = nll;
  if (cfg.omega > 0) {
    EvalOps<S> eops(original.params());
    Tensor<S> ref = lm_logprobs(eops, original, tokens);
    Var<S> kl = kl_loss(lp, ref, tg.mask, cfg.kl_direction, cfg.reduction);
    parts.kl = kl.value()[0];
    parts.total = weighted_sum(nll, kl, static_cast<S>(cfg.omega));
  }
  return parts;
}

}  // namespace tsot
