// tsot/decoding.hpp

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

// Frame-synchronous transducer decoding. Each hypothesis carries its own
// predictor state, i.e. both channel states of the vocabulary predictor, so
// a <cc> in one hypothesis never disturbs another.

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tsot/labels.hpp"
#include "tsot/model.hpp"

namespace tsot {

struct DecodeOptions {
  int beam = 16;
  int max_symbols_per_frame = 10;
  bool prune_double_cc = true;
  // Recompute every expanded hypothesis' predictor state from scratch and
  // compare (slow; for tests).
  bool verify_states = false;
};

struct NBestEntry {
  SerializedLabel label;
  double score = 0.0;
};

struct DecodeResult {
  std::vector<NBestEntry> nbest;  // best first
  // Best label after each frame (filled when requested).
  std::vector<SerializedLabel> partial_best;

  const NBestEntry& best() const { return nbest.front(); }
};

namespace detail {

template <typename S>
void check_state_matches(const Transducer<S>& model,
                         const typename Transducer<S>::DecodeState& got,
                         const std::vector<int>& tokens) {
  auto fresh = model.initial_state();
  for (int id : tokens) fresh = model.advance(fresh, id);
  bool same = fresh.joint_pred == got.joint_pred && fresh.vocab_logprobs == got.vocab_logprobs &&
              fresh.pred.active == got.pred.active;
  for (int c = 0; c < 2 && same; ++c)
    for (std::size_t l = 0; l < fresh.pred.vocab[c].h.size() && same; ++l)
      same = fresh.pred.vocab[c].h[l] == got.pred.vocab[c].h[l] &&
             fresh.pred.vocab[c].c[l] == got.pred.vocab[c].c[l];
  if (!same) throw std::logic_error("decoder: hypothesis state diverged from a fresh predictor run");
}

inline bool cc_blocked(const std::vector<int>& tokens, int cc, bool prune) {
  return prune && !tokens.empty() && tokens.back() == cc;
}

}  // namespace detail

template <typename S>
DecodeResult greedy_decode(const Transducer<S>& model, const Tensor<S>& features,
                           const DecodeOptions& opts = {}, bool keep_partials = false) {
  const int blank = model.blank_id(), cc = model.cc_id();
  auto fc = model.precompute(model.encode(features));
  auto state = model.initial_state();
  NBestEntry hyp;
  DecodeResult res;
  for (std::size_t t = 0; t < fc.frames(); ++t) {
    for (int emitted = 0;;) {
      Tensor<S> lp = model.output_logprobs(fc, t, state);
      bool block_cc = detail::cc_blocked(hyp.label.tokens, cc, opts.prune_double_cc);
      int best = -1;
      for (int k = 0; k < static_cast<int>(lp.cols()); ++k) {
        if (k == cc && block_cc) continue;
        if (best < 0 || lp[k] > lp[best]) best = k;
      }
      hyp.score += static_cast<double>(lp[best]);
      if (best == blank) break;
      hyp.label.tokens.push_back(best);
      state = model.advance(state, best);
      if (opts.verify_states) detail::check_state_matches(model, state, hyp.label.tokens);
      if (++emitted >= opts.max_symbols_per_frame) break;
    }
    if (keep_partials) res.partial_best.push_back(hyp.label);
  }
  res.nbest.push_back(std::move(hyp));
  return res;
}

/// Beam search with up to `max_symbols_per_frame` label expansions per frame.
/// Within a frame, blank-terminated hypotheses and label extensions compete
/// for the same `beam` slots; blank-terminated hypotheses with identical
/// token sequences are merged by adding their probabilities. With beam 1 this
/// reduces to greedy decoding.
template <typename S>
DecodeResult beam_search(const Transducer<S>& model, const Tensor<S>& features,
                         const DecodeOptions& opts = {}, bool keep_partials = false) {
  using State = typename Transducer<S>::DecodeState;
  if (opts.beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  const int blank = model.blank_id(), cc = model.cc_id();
  const std::size_t beam = static_cast<std::size_t>(opts.beam);

  struct Hyp {
    std::vector<int> tokens;
    double logp = 0;
    std::shared_ptr<const State> state;  // state after `tokens`, or of the parent
    int pending = -1;                    // token not yet folded into `state`
    int emitted = 0;                     // labels emitted in the current frame
  };
  auto realize = [&](Hyp& h) {
    if (h.pending < 0) return;
    h.state = std::make_shared<const State>(model.advance(*h.state, h.pending));
    h.pending = -1;
    if (opts.verify_states) detail::check_state_matches(model, *h.state, h.tokens);
  };

  auto fc = model.precompute(model.encode(features));
  std::vector<Hyp> hyps(1);
  hyps[0].state = std::make_shared<const State>(model.initial_state());
  DecodeResult res;

  for (std::size_t t = 0; t < fc.frames(); ++t) {
    std::map<std::vector<int>, Hyp> finished;
    std::vector<Hyp> active = std::move(hyps);
    for (auto& h : active) h.emitted = 0;

    while (!active.empty()) {
      struct Cand {
        Hyp* hyp;  // into `active`, or nullptr for a finished entry
        int token;
        double score;
        const std::vector<int>* key;
      };
      std::vector<Hyp> extensions;
      std::vector<std::pair<double, std::size_t>> ext_order;

      for (auto& h : active) {
        realize(h);
        Tensor<S> lp = model.output_logprobs(fc, t, *h.state);
        // Blank: the hypothesis leaves this frame.
        Hyp fin = h;
        fin.logp = h.logp + static_cast<double>(lp[blank]);
        auto it = finished.find(fin.tokens);
        if (it == finished.end())
          finished.emplace(fin.tokens, std::move(fin));
        else
          it->second.logp = log_add(it->second.logp, fin.logp);

        bool block_cc = detail::cc_blocked(h.tokens, cc, opts.prune_double_cc);
        std::vector<int> ks;
        for (int k = 0; k < static_cast<int>(lp.cols()); ++k)
          if (k != blank && !(k == cc && block_cc)) ks.push_back(k);
        std::stable_sort(ks.begin(), ks.end(), [&](int a, int b) { return lp[a] > lp[b]; });
        if (ks.size() > beam) ks.resize(beam);
        for (int k : ks) {
          Hyp e;
          e.tokens = h.tokens;
          e.tokens.push_back(k);
          e.logp = h.logp + static_cast<double>(lp[k]);
          e.state = h.state;
          e.pending = k;
          e.emitted = h.emitted + 1;
          extensions.push_back(std::move(e));
        }
      }

      // Rank finished entries and extensions together. Ties keep finished
      // entries first, then extensions in generation order.
      struct Ranked {
        double score;
        bool is_ext;
        std::size_t index;
        const std::vector<int>* fin_key;
      };
      std::vector<Ranked> pool;
      for (auto& [key, h] : finished) pool.push_back({h.logp, false, 0, &key});
      for (std::size_t i = 0; i < extensions.size(); ++i)
        pool.push_back({extensions[i].logp, true, i, nullptr});
      std::stable_sort(pool.begin(), pool.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        return !a.is_ext && b.is_ext;
      });
      if (pool.size() > beam) pool.resize(beam);

      std::map<std::vector<int>, Hyp> kept_finished;
      std::vector<Hyp> next_active;
      for (const auto& r : pool) {
        if (!r.is_ext) {
          auto node = finished.extract(*r.fin_key);
          kept_finished.insert(std::move(node));
          continue;
        }
        Hyp& e = extensions[r.index];
        if (e.emitted >= opts.max_symbols_per_frame) {
          // Symbol cap reached: leave the frame without scoring a blank.
          auto it = kept_finished.find(e.tokens);
          if (it == kept_finished.end())
            kept_finished.emplace(e.tokens, std::move(e));
          else
            it->second.logp = log_add(it->second.logp, e.logp);
        } else {
          next_active.push_back(std::move(e));
        }
      }
      finished = std::move(kept_finished);
      active = std::move(next_active);
    }

    hyps.clear();
    for (auto& [key, h] : finished) hyps.push_back(std::move(h));
    std::stable_sort(hyps.begin(), hyps.end(),
                     [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
    if (hyps.size() > beam) hyps.resize(beam);
    if (keep_partials) res.partial_best.push_back(SerializedLabel{hyps.front().tokens});
  }

  for (auto& h : hyps) res.nbest.push_back({SerializedLabel{h.tokens}, h.logp});
  return res;
}

template <typename S>
DecodeResult decode(const Transducer<S>& model, const Tensor<S>& features,
                    const DecodeOptions& opts = {}) {
  return opts.beam == 1 ? greedy_decode(model, features, opts) : beam_search(model, features, opts);
}

inline ChannelTranscripts split_channels(const SerializedLabel& label, const Vocabulary& vocab) {
  return deserialize_tsot(label, vocab);
}

}  // namespace tsot
