// tsot/model.hpp

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

// Factorized transducer for serialized multi-talker labels.
//
// Output ids follow the vocabulary: 0..|V|-1 regular tokens, |V| blank,
// |V|+1 <cc>. Every lattice row has |V|+2 normalized log-probabilities.
//
//   integrated   blank and <cc> come from the joint network; the vocabulary
//                predictor is a language model over V that keeps one state
//                per virtual channel and switches state on <cc>.
//   naive        <cc> is an ordinary member of the vocabulary predictor's
//                output; one predictor state; the joint produces blank only.
//   tsot_baseline plain transducer: one predictor, the joint produces all
//                |V|+2 logits; there is no separable language model.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsot/labels.hpp"
#include "tsot/layers.hpp"
#include "tsot/ops.hpp"
#include "tsot/params.hpp"

namespace tsot {

enum class Variant { kIntegrated, kNaive, kTsotBaseline };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kIntegrated: return "integrated";
    case Variant::kNaive: return "naive";
    case Variant::kTsotBaseline: return "tsot_baseline";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "integrated") return Variant::kIntegrated;
  if (s == "naive") return Variant::kNaive;
  if (s == "tsot_baseline") return Variant::kTsotBaseline;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected integrated, naive or tsot_baseline)");
}

struct ModelConfig {
  Variant variant = Variant::kIntegrated;
  int vocab_size = 30;
  int feat_dim = 16;
  int subsample = 1;
  int encoder_layers = 2;
  int encoder_dim = 128;
  int special_layers = 1;
  int special_dim = 64;
  int vocab_layers = 2;
  int vocab_dim = 128;
  int joint_dim = 64;
  std::string vocab_path;

  void validate() const {
    if (vocab_size < 1 || feat_dim < 1 || subsample < 1 || encoder_layers < 1 ||
        encoder_dim < 1 || special_layers < 1 || special_dim < 1 || vocab_layers < 1 ||
        vocab_dim < 1 || joint_dim < 1)
      throw std::invalid_argument("model config: all dimensions must be positive");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)}, {"vocab_size", c.vocab_size},
          {"feat_dim", c.feat_dim},          {"subsample", c.subsample},
          {"encoder_layers", c.encoder_layers}, {"encoder_dim", c.encoder_dim},
          {"special_layers", c.special_layers}, {"special_dim", c.special_dim},
          {"vocab_layers", c.vocab_layers},  {"vocab_dim", c.vocab_dim},
          {"joint_dim", c.joint_dim},        {"vocab_path", c.vocab_path}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
  auto get = [&](const char* k, int& dst) {
    if (j.contains(k)) dst = j[k].get<int>();
  };
  get("vocab_size", c.vocab_size);
  get("feat_dim", c.feat_dim);
  get("subsample", c.subsample);
  get("encoder_layers", c.encoder_layers);
  get("encoder_dim", c.encoder_dim);
  get("special_layers", c.special_layers);
  get("special_dim", c.special_dim);
  get("vocab_layers", c.vocab_layers);
  get("vocab_dim", c.vocab_dim);
  get("joint_dim", c.joint_dim);
  if (j.contains("vocab_path")) c.vocab_path = j["vocab_path"].get<std::string>();
  c.validate();
  return c;
}

/// Recurrent state of both predictors. `vocab[0]` and `vocab[1]` are the two
/// channel states of the vocabulary predictor and `active` selects the one the
/// next regular token updates. Single-state variants only use `vocab[0]`.
template <typename V>
struct PredictorState {
  std::array<LstmState<V>, 2> vocab;
  int active = 0;
  LstmState<V> special;
};

template <typename V>
struct LatticeOutput {
  V lattice;         // T*(U+1) x (|V|+2), row t*(U+1)+u, log-normalized
  V vocab_logprobs;  // (U+1) x vocab outputs, LogSoftmax of the predictor rows
  std::size_t frames = 0;
  std::size_t label_len = 0;
};

template <typename S>
class Transducer {
 public:
  using Scalar = S;

  static constexpr const char* kEncoderPrefix = "encoder.";
  static constexpr const char* kVocabPrefix = "vocab_predictor.";

  Transducer(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const int V = cfg_.vocab_size;
    const bool baseline = cfg_.variant == Variant::kTsotBaseline;

    encoder_in_ = Linear::create(store_, "encoder.input", cfg_.feat_dim * cfg_.subsample,
                                 cfg_.encoder_dim, rng);
    encoder_ = LstmStack::create(store_, "encoder", cfg_.encoder_dim, cfg_.encoder_dim,
                                 cfg_.encoder_layers, rng);

    // The baseline's single predictor is sized like the vocabulary predictor.
    std::string sp = baseline ? "predictor" : "special_predictor";
    int sp_dim = baseline ? cfg_.vocab_dim : cfg_.special_dim;
    int sp_layers = baseline ? cfg_.vocab_layers : cfg_.special_layers;
    special_embed_ = store_.add_uniform(sp + ".embed", V + 2, sp_dim, sp_dim, rng);
    special_ = LstmStack::create(store_, sp, sp_dim, sp_dim, sp_layers, rng);

    if (!baseline) {
      int rows = cfg_.variant == Variant::kNaive ? V + 2 : V + 1;
      vocab_embed_ = store_.add_uniform("vocab_predictor.embed", rows, cfg_.vocab_dim,
                                        cfg_.vocab_dim, rng);
      vocab_ = LstmStack::create(store_, "vocab_predictor", cfg_.vocab_dim, cfg_.vocab_dim,
                                 cfg_.vocab_layers, rng);
      vocab_out_ = Linear::create(store_, "vocab_predictor.output", cfg_.vocab_dim,
                                  vocab_outputs(), rng);
    }

    joint_enc_ = Linear::create(store_, "joint.enc", cfg_.encoder_dim, cfg_.joint_dim, rng);
    joint_pred_ = Linear::create(store_, "joint.pred", sp_dim, cfg_.joint_dim, rng, false);
    joint_out_ = Linear::create(store_, "joint.out", cfg_.joint_dim, special_outputs(), rng);
    if (!baseline)
      acoustic_vocab_ = Linear::create(store_, "acoustic_vocab", cfg_.encoder_dim,
                                       vocab_outputs(), rng);
  }

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return cfg_.variant; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }

  int vocab_size() const { return cfg_.vocab_size; }
  int blank_id() const { return cfg_.vocab_size; }
  int start_id() const { return cfg_.vocab_size; }
  int cc_id() const { return cfg_.vocab_size + 1; }
  int num_outputs() const { return cfg_.vocab_size + 2; }
  bool has_vocab_predictor() const { return cfg_.variant != Variant::kTsotBaseline; }

  // Width of the vocabulary predictor output (|V|, or |V|+1 when <cc> is a
  // member of the vocabulary as in the naive variant).
  int vocab_outputs() const {
    return cfg_.variant == Variant::kNaive ? cfg_.vocab_size + 1 : cfg_.vocab_size;
  }
  int special_outputs() const {
    switch (cfg_.variant) {
      case Variant::kIntegrated: return 2;  // blank, <cc>
      case Variant::kNaive: return 1;       // blank
      case Variant::kTsotBaseline: return cfg_.vocab_size + 2;
    }
    return 0;
  }

  // Column of token `id` in the vocabulary predictor output, or -1.
  int vocab_column(int id) const {
    if (id >= 0 && id < cfg_.vocab_size) return id;
    if (id == cc_id() && cfg_.variant == Variant::kNaive) return cfg_.vocab_size;
    return -1;
  }

  // ---- encoder ------------------------------------------------------------

  // Stacks `subsample` consecutive frames (zero padded at the end).
  Tensor<S> stack_frames(const Tensor<S>& feats) const {
    if (feats.rows() == 0) throw std::invalid_argument("encode: empty input");
    if (static_cast<int>(feats.cols()) != cfg_.feat_dim)
      throw ShapeError("encode: feature dim " + std::to_string(feats.cols()) + " != " +
                       std::to_string(cfg_.feat_dim));
    if (cfg_.subsample == 1) return feats;
    std::size_t s = cfg_.subsample, d = feats.cols();
    std::size_t T = (feats.rows() + s - 1) / s;
    Tensor<S> out(T, s * d);
    for (std::size_t t = 0; t < feats.rows(); ++t)
      std::copy(feats.row(t).begin(), feats.row(t).end(),
                out.row(t / s).begin() + (t % s) * d);
    return out;
  }

  template <class Ops>
  typename Ops::Value encode(Ops& ops, const Tensor<S>& feats) const {
    for (S v : feats.storage())
      if (!std::isfinite(v)) throw NumericError("encode: non-finite feature value");
    auto x = ops.constant(stack_frames(feats));
    auto h = encoder_in_(ops, x);
    return encoder_.sequence(ops, h);
  }

  // ---- predictors ---------------------------------------------------------

  template <class Ops>
  PredictorState<typename Ops::Value> zero_state(Ops& ops) const {
    PredictorState<typename Ops::Value> st;
    if (has_vocab_predictor()) {
      st.vocab[0] = vocab_.zero_state(ops);
      st.vocab[1] = vocab_.zero_state(ops);
    }
    st.special = special_.zero_state(ops);
    return st;
  }

  template <class Ops, class V>
  V special_step(Ops& ops, int id, LstmState<V>& st) const {
    if (id < 0 || id >= num_outputs())
      throw std::out_of_range("special predictor: token id " + std::to_string(id));
    V x = embedding(ops.param(special_embed_), std::vector<int>{id});
    return special_.step(ops, x, st);
  }

  // Initial vocabulary-predictor step on the start symbol: runs with c0 and
  // then copies c0 into c1.
  template <class Ops, class V>
  V vocab_start(Ops& ops, PredictorState<V>& st) const {
    require_vocab_predictor();
    V h = vocab_cell(ops, start_id(), st.vocab[0]);
    st.vocab[1] = st.vocab[0];
    st.active = 0;
    return h;
  }

  // One vocabulary-predictor step after the start symbol. In the integrated
  // variant <cc> yields the all-zero row and toggles the active channel
  // without touching either state.
  template <class Ops, class V>
  V vocab_step(Ops& ops, int id, PredictorState<V>& st) const {
    require_vocab_predictor();
    if (id == blank_id())
      throw std::invalid_argument("vocabulary predictor: blank is only valid as the start symbol");
    if (cfg_.variant == Variant::kIntegrated && id == cc_id()) {
      st.active = 1 - st.active;
      return ops.zeros(1, vocab_outputs());
    }
    if (cfg_.variant == Variant::kNaive) return vocab_cell(ops, id, st.vocab[0]);
    return vocab_cell(ops, id, st.vocab[st.active]);
  }

  /// Runs the vocabulary predictor over `ids`, where ids[0] is the start
  /// symbol. Returns one logit row per position (U+1 rows for a label of
  /// length U).
  template <class Ops>
  std::vector<typename Ops::Value> vocab_run(Ops& ops, const std::vector<int>& ids,
                                             PredictorState<typename Ops::Value>* final_state = nullptr) const {
    using V = typename Ops::Value;
    if (ids.empty() || ids[0] != start_id())
      throw std::invalid_argument("vocab_run: sequence must begin with the start symbol");
    PredictorState<V> st = zero_state(ops);
    std::vector<V> rows;
    rows.reserve(ids.size());
    rows.push_back(vocab_start(ops, st));
    for (std::size_t u = 1; u < ids.size(); ++u) rows.push_back(vocab_step(ops, ids[u], st));
    if (final_state) *final_state = st;
    return rows;
  }

  // ---- lattice ------------------------------------------------------------

  template <class Ops>
  LatticeOutput<typename Ops::Value> assemble_lattice(Ops& ops, const typename Ops::Value& enc,
                                                      const SerializedLabel& label) const {
    using V = typename Ops::Value;
    const int Vn = cfg_.vocab_size;
    for (int id : label.tokens)
      if (id < 0 || id > cc_id() || id == blank_id())
        throw std::invalid_argument("assemble_lattice: invalid label id " + std::to_string(id));
    std::vector<int> inputs;
    inputs.reserve(label.size() + 1);
    inputs.push_back(start_id());
    inputs.insert(inputs.end(), label.tokens.begin(), label.tokens.end());

    LstmState<V> sst = special_.zero_state(ops);
    std::vector<V> gs;
    for (int id : inputs) gs.push_back(special_step(ops, id, sst));
    V g = stack_rows(gs);
    V hidden = tanh(grid_add(joint_enc_(ops, enc), joint_pred_(ops, g)));
    V zs = joint_out_(ops, hidden);

    LatticeOutput<V> out;
    out.frames = Ops::value(enc).rows();
    out.label_len = label.size();
    if (!has_vocab_predictor()) {
      out.lattice = log_softmax_rows(zs);
      return out;
    }
    V z_u = log_softmax_rows(stack_rows(vocab_run(ops, inputs)));
    V z_tu = grid_add(acoustic_vocab_(ops, enc), z_u);
    V logits = cfg_.variant == Variant::kIntegrated
                   ? concat_cols(std::vector<V>{z_tu, zs})
                   : concat_cols(std::vector<V>{slice_cols(z_tu, 0, Vn), zs, slice_cols(z_tu, Vn, 1)});
    out.lattice = log_softmax_rows(logits);
    out.vocab_logprobs = z_u;
    return out;
  }

  // ---- step-wise inference ---------------------------------------------------

  /// Per-utterance projections shared by every hypothesis.
  struct FrameCache {
    Tensor<S> joint_enc;       // T x joint_dim
    Tensor<S> acoustic_vocab;  // T x vocab outputs (empty for the baseline)
    std::size_t frames() const { return joint_enc.rows(); }
  };

  /// Predictor state plus the cached quantities the joint needs at the next
  /// lattice node.
  struct DecodeState {
    PredictorState<Tensor<S>> pred;
    Tensor<S> joint_pred;      // joint.pred(g_u)
    Tensor<S> vocab_logprobs;  // LogSoftmax(h_u^v); empty for the baseline
  };

  FrameCache precompute(const Tensor<S>& enc) const {
    EvalOps<S> ops(store_);
    FrameCache fc;
    fc.joint_enc = joint_enc_(ops, enc);
    if (has_vocab_predictor()) fc.acoustic_vocab = acoustic_vocab_(ops, enc);
    return fc;
  }

  Tensor<S> encode(const Tensor<S>& feats) const {
    EvalOps<S> ops(store_);
    return encode(ops, feats);
  }

  DecodeState initial_state() const {
    EvalOps<S> ops(store_);
    DecodeState ds;
    ds.pred = zero_state(ops);
    ds.joint_pred = joint_pred_(ops, special_step(ops, start_id(), ds.pred.special));
    if (has_vocab_predictor()) ds.vocab_logprobs = log_softmax_rows(vocab_start(ops, ds.pred));
    return ds;
  }

  DecodeState advance(const DecodeState& prev, int id) const {
    EvalOps<S> ops(store_);
    DecodeState ds = prev;
    ds.joint_pred = joint_pred_(ops, special_step(ops, id, ds.pred.special));
    if (has_vocab_predictor()) ds.vocab_logprobs = log_softmax_rows(vocab_step(ops, id, ds.pred));
    return ds;
  }

  /// Normalized log-probabilities over all |V|+2 outputs at frame t.
  Tensor<S> output_logprobs(const FrameCache& fc, std::size_t t, const DecodeState& ds) const {
    EvalOps<S> ops(store_);
    Tensor<S> hidden = tanh(add(take_row(fc.joint_enc, t), ds.joint_pred));
    Tensor<S> zs = joint_out_(ops, hidden);
    if (!has_vocab_predictor()) return log_softmax_rows(zs);
    Tensor<S> zv = add(take_row(fc.acoustic_vocab, t), ds.vocab_logprobs);
    const std::size_t Vn = cfg_.vocab_size;
    Tensor<S> logits = cfg_.variant == Variant::kIntegrated
                           ? concat_cols(std::vector<Tensor<S>>{zv, zs})
                           : concat_cols(std::vector<Tensor<S>>{slice_cols(zv, 0, Vn), zs,
                                                                slice_cols(zv, Vn, 1)});
    return log_softmax_rows(logits);
  }

 private:
  void require_vocab_predictor() const {
    if (!has_vocab_predictor())
      throw std::logic_error("the tsot_baseline variant has no vocabulary predictor");
  }

  template <class Ops, class V>
  V vocab_cell(Ops& ops, int id, LstmState<V>& st) const {
    int rows = cfg_.variant == Variant::kNaive ? cfg_.vocab_size + 2 : cfg_.vocab_size + 1;
    if (id < 0 || id >= rows)
      throw std::out_of_range("vocabulary predictor: cannot embed token id " + std::to_string(id));
    V x = embedding(ops.param(vocab_embed_), std::vector<int>{id});
    return vocab_out_(ops, vocab_.step(ops, x, st));
  }

  ModelConfig cfg_;
  ParamStore<S> store_;
  Linear encoder_in_;
  LstmStack encoder_;
  std::size_t special_embed_ = 0;
  LstmStack special_;
  std::size_t vocab_embed_ = 0;
  LstmStack vocab_;
  Linear vocab_out_;
  Linear joint_enc_, joint_pred_, joint_out_;
  Linear acoustic_vocab_;
};

}  // namespace tsot
