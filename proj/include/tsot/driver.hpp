// tsot/driver.hpp

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

// Experiment workflow shared by the command-line tool and the tests: LM
// pretraining of the vocabulary predictor, transducer training, text-only
// adaptation, decoding and scoring. Models train in 32-bit floats.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tsot/checkpoint.hpp"
#include "tsot/decoding.hpp"
#include "tsot/labels.hpp"
#include "tsot/losses.hpp"
#include "tsot/model.hpp"
#include "tsot/optim.hpp"
#include "tsot/run_info.hpp"
#include "tsot/scoring.hpp"
#include "tsot/synth.hpp"

namespace tsot {

using Model = Transducer<float>;
using json = nlohmann::json;

// ---- model files -----------------------------------------------------------

inline json vocab_to_json(const Vocabulary& v) {
  return {{"tokens", v.tokens()},
          {"tokenization", v.mode() == TokenizationMode::kWord ? "word" : "character"}};
}

inline Vocabulary vocab_from_json(const json& j) {
  auto mode = j.at("tokenization").get<std::string>() == "word" ? TokenizationMode::kWord
                                                                 : TokenizationMode::kCharacter;
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>(), mode);
}

inline std::string vocab_file(const std::string& data_dir) { return data_dir + "/vocab.txt"; }

struct LoadedModel {
  Model model;
  Vocabulary vocab;
  json meta;
};

inline void save_model(const std::string& path, const Model& m, const Vocabulary& vocab,
                       const std::string& kind, json extra = json::object(),
                       const std::string& prefix = "") {
  json meta = {{"kind", kind}, {"model", to_json(m.config())}, {"vocab", vocab_to_json(vocab)}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  Checkpoint<float> c;
  for (const auto& e : m.params())
    if (e.name.rfind(prefix, 0) == 0) c.tensors.push_back({e.name, e.value});
  c.meta = std::move(meta);
  save_checkpoint(path, c);
}

inline LoadedModel load_model(const std::string& path) {
  auto ckpt = load_checkpoint<float>(path);
  if (!ckpt.meta.contains("model") || !ckpt.meta.contains("vocab"))
    throw CheckpointError("'" + path + "' is not a model checkpoint");
  LoadedModel lm{Model(model_config_from_json(ckpt.meta["model"]), 0),
                 vocab_from_json(ckpt.meta["vocab"]), ckpt.meta};
  load_into(lm.model.params(), ckpt, "", true);
  return lm;
}

inline void require_same_vocab(const Vocabulary& model_vocab, const Vocabulary& data_vocab,
                               const std::string& what) {
  if (!(model_vocab == data_vocab))
    throw std::invalid_argument("vocabulary mismatch between model (" +
                                std::to_string(model_vocab.size()) + " tokens) and " + what + " (" +
                                std::to_string(data_vocab.size()) + " tokens)");
}

inline std::vector<int> text_ids(const std::vector<std::string>& words, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : words) {
    auto t = vocab.tokenize(w);
    if (t.empty()) throw LabelError("out-of-vocabulary word '" + w + "' in text corpus");
    ids.insert(ids.end(), t.begin(), t.end());
  }
  return ids;
}

/// exp of the mean per-token NLL of the vocabulary predictor.
inline double perplexity(const Model& m, const std::vector<std::vector<int>>& sentences) {
  EvalOps<float> ops(m.params());
  double nll = 0;
  std::size_t n = 0;
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    Tensor<float> lp = lm_logprobs(ops, m, s);
    auto tg = lm_targets(m, s);
    nll += nll_value(lp, tg, Reduction::kSum);
    n += tg.active();
  }
  return n ? std::exp(nll / static_cast<double>(n)) : 1.0;
}

// Position `i` of the deterministic sample stream for (seed, N): a fresh
// permutation of 0..N-1 per pass.
class SampleOrder {
 public:
  SampleOrder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

  std::size_t at(std::uint64_t i) {
    std::uint64_t pass = i / n_;
    if (pass != pass_ || perm_.empty()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      Rng rng(mix_seed(seed_, pass));
      std::shuffle(perm_.begin(), perm_.end(), rng);
      pass_ = pass;
    }
    return perm_[i % n_];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::vector<std::size_t> perm_;
};

struct OptimOptions {
  double peak_lr = 3e-3;
  long warmup_steps = 300;
  long steps = 3000;
  int batch_size = 16;
  AdamWConfig adam;

  LinearSchedule schedule() const { return {peak_lr, 0.0, warmup_steps, steps}; }
};

inline json to_json(const OptimOptions& o) {
  return {{"peak_lr", o.peak_lr},       {"warmup_steps", o.warmup_steps},
          {"steps", o.steps},           {"batch_size", o.batch_size},
          {"beta1", o.adam.beta1},      {"beta2", o.adam.beta2},
          {"weight_decay", o.adam.weight_decay}, {"clip_norm", o.adam.clip_norm}};
}

inline void check_finite_loss(double v, long step, const std::string& what) {
  if (!std::isfinite(v))
    throw NumericError(what + " diverged: non-finite loss at step " + std::to_string(step));
}

// ---- synth-data --------------------------------------------------------------

struct CorpusSplit {
  const char* name;
  Domain domain;
  MixMode mode;
  int SynthConfig::*count;
};

inline const std::vector<CorpusSplit>& corpus_splits() {
  static const std::vector<CorpusSplit> splits{
      {"train", Domain::kGeneral, MixMode::kRandom, &SynthConfig::train_utts},
      {"dev", Domain::kGeneral, MixMode::kRandom, &SynthConfig::dev_utts},
      {"test_general_single", Domain::kGeneral, MixMode::kSingle, &SynthConfig::test_utts},
      {"test_general_mixed", Domain::kGeneral, MixMode::kMixed, &SynthConfig::test_utts},
      {"test_shifted_single", Domain::kShifted, MixMode::kSingle, &SynthConfig::test_utts},
      {"test_shifted_mixed", Domain::kShifted, MixMode::kMixed, &SynthConfig::test_utts},
  };
  return splits;
}

struct SynthSummary {
  std::map<std::string, std::size_t> utterances;
  std::map<std::string, double> mixed_fraction;
};

/// Writes the vocabulary, every audio split and the text corpora to `dir`.
inline SynthSummary cmd_synth_data(const SynthConfig& cfg, const std::string& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  write_run_info(dir, "synth-data", to_json(cfg), {});
  SynthLanguage lang(cfg);
  lang.vocabulary().save(vocab_file(dir));
  SynthSummary sum;
  std::uint64_t k = 100;
  for (const auto& sp : corpus_splits()) {
    auto utts = gen_utterances(lang, cfg.*(sp.count), sp.domain, sp.mode, mix_seed(cfg.seed, k++),
                               sp.name);
    write_split(dir, sp.name, utts, lang.vocabulary());
    std::size_t mixed = 0;
    for (const auto& u : utts) mixed += u.label.tokens.end() != std::find(u.label.tokens.begin(), u.label.tokens.end(), lang.vocabulary().cc_id());
    sum.utterances[sp.name] = utts.size();
    sum.mixed_fraction[sp.name] = utts.empty() ? 0.0 : static_cast<double>(mixed) / utts.size();
  }
  struct Text {
    const char* file;
    Domain domain;
    int SynthConfig::*count;
  };
  const Text texts[] = {{"lm_text.txt", Domain::kGeneral, &SynthConfig::lm_text_utts},
                        {"adapt_text.txt", Domain::kShifted, &SynthConfig::adapt_text_utts},
                        {"heldout_general.txt", Domain::kGeneral, &SynthConfig::heldout_text_utts},
                        {"heldout_shifted.txt", Domain::kShifted, &SynthConfig::heldout_text_utts}};
  for (const auto& t : texts)
    write_text(dir + "/" + t.file, gen_text(lang, cfg.*(t.count), t.domain, mix_seed(cfg.seed, k++)));
  std::ofstream(dir + "/synth_config.json") << to_json(cfg).dump(2) << '\n';
  return sum;
}

// ---- lm-pretrain -------------------------------------------------------------

struct LmPretrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string text;     // default <data>/lm_text.txt
  std::string heldout;  // default <data>/heldout_general.txt
  ModelConfig model;
  OptimOptions optim{3e-3, 100, 1500, 32, {}};
  std::uint64_t seed = 1;
  bool verbose = true;
};

struct LmPretrainSummary {
  double initial_ppl = 0;
  double final_ppl = 0;
  std::string checkpoint;
};

inline LmPretrainSummary cmd_lm_pretrain(const LmPretrainOptions& o) {
  WallClock clock;
  Vocabulary vocab = Vocabulary::load(vocab_file(o.data_dir));
  ModelConfig cfg = o.model;
  cfg.vocab_size = vocab.size();
  if (cfg.variant == Variant::kTsotBaseline)
    throw std::invalid_argument("lm-pretrain: the tsot_baseline variant has no vocabulary predictor");
  std::string text = o.text.empty() ? o.data_dir + "/lm_text.txt" : o.text;
  std::string heldout = o.heldout.empty() ? o.data_dir + "/heldout_general.txt" : o.heldout;
  std::vector<std::vector<int>> train, dev;
  for (const auto& s : read_text(text)) train.push_back(text_ids(s, vocab));
  for (const auto& s : read_text(heldout)) dev.push_back(text_ids(s, vocab));
  if (train.empty()) throw std::invalid_argument("lm-pretrain: empty text corpus " + text);

  json echo = {{"data_dir", o.data_dir}, {"text", text}, {"heldout", heldout},
               {"model", to_json(cfg)}, {"optim", to_json(o.optim)}, {"seed", o.seed}};
  write_run_info(o.out_dir, "lm-pretrain", echo, {vocab_file(o.data_dir), text, heldout});

  Model model(cfg, mix_seed(o.seed, 0));
  const std::vector<std::string> trainable{Model::kVocabPrefix};
  AdamW<float> opt(model.params(), o.optim.adam);
  opt.set_trainable_prefixes(trainable);
  auto sched = o.optim.schedule();
  SampleOrder order(train.size(), mix_seed(o.seed, 1));
  LossConfig lc;

  LmPretrainSummary sum;
  sum.initial_ppl = perplexity(model, dev);
  std::ofstream metrics(o.out_dir + "/metrics.jsonl");
  metrics << json{{"step", 0}, {"heldout_ppl", sum.initial_ppl}}.dump() << '\n';
  const int B = o.optim.batch_size;
  for (long step = 0; step < o.optim.steps; ++step) {
    model.params().zero_grad();
    double loss = 0;
    for (int b = 0; b < B; ++b) {
      const auto& s = train[order.at(static_cast<std::uint64_t>(step) * B + b)];
      Tape<float> tape;
      TapeBinding<float> bind(tape, model.params());
      bind.set_trainable_prefixes(trainable);
      TapeOps<float> ops(bind);
      Var<float> lp = lm_logprobs(ops, model, s);
      Var<float> nll = nll_loss(lp, lm_targets(model, s), lc.reduction);
      tape.backward(nll, 1.0f / static_cast<float>(B));
      loss += nll.value()[0];
    }
    loss /= B;
    check_finite_loss(loss, step, "lm-pretrain");
    double lr = sched(step);
    opt.step(model.params(), lr);
    metrics << json{{"step", step + 1}, {"loss", loss}, {"nll", loss}, {"lr", lr},
                    {"wall_time", clock.seconds()}}.dump()
            << '\n';
  }
  sum.final_ppl = perplexity(model, dev);
  metrics << json{{"step", o.optim.steps}, {"heldout_ppl", sum.final_ppl}}.dump() << '\n';
  sum.checkpoint = o.out_dir + "/lm.ckpt";
  save_model(sum.checkpoint, model, vocab, "lm",
             {{"seed", o.seed}, {"heldout_ppl", sum.final_ppl}}, Model::kVocabPrefix);
  std::ofstream(o.out_dir + "/summary.txt")
      << "lm-pretrain: heldout perplexity " << sum.initial_ppl << " -> " << sum.final_ppl
      << " (uniform " << vocab.size() << ") in " << clock.seconds() << " s\n";
  if (o.verbose)
    std::cerr << "lm-pretrain: heldout perplexity " << sum.initial_ppl << " -> " << sum.final_ppl
              << "\n";
  return sum;
}

// ---- train ---------------------------------------------------------------------

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string train_split = "train";
  std::string dev_split = "dev";
  ModelConfig model;
  LossConfig loss;
  OptimOptions optim;
  std::uint64_t seed = 1;
  std::string init_encoder;    // checkpoint providing encoder.*
  std::string init_predictor;  // checkpoint providing vocab_predictor.*
  std::string resume;          // train_state.ckpt of an earlier run
  long eval_every = 500;
  long checkpoint_every = 500;
  long stop_after = -1;  // leave the loop early (the schedule is unchanged)
  int dev_limit = 0;     // 0 = whole dev split
  bool verbose = true;
};

inline json to_json(const TrainOptions& o) {
  return {{"data_dir", o.data_dir},
          {"train_split", o.train_split},
          {"dev_split", o.dev_split},
          {"model", to_json(o.model)},
          {"lambda", o.loss.lambda},
          {"optim", to_json(o.optim)},
          {"seed", o.seed},
          {"init_encoder", o.init_encoder},
          {"init_predictor", o.init_predictor},
          {"resume", o.resume},
          {"eval_every", o.eval_every},
          {"checkpoint_every", o.checkpoint_every}};
}

struct ValidStats {
  double loss = 0, rnnt = 0, nll = 0;
};

inline ValidStats validate(const Model& m, const std::vector<Utterance>& dev, const LossConfig& lc,
                           int limit = 0) {
  ValidStats v;
  std::size_t n = limit > 0 ? std::min<std::size_t>(limit, dev.size()) : dev.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto lv = fnt_loss_value(m, dev[i].features, dev[i].label, lc);
    v.loss += lv.total;
    v.rnnt += lv.rnnt;
    v.nll += lv.nll;
  }
  if (n) v.loss /= n, v.rnnt /= n, v.nll /= n;
  return v;
}

struct TrainSummary {
  ValidStats initial;  // before the first update (only when not resuming)
  ValidStats final;
  std::vector<double> losses;  // training loss of every step run here
  long best_step = -1;
  double best_loss = 0;
  double seconds = 0;
  std::string checkpoint;  // final model
};

inline Checkpoint<float> train_state(const Model& m, const AdamW<float>& opt, long step,
                                     double best_loss, long best_step) {
  Checkpoint<float> c = to_checkpoint(m.params());
  std::size_t i = 0;
  for (const auto& e : m.params()) {
    c.tensors.push_back({"adam.m." + e.name, opt.first_moments()[i]});
    c.tensors.push_back({"adam.v." + e.name, opt.second_moments()[i]});
    ++i;
  }
  c.meta = {{"kind", "train_state"}, {"step", step}, {"adam_steps", opt.steps_taken()},
            {"best_loss", best_loss}, {"best_step", best_step}, {"model", to_json(m.config())}};
  return c;
}

inline TrainSummary cmd_train(const TrainOptions& o) {
  WallClock clock;
  namespace fs = std::filesystem;
  Vocabulary vocab = Vocabulary::load(vocab_file(o.data_dir));
  ModelConfig cfg = o.model;
  cfg.vocab_size = vocab.size();
  cfg.vocab_path = vocab_file(o.data_dir);
  o.loss.validate();
  auto train = read_split(o.data_dir, o.train_split, vocab);
  auto dev = read_split(o.data_dir, o.dev_split, vocab);
  if (train.empty()) throw std::invalid_argument("train: empty training split");
  for (const auto& u : train)
    if (static_cast<int>(u.features.cols()) != cfg.feat_dim)
      throw ShapeError("train: data feature dim " + std::to_string(u.features.cols()) +
                       " != model feat_dim " + std::to_string(cfg.feat_dim));

  TrainOptions echo_opts = o;
  echo_opts.model = cfg;
  write_run_info(o.out_dir, "train", to_json(echo_opts),
                 {vocab_file(o.data_dir), o.data_dir + "/" + o.train_split + ".f32",
                  o.data_dir + "/" + o.train_split + ".jsonl", o.init_encoder, o.init_predictor,
                  o.resume});

  Model model(cfg, mix_seed(o.seed, 0));
  if (!o.init_encoder.empty()) {
    auto ck = load_checkpoint<float>(o.init_encoder);
    load_into(model.params(), ck, Model::kEncoderPrefix, true);
  }
  if (!o.init_predictor.empty()) {
    if (!model.has_vocab_predictor())
      throw std::invalid_argument("train: --init-predictor needs a factorized variant");
    auto ck = load_checkpoint<float>(o.init_predictor);
    load_into(model.params(), ck, Model::kVocabPrefix, true);
  }

  AdamW<float> opt(model.params(), o.optim.adam);
  auto sched = o.optim.schedule();
  long start = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  long best_step = -1;
  if (!o.resume.empty()) {
    auto st = load_checkpoint<float>(o.resume);
    if (st.meta.value("kind", "") != "train_state")
      throw CheckpointError("train: '" + o.resume + "' is not a training state");
    load_into(model.params(), st, "", true);
    std::size_t i = 0;
    for (const auto& e : model.params()) {
      const Tensor<float>* m = st.find("adam.m." + e.name);
      const Tensor<float>* v = st.find("adam.v." + e.name);
      if (!m || !v) throw CheckpointError("train: optimizer state missing for " + e.name);
      opt.first_moments()[i] = *m;
      opt.second_moments()[i] = *v;
      ++i;
    }
    start = st.meta.at("step").get<long>();
    opt.set_steps_taken(st.meta.at("adam_steps").get<long>());
    best_loss = st.meta.at("best_loss").get<double>();
    best_step = st.meta.at("best_step").get<long>();
  }

  TrainSummary sum;
  std::ofstream metrics(o.out_dir + "/metrics.jsonl", start > 0 ? std::ios::app : std::ios::trunc);
  auto log_valid = [&](long step, const ValidStats& v) {
    metrics << json{{"step", step}, {"valid_loss", v.loss}, {"valid_rnnt", v.rnnt},
                    {"valid_nll", v.nll}, {"wall_time", clock.seconds()}}.dump()
            << '\n';
    if (o.verbose)
      std::cerr << "train step " << step << ": valid loss " << v.loss << " (rnnt " << v.rnnt
                << ", nll " << v.nll << ")\n";
  };
  if (start == 0) {
    sum.initial = validate(model, dev, o.loss, o.dev_limit);
    log_valid(0, sum.initial);
  }

  SampleOrder order(train.size(), mix_seed(o.seed, 1));
  const int B = o.optim.batch_size;
  long end = o.optim.steps;
  if (o.stop_after >= 0) end = std::min(end, o.stop_after);
  for (long step = start; step < end; ++step) {
    model.params().zero_grad();
    double loss = 0, rnnt = 0, nll = 0;
    for (int b = 0; b < B; ++b) {
      const auto& u = train[order.at(static_cast<std::uint64_t>(step) * B + b)];
      Tape<float> tape;
      TapeBinding<float> bind(tape, model.params());
      TapeOps<float> ops(bind);
      auto parts = fnt_loss(ops, model, u.features, u.label, o.loss);
      tape.backward(parts.total, 1.0f / static_cast<float>(B));
      loss += parts.total.value()[0];
      rnnt += parts.rnnt;
      nll += parts.nll;
    }
    loss /= B, rnnt /= B, nll /= B;
    check_finite_loss(loss, step, "train");
    double lr = sched(step);
    opt.step(model.params(), lr);
    sum.losses.push_back(loss);
    metrics << json{{"step", step + 1}, {"loss", loss}, {"rnnt", rnnt}, {"nll", nll},
                    {"lr", lr}, {"wall_time", clock.seconds()}}.dump()
            << '\n';

    long done = step + 1;
    if (done % o.eval_every == 0 || done == o.optim.steps) {
      ValidStats v = validate(model, dev, o.loss, o.dev_limit);
      log_valid(done, v);
      if (v.loss < best_loss) {
        best_loss = v.loss;
        best_step = done;
        save_model(o.out_dir + "/best.ckpt", model, vocab, "fnt", {{"step", done}, {"seed", o.seed}});
      }
      sum.final = v;
    }
    if (done % o.checkpoint_every == 0 || done == end)
      save_checkpoint(o.out_dir + "/train_state.ckpt",
                      train_state(model, opt, done, best_loss, best_step));
  }
  sum.checkpoint = o.out_dir + "/model.ckpt";
  save_model(sum.checkpoint, model, vocab, "fnt", {{"step", end}, {"seed", o.seed}});
  sum.best_step = best_step;
  sum.best_loss = best_loss;
  sum.seconds = clock.seconds();
  std::ofstream(o.out_dir + "/summary.txt")
      << "train (" << to_string(cfg.variant) << "): " << (end - start) << " steps in "
      << sum.seconds << " s; best valid loss " << best_loss << " at step " << best_step << "\n";
  return sum;
}

// ---- adapt -------------------------------------------------------------------

struct AdaptOptions {
  std::string model_path;
  std::string text;     // target-domain text
  std::string heldout;  // optional target-domain held-out text
  std::string out_dir;
  LossConfig loss;
  OptimOptions optim{1e-3, 20, 300, 16, {}};
  std::uint64_t seed = 1;
  bool verbose = true;
};

struct AdaptSummary {
  double initial_nll = 0;  // on the held-out text (or the adaptation text)
  double final_nll = 0;
  std::vector<double> nll_history;  // evaluated every `eval_every` steps
  std::string checkpoint;
};

inline double mean_nll(const Model& m, const std::vector<std::vector<int>>& sents) {
  return std::log(perplexity(m, sents));
}

inline AdaptSummary cmd_adapt(const AdaptOptions& o, long eval_every = 50) {
  WallClock clock;
  auto loaded = load_model(o.model_path);
  Model& model = loaded.model;
  if (!model.has_vocab_predictor())
    throw std::invalid_argument(
        "adapt: refusing to adapt a tsot_baseline checkpoint; it has no separate language "
        "model, so text-only adaptation cannot be applied");
  o.loss.validate();
  std::vector<std::vector<int>> text, held;
  for (const auto& s : read_text(o.text)) text.push_back(text_ids(s, loaded.vocab));
  if (!o.heldout.empty())
    for (const auto& s : read_text(o.heldout)) held.push_back(text_ids(s, loaded.vocab));
  if (held.empty()) held = std::vector<std::vector<int>>(text.begin(), text.begin() + std::min<std::size_t>(text.size(), 500));
  if (text.empty() && o.optim.steps > 0) throw std::invalid_argument("adapt: empty text corpus");

  json echo = {{"model", o.model_path}, {"text", o.text}, {"heldout", o.heldout},
               {"omega", o.loss.omega}, {"optim", to_json(o.optim)}, {"seed", o.seed}};
  write_run_info(o.out_dir, "adapt", echo, {o.model_path, o.text, o.heldout});

  const Model original = model;
  const std::vector<std::string> trainable{Model::kVocabPrefix};
  AdamW<float> opt(model.params(), o.optim.adam);
  opt.set_trainable_prefixes(trainable);
  auto sched = o.optim.schedule();
  SampleOrder order(std::max<std::size_t>(text.size(), 1), mix_seed(o.seed, 2));

  AdaptSummary sum;
  sum.initial_nll = mean_nll(model, held);
  sum.nll_history.push_back(sum.initial_nll);
  std::ofstream metrics(o.out_dir + "/metrics.jsonl");
  metrics << json{{"step", 0}, {"heldout_nll", sum.initial_nll}}.dump() << '\n';
  const int B = o.optim.batch_size;
  for (long step = 0; step < o.optim.steps; ++step) {
    model.params().zero_grad();
    double loss = 0, nll = 0, kl = 0;
    for (int b = 0; b < B; ++b) {
      const auto& s = text[order.at(static_cast<std::uint64_t>(step) * B + b)];
      Tape<float> tape;
      TapeBinding<float> bind(tape, model.params());
      bind.set_trainable_prefixes(trainable);
      TapeOps<float> ops(bind);
      auto parts = adapt_loss(ops, model, original, s, o.loss);
      tape.backward(parts.total, 1.0f / static_cast<float>(B));
      loss += parts.total.value()[0];
      nll += parts.nll;
      kl += parts.kl;
    }
    loss /= B, nll /= B, kl /= B;
    check_finite_loss(loss, step, "adapt");
    double lr = sched(step);
    opt.step(model.params(), lr);
    metrics << json{{"step", step + 1}, {"loss", loss}, {"nll", nll}, {"kl", kl}, {"lr", lr},
                    {"wall_time", clock.seconds()}}.dump()
            << '\n';
    if ((step + 1) % eval_every == 0 || step + 1 == o.optim.steps) {
      double h = mean_nll(model, held);
      sum.nll_history.push_back(h);
      metrics << json{{"step", step + 1}, {"heldout_nll", h}}.dump() << '\n';
    }
  }
  sum.final_nll = sum.nll_history.back();
  json extra = loaded.meta;
  extra["adapted"] = {{"text", o.text}, {"steps", o.optim.steps}, {"omega", o.loss.omega}};
  sum.checkpoint = o.out_dir + "/adapted.ckpt";
  save_model(sum.checkpoint, model, loaded.vocab, loaded.meta.value("kind", "fnt"), extra);
  std::ofstream(o.out_dir + "/summary.txt")
      << "adapt: held-out NLL " << sum.initial_nll << " -> " << sum.final_nll << " in "
      << clock.seconds() << " s\n";
  if (o.verbose)
    std::cerr << "adapt: held-out NLL " << sum.initial_nll << " -> " << sum.final_nll << "\n";
  return sum;
}

// ---- decode / score ------------------------------------------------------------

struct DecodeRecord {
  std::string utt_id;
  SerializedLabel label;
  double score = 0;
  ChannelTranscripts channels;
};

inline json to_json(const DecodeRecord& r, const Vocabulary& vocab) {
  return {{"utt_id", r.utt_id},
          {"tokens", render_label(r.label, vocab)},
          {"score", r.score},
          {"ch0_text", r.channels.text(0)},
          {"ch1_text", r.channels.text(1)}};
}

inline std::vector<DecodeRecord> decode_utterances(const Model& m, const Vocabulary& vocab,
                                                   const std::vector<Utterance>& utts,
                                                   const DecodeOptions& opts, int threads = 1) {
  std::vector<DecodeRecord> out(utts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < utts.size(); i += stride) {
      DecodeResult r = decode(m, utts[i].features, opts);
      out[i] = {utts[i].id, r.best().label, r.best().score, split_channels(r.best().label, vocab)};
    }
  };
  threads = std::max(1, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

struct ScoreSummary {
  WerReport overall;
  std::map<std::string, WerReport> by_condition;
  WerReport single() const { return get("single"); }
  WerReport multi() const {
    WerReport r;
    for (const auto& [k, v] : by_condition)
      if (k != "single") r += v;
    return r;
  }
  WerReport get(const std::string& k) const {
    auto it = by_condition.find(k);
    return it == by_condition.end() ? WerReport{} : it->second;
  }
};

/// Hypothesis channel texts keyed by utterance id.
using HypTexts = std::map<std::string, ChannelTranscripts>;

inline ScoreSummary score_hypotheses(const HypTexts& hyps, const std::vector<TranscriptRecord>& refs) {
  ScoreSummary s;
  for (const auto& ref : refs) {
    auto it = hyps.find(ref.utt_id);
    if (it == hyps.end()) throw std::invalid_argument("score: no hypothesis for " + ref.utt_id);
    std::vector<std::vector<std::string>> spk;
    for (const auto& seq : speaker_word_sequences(ref.words)) {
      std::string joined;
      for (const auto& w : seq) joined += w + " ";
      spk.push_back(normalize_words(joined));
    }
    ChannelTranscripts h;
    for (int c = 0; c < 2; ++c) h.channels[c] = normalize_words(it->second.text(c));
    WerReport r = multitalker_wer(spk, h);
    s.overall += r;
    s.by_condition[overlap_condition(ref.words)] += r;
  }
  return s;
}

inline HypTexts hyp_texts(const std::vector<DecodeRecord>& recs) {
  HypTexts h;
  for (const auto& r : recs) h[r.utt_id] = r.channels;
  return h;
}

inline std::vector<TranscriptRecord> references(const std::vector<Utterance>& utts) {
  std::vector<TranscriptRecord> refs;
  for (const auto& u : utts) refs.push_back({u.id, u.words});
  return refs;
}

inline ScoreSummary evaluate(const Model& m, const Vocabulary& vocab,
                             const std::vector<Utterance>& utts, const DecodeOptions& opts,
                             int threads = 1) {
  return score_hypotheses(hyp_texts(decode_utterances(m, vocab, utts, opts, threads)),
                          references(utts));
}

inline std::vector<json> score_records(const ScoreSummary& s) {
  std::vector<json> out;
  json o = to_json(s.overall);
  o["condition"] = "overall";
  out.push_back(o);
  for (const auto& [k, v] : s.by_condition) {
    json j = to_json(v);
    j["condition"] = k;
    out.push_back(j);
  }
  json m = to_json(s.multi());
  m["condition"] = "multi";
  out.push_back(m);
  return out;
}

inline std::string score_table(const ScoreSummary& s) {
  std::ostringstream os;
  auto line = [&](const std::string& name, const WerReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %6ld utts %7ld words  WER %6.2f%%  (S %ld I %ld D %ld)\n",
                  name.c_str(), r.utterances, r.ref_words, 100.0 * r.wer(), r.substitutions,
                  r.insertions, r.deletions);
    os << buf;
  };
  line("overall", s.overall);
  for (const auto& [k, v] : s.by_condition) line(k, v);
  line("multi", s.multi());
  return os.str();
}

}  // namespace tsot
