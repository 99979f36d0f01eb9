// tests/acceptance.cpp

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

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Criteria 6-8 train full desk-scale models.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tsot/driver.hpp"
#include "tsot/gradcheck.hpp"

namespace {

using namespace tsot;
namespace fs = std::filesystem;
using MD = Transducer<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

Tensor<double> random_features(std::size_t T, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> f(T, dim);
  oracle::randomize(f, rng);
  return f;
}

// ---- 1 ---------------------------------------------------------------------

Outcome transducer_oracle() {
  WallClock clock;
  double worst = 0;
  int cases = 0;
  for (std::uint64_t seed = 0; cases < 100; ++seed) {
    std::mt19937_64 rng(mix_seed(1, seed));
    std::size_t T = 1 + rng() % 4, U = rng() % 4, V = 1 + rng() % 4;
    int blank = static_cast<int>(V);
    std::vector<int> y(U);
    for (auto& v : y) {
      v = static_cast<int>(rng() % (V + 1));
      if (v == blank) v = blank + 1;  // the extra non-blank symbol
    }
    auto lat = oracle::random_lattice<double>(T * (U + 1), V + 2, rng);
    double a = rnnt_loss_and_grad(lat, y, blank, T, false).loss;
    double b = oracle::rnnt_loss_bruteforce(lat, y, blank, T);
    worst = std::max(worst, std::abs(a - b));
    ++cases;
  }
  double secs = clock.seconds();
  return {worst < 1e-6 && secs < 10, fmt("100 instances, max |diff| %.3g, %.2f s", worst, secs)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradient_check() {
  WallClock clock;
  double worst = 0;
  std::string where;
  for (Variant v : {Variant::kIntegrated, Variant::kNaive, Variant::kTsotBaseline}) {
    MD m(oracle::tiny_config(v, 4, 6), 17);
    auto feats = random_features(5, 3, 23);
    SerializedLabel l{{1, m.cc_id(), 3}};
    LossConfig cfg;
    auto f = [&](ParamStore<double>& s) {
      Tape<double> tape;
      TapeBinding<double> bind(tape, s);
      TapeOps<double> ops(bind);
      auto parts = fnt_loss(ops, m, feats, l, cfg);
      tape.backward(parts.total);
      return parts.total.value()[0];
    };
    auto r = finite_diff_check<double>(m.params(), f, 1e-4);
    if (r.max_rel_err >= worst) {
      worst = r.max_rel_err;
      where = to_string(v) + ":" + r.worst_param;
    }
  }
  double secs = clock.seconds();
  return {worst < 1e-3 && secs < 60,
          fmt("3 variants, max rel err %.3g, %.1f s", worst, secs) + " (worst " + where + ")"};
}

// ---- 3 ---------------------------------------------------------------------

Outcome deinterleave() {
  MD m(oracle::tiny_config(Variant::kIntegrated, 6, 8), 5);
  EvalOps<double> ops(m.params());
  const int S = m.start_id(), cc = m.cc_id();
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  long rows = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto seq = oracle::random_interleaved(rng, 6, cc, 20);
    std::vector<int> ids{S};
    ids.insert(ids.end(), seq.begin(), seq.end());
    auto mixed = m.vocab_run(ops, ids);
    auto chans = oracle::deinterleave(seq, cc);
    std::array<std::vector<Tensor<double>>, 2> solo;
    for (int k = 0; k < 2; ++k) {
      std::vector<int> c{S};
      c.insert(c.end(), chans[k].begin(), chans[k].end());
      solo[k] = m.vocab_run(ops, c);
    }
    mismatches += !(mixed[0] == solo[0][0]) || !(mixed[0] == solo[1][0]);
    std::array<std::size_t, 2> pos{0, 0};
    int j = 0;
    for (std::size_t u = 0; u < seq.size(); ++u) {
      if (seq[u] == cc) {
        j = 1 - j;
        continue;
      }
      ++rows;
      mismatches += !(mixed[u + 1] == solo[j][++pos[j]]);
    }
  }
  return {mismatches == 0, fmt("200 sequences, %.0f channel rows, %.0f mismatches", rows, mismatches)};
}

// ---- 4 ---------------------------------------------------------------------

Outcome serialization() {
  SynthLanguage lang(SynthConfig{});
  const auto& vocab = lang.vocabulary();
  auto utts = gen_utterances(lang, 1000, Domain::kGeneral, MixMode::kMixed, 77, "rt");
  int bad = 0;
  for (const auto& u : utts) {
    auto ch = deserialize_tsot(serialize_tsot(u.words, vocab), vocab);
    auto spk = speaker_word_sequences(u.words);
    bad += spk.size() != 2 || ch.channels[0] != spk[0] || ch.channels[1] != spk[1];
  }
  bool rejected = false;
  try {
    serialize_tsot({{"A", lang.words()[0], 0, 10}, {"B", lang.words()[1], 4, 14},
                    {"C", lang.words()[2], 8, 12}},
                   vocab);
  } catch (const LabelError&) {
    rejected = true;
  }
  return {bad == 0 && rejected,
          fmt("1000 mixtures, %.0f mismatches; 3-concurrent case ", bad) +
              (rejected ? "rejected" : "accepted")};
}

// ---- 5 ---------------------------------------------------------------------

Outcome decode_consistency() {
  int differ = 0, worse = 0;
  Variant vs[] = {Variant::kIntegrated, Variant::kNaive, Variant::kTsotBaseline};
  for (int i = 0; i < 100; ++i) {
    MD m(oracle::tiny_config(vs[i % 3], 5, 8), mix_seed(9, i));
    for (auto& e : m.params())
      if (e.name.rfind("joint.out", 0) == 0 || e.name.rfind("acoustic_vocab", 0) == 0)
        for (auto& x : e.value.storage()) x *= 3.0;
    auto feats = random_features(3 + i % 6, 3, mix_seed(10, i));
    DecodeOptions o1;
    o1.beam = 1;
    auto g = greedy_decode(m, feats, o1);
    auto b1 = beam_search(m, feats, o1);
    DecodeOptions o16;
    auto b16 = beam_search(m, feats, o16);
    differ += !(g.best().label == b1.best().label) || std::abs(g.best().score - b1.best().score) > 1e-9;
    worse += b16.best().score < b1.best().score;
  }
  return {differ == 0 && worse == 0,
          fmt("100 pairs: beam1/greedy differ %.0f, beam16 below beam1 %.0f", differ, worse)};
}

// ---- 9 ---------------------------------------------------------------------

Outcome loss_suite() {
  std::vector<std::string> failed;
  // NLL masking: masked-row perturbation leaves loss and gradient bit-identical.
  {
    std::mt19937_64 rng(4);
    auto lp = oracle::random_lattice<double>(5, 4, rng);
    NllTargets tg{{2, -1, 0, -1}, {true, false, true, false}};
    auto run = [&](const Tensor<double>& rows) {
      Tape<double> tape;
      Tensor<double> g(rows.rows(), rows.cols());
      Var<double> l = nll_loss(tape.param(rows, g), tg);
      tape.backward(l);
      return std::make_pair(l.value()[0], g);
    };
    auto a = run(lp);
    auto pert = lp;
    for (std::size_t k = 0; k < 4; ++k) pert(1, k) = pert(3, k) = -3.0 - k;
    auto b = run(pert);
    bool zero = true;
    for (std::size_t k = 0; k < 4; ++k) zero = zero && a.second(1, k) == 0 && a.second(3, k) == 0;
    if (!(a.first == b.first && a.second == b.second && zero)) failed.push_back("nll-mask");
  }
  // KL(P||P) = 0 in both directions.
  {
    std::mt19937_64 rng(6);
    auto p = oracle::random_lattice<double>(4, 7, rng);
    Tape<double> tape;
    for (auto dir : {KlDirection::kOriginalToAdapted, KlDirection::kAdaptedToOriginal})
      if (kl_loss(tape.constant(p), p, {true, true, false, true}, dir).value()[0] != 0.0)
        failed.push_back("kl-self");
  }
  // lambda = 0 is the transducer loss; omega = 0 is pure NLL.
  {
    MD m(oracle::tiny_config(Variant::kIntegrated, 4), 3), orig(oracle::tiny_config(Variant::kIntegrated, 4), 8);
    auto feats = random_features(4, 3, 2);
    SerializedLabel l{{0, m.cc_id(), 2, 1}};
    LossConfig c;
    c.lambda = 0;
    Tape<double> tape;
    TapeBinding<double> bind(tape, m.params());
    TapeOps<double> ops(bind);
    auto parts = fnt_loss(ops, m, feats, l, c);
    EvalOps<double> eops(m.params());
    auto out = m.assemble_lattice(eops, m.encode(feats), l);
    double r = rnnt_loss_and_grad(out.lattice, l.tokens, m.blank_id(), out.frames, false).loss;
    if (parts.total.value()[0] != r) failed.push_back("lambda0");

    c.omega = 0;
    std::vector<int> text{1, 3, 0, 2};
    auto ap = adapt_loss(ops, m, orig, text, c);
    double n = nll_value(lm_logprobs(eops, m, text), lm_targets(m, text));
    if (ap.total.value()[0] != n) failed.push_back("omega0");
  }
  std::string d = "nll masking, KL(P||P), lambda=0, omega=0";
  for (const auto& f : failed) d += "; failed " + f;
  return {failed.empty(), d};
}

// ---- 6-8 -------------------------------------------------------------------

struct Wers {
  double gen_single = 0, gen_multi = 0, shf_single = 0, shf_multi = 0;
  double single_no_cc = 0;  // fraction of single-talker hyps without <cc>
};

class Pipeline {
 public:
  explicit Pipeline(std::string work) : work_(std::move(work)) {}

  void prepare() {
    fs::remove_all(work_);
    data_ = work_ + "/data";
    WallClock c;
    cmd_synth_data(SynthConfig{}, data_);
    vocab_ = Vocabulary::load(vocab_file(data_));
    for (const char* s : {"test_general_single", "test_general_mixed", "test_shifted_single",
                          "test_shifted_mixed"})
      splits_[s] = read_split(data_, s, vocab_);
    log("corpus ready", c.seconds());
  }

  TrainSummary train(const std::string& name, Variant v, const std::string& init_predictor = "") {
    TrainOptions o;
    o.data_dir = data_;
    o.out_dir = work_ + "/" + name;
    o.model.variant = v;
    o.init_predictor = init_predictor;
    o.verbose = false;
    auto s = cmd_train(o);
    log("trained " + name, s.seconds);
    return s;
  }

  Wers evaluate(const std::string& ckpt) {
    WallClock c;
    auto m = load_model(ckpt);
    DecodeOptions opts;  // beam 16
    Wers w;
    auto score = [&](const char* split) {
      auto recs = decode_utterances(m.model, vocab_, splits_.at(split), opts);
      if (std::string(split) == "test_general_single") {
        int clean = 0;
        for (const auto& r : recs)
          clean += std::count(r.label.tokens.begin(), r.label.tokens.end(), vocab_.cc_id()) == 0;
        w.single_no_cc = static_cast<double>(clean) / recs.size();
      }
      return score_hypotheses(hyp_texts(recs), references(splits_.at(split)));
    };
    w.gen_single = 100 * score("test_general_single").single().wer();
    w.gen_multi = 100 * score("test_general_mixed").multi().wer();
    w.shf_single = 100 * score("test_shifted_single").single().wer();
    w.shf_multi = 100 * score("test_shifted_mixed").multi().wer();
    log(fmt("eval gen %.2f/%.2f shifted %.2f/%.2f", w.gen_single, w.gen_multi, w.shf_single,
            w.shf_multi) + " " + ckpt, c.seconds());
    return w;
  }

  AdaptSummary adapt(const std::string& ckpt) {
    AdaptOptions o;
    o.model_path = ckpt;
    o.text = data_ + "/adapt_text.txt";
    o.heldout = data_ + "/heldout_shifted.txt";
    o.out_dir = work_ + "/adapted";
    o.verbose = false;
    return cmd_adapt(o);
  }

  LmPretrainSummary lm_pretrain() {
    LmPretrainOptions o;
    o.data_dir = data_;
    o.out_dir = work_ + "/lm";
    o.verbose = false;
    WallClock c;
    auto s = cmd_lm_pretrain(o);
    log("lm-pretrain", c.seconds());
    return s;
  }

 private:
  static void log(const std::string& what, double secs) {
    std::cerr << "[acceptance] " << what << " (" << fmt("%.1f", secs) << " s)" << std::endl;
  }

  std::string work_, data_;
  Vocabulary vocab_;
  std::map<std::string, std::vector<Utterance>> splits_;
};

void report(int n, const Outcome& o, int& failures) {
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
            << std::endl;
  failures += !o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for corpora and models");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  auto want = [&](int n) { return only.empty() || std::count(only.begin(), only.end(), n) > 0; };

  int failures = 0;
  if (want(1)) report(1, transducer_oracle(), failures);
  if (want(2)) report(2, gradient_check(), failures);
  if (want(3)) report(3, deinterleave(), failures);
  if (want(4)) report(4, serialization(), failures);
  if (want(5)) report(5, decode_consistency(), failures);

  if (want(6) || want(7) || want(8)) {
    Pipeline p(work);
    p.prepare();
    auto integ = p.train("integrated", Variant::kIntegrated);
    Wers wi = p.evaluate(integ.checkpoint);

    if (want(6)) {
      auto naive = p.train("naive", Variant::kNaive);
      auto base = p.train("tsot_baseline", Variant::kTsotBaseline);
      Wers wn = p.evaluate(naive.checkpoint), wb = p.evaluate(base.checkpoint);
      double slowest = std::max({integ.seconds, naive.seconds, base.seconds});
      bool ok = std::abs(wi.gen_multi - wb.gen_multi) <= 2.0 &&
                std::abs(wn.gen_multi - wb.gen_multi) <= 3.0 && slowest <= 1800;
      for (const Wers* w : {&wi, &wn, &wb}) ok = ok && w->gen_multi <= 15 && w->gen_single <= 5;
      report(6,
             {ok, fmt("multi WER integrated %.2f naive %.2f baseline %.2f; ", wi.gen_multi,
                      wn.gen_multi, wb.gen_multi) +
                      fmt("single %.2f/%.2f/%.2f; ", wi.gen_single, wn.gen_single, wb.gen_single) +
                      fmt("slowest training %.0f s", slowest)},
             failures);
      std::cout << "check single-talker-no-cc: " << (wi.single_no_cc >= 0.95 ? "PASS" : "FAIL")
                << "  " << fmt("%.1f%% of single-talker hypotheses contain no <cc>", 100 * wi.single_no_cc)
                << std::endl;
      failures += wi.single_no_cc < 0.95;
    }

    if (want(7)) {
      WallClock c;
      auto ad = p.adapt(integ.checkpoint);
      Wers wa = p.evaluate(ad.checkpoint);
      double secs = c.seconds();
      double rel_single = (wi.shf_single - wa.shf_single) / wi.shf_single;
      double rel_multi = (wi.shf_multi - wa.shf_multi) / wi.shf_multi;
      double degrade = std::max(wa.gen_single - wi.gen_single, wa.gen_multi - wi.gen_multi);
      bool ok = rel_single >= 0.05 && rel_multi >= 0.03 && degrade <= 1.0 && secs <= 300;
      report(7,
             {ok, fmt("shifted single %.2f -> %.2f, multi %.2f -> %.2f; ", wi.shf_single,
                      wa.shf_single, wi.shf_multi, wa.shf_multi) +
                      fmt("relative gains %.1f%% / %.1f%%; general change %+.2f; %.0f s",
                          100 * rel_single, 100 * rel_multi, degrade, secs)},
             failures);
    }

    if (want(8)) {
      auto lm = p.lm_pretrain();
      auto init = p.train("lm_init", Variant::kIntegrated, lm.checkpoint);
      Wers wl = p.evaluate(init.checkpoint);
      bool ok = init.initial.nll < integ.initial.nll && wl.gen_single <= wi.gen_single;
      report(8,
             {ok, fmt("step-0 valid NLL %.4f (LM init) vs %.4f (random); ", init.initial.nll,
                      integ.initial.nll) +
                      fmt("single WER %.2f vs %.2f", wl.gen_single, wi.gen_single)},
             failures);
    }
  }

  if (want(9)) report(9, loss_suite(), failures);
  std::cout << (failures ? "acceptance: FAIL" : "acceptance: PASS") << std::endl;
  return failures ? 1 : 0;
}
