// tests/decoding_test.cpp

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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "tsot/decoding.hpp"
#include "tsot/losses.hpp"

namespace tsot {
namespace {

using oracle::tiny_config;
using M = Transducer<double>;

// Random model with sharpened joint outputs so decodes are not uniform noise.
M random_model(Variant v, std::uint64_t seed, int vocab = 4, double sharpen = 3.0) {
  M m(tiny_config(v, vocab), seed);
  for (auto& e : m.params())
    if (e.name.rfind("joint.out", 0) == 0 || e.name.rfind("acoustic_vocab", 0) == 0)
      for (auto& x : e.value.storage()) x *= sharpen;
  return m;
}

Tensor<double> random_features(std::size_t T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> f(T, 3);
  oracle::randomize(f, rng);
  return f;
}

double path_score(const M& m, const Tensor<double>& feats, const std::vector<int>& tokens) {
  EvalOps<double> ops(m.params());
  auto out = m.assemble_lattice(ops, m.encode(feats), SerializedLabel{tokens});
  return -rnnt_loss_and_grad(out.lattice, tokens, m.blank_id(), out.frames, false).loss;
}

TEST(Decoding, BlankEverywhereGivesEmptyLabel) {
  M m(tiny_config(Variant::kIntegrated), 1);
  m.params().at("joint.out.bias").value[0] = 1e3;
  auto feats = random_features(6, 2);
  EXPECT_TRUE(greedy_decode(m, feats).best().label.tokens.empty());
  DecodeOptions o;
  o.beam = 4;
  EXPECT_TRUE(beam_search(m, feats, o).best().label.tokens.empty());
}

TEST(Decoding, BeamOneEqualsGreedy) {
  Variant vs[] = {Variant::kIntegrated, Variant::kNaive, Variant::kTsotBaseline};
  for (int seed = 0; seed < 100; ++seed) {
    M m = random_model(vs[seed % 3], seed);
    auto feats = random_features(3 + seed % 5, 1000 + seed);
    DecodeOptions o;
    o.beam = 1;
    auto g = greedy_decode(m, feats, o);
    auto b = beam_search(m, feats, o);
    ASSERT_EQ(g.best().label, b.best().label) << "seed " << seed;
    EXPECT_NEAR(g.best().score, b.best().score, 1e-9);
  }
}

TEST(Decoding, BestScoreGrowsWithBeam) {
  for (int seed = 0; seed < 40; ++seed) {
    M m = random_model(seed % 2 ? Variant::kNaive : Variant::kIntegrated, seed);
    auto feats = random_features(5, 2000 + seed);
    double prev = -std::numeric_limits<double>::infinity();
    for (int beam : {1, 4, 16}) {
      DecodeOptions o;
      o.beam = beam;
      double s = decode(m, feats, o).best().score;
      EXPECT_GE(s, prev - 1e-12) << "seed " << seed << " beam " << beam;
      prev = s;
    }
  }
}

// With a beam wider than the whole search space, every finished hypothesis
// must carry the total probability of its label over all alignments.
TEST(Decoding, ExhaustiveBeamScoresAreAlignmentSums) {
  for (int seed = 0; seed < 6; ++seed) {
    M m = random_model(Variant::kIntegrated, seed, 2, 1.0);
    auto feats = random_features(2, 3000 + seed);
    DecodeOptions o;
    o.beam = 5000;
    o.max_symbols_per_frame = 3;
    auto res = beam_search(m, feats, o);
    std::set<std::vector<int>> seen;
    int checked = 0;
    for (const auto& e : res.nbest) {
      EXPECT_TRUE(seen.insert(e.label.tokens).second);
      if (static_cast<int>(e.label.size()) >= o.max_symbols_per_frame) continue;
      EXPECT_NEAR(e.score, path_score(m, feats, e.label.tokens), 1e-9);
      ++checked;
    }
    EXPECT_GT(checked, 10);
  }
}

TEST(Decoding, NoDoubledChannelChangeWhenPruning) {
  M m(tiny_config(Variant::kIntegrated), 4);
  m.params().at("joint.out.bias").value[1] = 50.0;  // <cc> dominates
  auto feats = random_features(3, 5);
  DecodeOptions o;
  for (int beam : {1, 4}) {
    o.beam = beam;
    auto l = decode(m, feats, o).best().label.tokens;
    ASSERT_FALSE(l.empty());
    for (std::size_t i = 1; i < l.size(); ++i)
      EXPECT_FALSE(l[i] == m.cc_id() && l[i - 1] == m.cc_id());
  }
  o.prune_double_cc = false;
  o.beam = 1;
  auto l = decode(m, feats, o).best().label.tokens;
  EXPECT_EQ(l.size(), 3u * o.max_symbols_per_frame);
}

TEST(Decoding, EmissionCapBoundsOutputLength) {
  M m(tiny_config(Variant::kIntegrated), 4);
  m.params().at("joint.out.bias").value[0] = -50.0;  // blank never wins
  auto feats = random_features(4, 6);
  DecodeOptions o;
  o.max_symbols_per_frame = 5;
  for (int beam : {1, 3}) {
    o.beam = beam;
    EXPECT_EQ(decode(m, feats, o).best().label.size(), 20u);
  }
}

TEST(Decoding, GreedyIsStreaming) {
  for (int seed = 0; seed < 20; ++seed) {
    M m = random_model(Variant::kIntegrated, seed);
    auto feats = random_features(8, 4000 + seed);
    auto full = greedy_decode(m, feats, {}, true);
    ASSERT_EQ(full.partial_best.size(), 8u);
    for (std::size_t t = 1; t <= 8; ++t) {
      Tensor<double> prefix(t, 3);
      for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < 3; ++c) prefix(r, c) = feats(r, c);
      auto part = greedy_decode(m, prefix).best().label;
      EXPECT_EQ(part, full.partial_best[t - 1]);
      const auto& fin = full.best().label.tokens;
      ASSERT_LE(part.size(), fin.size());
      EXPECT_TRUE(std::equal(part.tokens.begin(), part.tokens.end(), fin.begin()));
    }
  }
}

TEST(Decoding, BeamExposesPerFramePartials) {
  M m = random_model(Variant::kIntegrated, 3);
  DecodeOptions o;
  o.beam = 4;
  auto res = beam_search(m, random_features(6, 7), o, true);
  EXPECT_EQ(res.partial_best.size(), 6u);
  EXPECT_EQ(res.partial_best.back(), res.best().label);
}

TEST(Decoding, HypothesisStatesMatchFreshRuns) {
  for (Variant v : {Variant::kIntegrated, Variant::kNaive, Variant::kTsotBaseline}) {
    M m = random_model(v, 9);
    DecodeOptions o;
    o.verify_states = true;
    o.beam = 4;
    EXPECT_NO_THROW(beam_search(m, random_features(5, 8), o));
    EXPECT_NO_THROW(greedy_decode(m, random_features(5, 8), o));
  }
}

TEST(Decoding, DeterministicAndSortedBestFirst) {
  M m = random_model(Variant::kIntegrated, 12);
  auto feats = random_features(6, 9);
  DecodeOptions o;
  o.beam = 8;
  auto a = beam_search(m, feats, o), b = beam_search(m, feats, o);
  ASSERT_EQ(a.nbest.size(), b.nbest.size());
  for (std::size_t i = 0; i < a.nbest.size(); ++i) {
    EXPECT_EQ(a.nbest[i].label, b.nbest[i].label);
    EXPECT_EQ(a.nbest[i].score, b.nbest[i].score);
    if (i) EXPECT_GE(a.nbest[i - 1].score, a.nbest[i].score);
  }
  EXPECT_LE(a.nbest.size(), 8u);
}

TEST(Decoding, RejectsEmptyBeam) {
  M m(tiny_config(Variant::kIntegrated), 1);
  DecodeOptions o;
  o.beam = 0;
  EXPECT_THROW(beam_search(m, random_features(2, 1), o), std::invalid_argument);
}

TEST(Decoding, SplitChannelsToleratesMalformedOutput) {
  Vocabulary v({"a", "b"});
  auto ch = split_channels(SerializedLabel{{v.cc_id(), 0, v.cc_id(), v.cc_id(), 1}}, v);
  EXPECT_EQ(ch.text(0), "");
  EXPECT_EQ(ch.text(1), "a b");
}

}  // namespace
}  // namespace tsot
