// tests/synth_test.cpp

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

#include <cmath>
#include <filesystem>

#include "tsot/synth.hpp"

namespace tsot {
namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.train_utts = 20;
  return c;
}

TEST(Synth, TransitionRowsAreDistributions) {
  SynthLanguage lang(small_config());
  for (Domain d : {Domain::kGeneral, Domain::kShifted}) {
    const auto& P = lang.transitions(d);
    ASSERT_EQ(P.size(), 31u);
    for (const auto& row : P) {
      double s = 0;
      for (double p : row) {
        EXPECT_GT(p, 0.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Synth, SameSeedSameCorpus) {
  SynthLanguage a(small_config()), b(small_config());
  EXPECT_EQ(a.words(), b.words());
  EXPECT_EQ(gen_text(a, 50, Domain::kShifted, 3), gen_text(b, 50, Domain::kShifted, 3));
  auto ua = gen_utterances(a, 10, Domain::kGeneral, MixMode::kRandom, 4, "x");
  auto ub = gen_utterances(b, 10, Domain::kGeneral, MixMode::kRandom, 4, "x");
  for (std::size_t i = 0; i < ua.size(); ++i) {
    EXPECT_EQ(ua[i].features, ub[i].features);
    EXPECT_EQ(ua[i].words, ub[i].words);
  }
  EXPECT_NE(gen_text(a, 50, Domain::kGeneral, 3), gen_text(a, 50, Domain::kGeneral, 4));
}

TEST(Synth, GenerationIsOrderIndependent) {
  SynthLanguage lang(small_config());
  auto all = gen_text(lang, 30, Domain::kGeneral, 9);
  Rng rng(mix_seed(9, 17));
  EXPECT_EQ(lang.sample(Domain::kGeneral, rng), all[17]);
}

struct BigramFit {
  double l1 = 0;     // empirical vs chain, joint over observed contexts
  double noise = 0;  // expected l1 of an exact multinomial sample
};

BigramFit bigram_fit(const SynthLanguage& lang, Domain d, long target_tokens) {
  const int V = lang.config().vocab_size;
  std::vector<std::vector<double>> counts(V + 1, std::vector<double>(V, 0.0));
  long tokens = 0;
  for (std::uint64_t i = 0; tokens < target_tokens; ++i) {
    Rng rng(mix_seed(11, i));
    int prev = V;
    for (int w : lang.sample_ids(d, rng)) {
      counts[prev][w] += 1;
      prev = w;
      ++tokens;
    }
  }
  const auto& P = lang.transitions(d);
  BigramFit fit;
  for (int c = 0; c <= V; ++c) {
    double n = 0;
    for (double x : counts[c]) n += x;
    for (int w = 0; w < V; ++w) {
      fit.l1 += std::abs(counts[c][w] - n * P[c][w]) / tokens;
      fit.noise += std::sqrt(2.0 / M_PI * n * P[c][w] * (1 - P[c][w])) / tokens;
    }
  }
  return fit;
}

TEST(Synth, BigramFrequenciesConvergeToTheChain) {
  SynthLanguage lang(small_config());
  for (Domain d : {Domain::kGeneral, Domain::kShifted}) {
    auto at100k = bigram_fit(lang, d, 100000);
    EXPECT_LT(at100k.l1, 1.2 * at100k.noise) << to_string(d);
    EXPECT_LT(bigram_fit(lang, d, 200000).l1, 0.05) << to_string(d);
  }
}

// Add-one smoothed bigram counts as a toy language model.
double bigram_perplexity(const std::vector<std::vector<std::string>>& train,
                         const std::vector<std::vector<std::string>>& test, const Vocabulary& v) {
  const int V = v.size();
  std::vector<std::vector<double>> c(V + 1, std::vector<double>(V, 1.0));
  auto ids = [&](const std::vector<std::string>& s) {
    std::vector<int> out;
    for (const auto& w : s) out.push_back(v.tokenize(w).at(0));
    return out;
  };
  for (const auto& s : train) {
    int prev = V;
    for (int w : ids(s)) c[prev][w] += 1, prev = w;
  }
  double nll = 0;
  long n = 0;
  for (const auto& s : test) {
    int prev = V;
    for (int w : ids(s)) {
      double tot = 0;
      for (double x : c[prev]) tot += x;
      nll -= std::log(c[prev][w] / tot);
      prev = w;
      ++n;
    }
  }
  return std::exp(nll / n);
}

TEST(Synth, ShiftedTextIsHarderForAGeneralModel) {
  SynthLanguage lang(small_config());
  auto train = gen_text(lang, 5000, Domain::kGeneral, 1);
  double gen = bigram_perplexity(train, gen_text(lang, 1000, Domain::kGeneral, 2), lang.vocabulary());
  double shf = bigram_perplexity(train, gen_text(lang, 1000, Domain::kShifted, 2), lang.vocabulary());
  EXPECT_GT(shf, gen);
}

TEST(Synth, HomophonePairsAreNearlyIdenticalAcoustically) {
  SynthLanguage lang(small_config());
  const auto& e = lang.embeddings();
  for (int w = 0; w < 30; ++w) {
    if (!lang.is_homophone(w)) continue;
    double d = 0;
    for (std::size_t k = 0; k < e.cols(); ++k) {
      double diff = static_cast<double>(e(w, k)) - e(lang.partner(w), k);
      d += diff * diff;
    }
    EXPECT_NEAR(std::sqrt(d), 1e-3, 1e-5);
  }
  EXPECT_GT(SynthLanguage::min_pairwise_distance(e), 0.0);
}

TEST(Synth, NoiselessFramesEqualEmbeddings) {
  auto cfg = small_config();
  cfg.noise_sigma = 0;
  SynthLanguage lang(cfg);
  Rng rng(1);
  std::vector<std::string> words{lang.words()[3], lang.words()[7], lang.words()[3]};
  auto u = render_features(words, lang.vocabulary(), lang.embeddings(), cfg, rng);
  ASSERT_EQ(u.features.rows(), 12u);
  for (std::size_t t = 0; t < 12; ++t) {
    int id = lang.vocabulary().tokenize(words[t / 4]).at(0);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(u.features(t, k), lang.embeddings()(id, k));
  }
  EXPECT_EQ(u.words[1].start, 4);
  EXPECT_EQ(u.words[1].end, 8);
}

TEST(Synth, CharacterTokensSpanTheirFrames) {
  auto cfg = small_config();
  cfg.tokenization = TokenizationMode::kCharacter;
  SynthLanguage lang(cfg);
  Rng rng(2);
  auto u = render_features({lang.words()[0], lang.words()[1]}, lang.vocabulary(), lang.embeddings(),
                           cfg, rng);
  EXPECT_EQ(u.features.rows(), 8u * 4u);
  EXPECT_EQ(u.label.size(), 8u);
}

Utterance single(const SynthLanguage& lang, std::vector<int> ids, std::uint64_t seed) {
  std::vector<std::string> w;
  for (int i : ids) w.push_back(lang.words()[i]);
  Rng rng(seed);
  return render_features(w, lang.vocabulary(), lang.embeddings(), lang.config(), rng);
}

TEST(Synth, LateOffsetIsConcatenation) {
  SynthLanguage lang(small_config());
  auto u1 = single(lang, {1, 2, 3}, 1), u2 = single(lang, {4, 5}, 2);
  auto m = mix(u1, u2, static_cast<int>(u1.features.rows()) + 3, lang.vocabulary());
  const int cc = lang.vocabulary().cc_id();
  EXPECT_EQ(std::count(m.label.tokens.begin(), m.label.tokens.end(), cc), 1);
  EXPECT_EQ(m.features.rows(), u1.features.rows() + 3 + u2.features.rows());
}

TEST(Synth, ZeroOffsetAlternatesSpeakers) {
  SynthLanguage lang(small_config());
  auto u1 = single(lang, {1, 2, 3, 4}, 1), u2 = single(lang, {5, 6, 7, 8}, 2);
  auto m = mix(u1, u2, 0, lang.vocabulary());
  const int cc = lang.vocabulary().cc_id();
  EXPECT_EQ(std::count(m.label.tokens.begin(), m.label.tokens.end(), cc), 7);
  for (std::size_t t = 0; t < m.features.rows(); ++t)
    EXPECT_FLOAT_EQ(m.features(t, 0), u1.features(t, 0) + u2.features(t, 0));
}

TEST(Synth, MixturesDeserializeToTheirSources) {
  SynthLanguage lang(small_config());
  auto utts = gen_utterances(lang, 300, Domain::kGeneral, MixMode::kMixed, 5, "m");
  for (const auto& u : utts) {
    EXPECT_EQ(u.label, serialize_tsot(u.words, lang.vocabulary()));
    EXPECT_LE(validate_concurrency(u.words), 2);
    int last_end = 0;
    for (const auto& w : u.words) last_end = std::max(last_end, w.end);
    EXPECT_GE(static_cast<int>(u.features.rows()), last_end);
    auto ch = deserialize_tsot(u.label, lang.vocabulary());
    auto seqs = speaker_word_sequences(u.words);
    ASSERT_EQ(seqs.size(), 2u);
    EXPECT_EQ(ch.channels[0], seqs[0]);
    EXPECT_EQ(ch.channels[1], seqs[1]);
  }
}

TEST(Synth, OffsetsStayInRangeAndOffTheTokenGrid) {
  auto cfg = small_config();
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    int len = 12 + static_cast<int>(rng() % 20) * 4;
    int off = sample_offset(len, cfg, rng);
    EXPECT_GE(off, static_cast<int>(std::ceil(0.3 * len)));
    EXPECT_LE(off, static_cast<int>(std::floor(0.7 * len)) + 1);
    EXPECT_NE(off % 4, 0);
  }
}

TEST(Synth, MixtureRateMatchesProbability) {
  SynthLanguage lang(small_config());
  auto utts = gen_utterances(lang, 3000, Domain::kGeneral, MixMode::kRandom, 8, "r");
  int mixed = 0;
  for (const auto& u : utts) mixed += speaker_word_sequences(u.words).size() == 2;
  EXPECT_NEAR(mixed / 3000.0, 0.67, 0.02);
}

TEST(Synth, SplitFilesRoundTrip) {
  SynthLanguage lang(small_config());
  auto utts = gen_utterances(lang, 15, Domain::kShifted, MixMode::kRandom, 2, "s");
  auto dir = std::filesystem::path(::testing::TempDir()) / "synth_split";
  std::filesystem::create_directories(dir);
  write_split(dir.string(), "part", utts, lang.vocabulary());
  auto back = read_split(dir.string(), "part", lang.vocabulary());
  ASSERT_EQ(back.size(), utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    EXPECT_EQ(back[i].id, utts[i].id);
    EXPECT_EQ(back[i].features, utts[i].features);
    EXPECT_EQ(back[i].words, utts[i].words);
    EXPECT_EQ(back[i].label, utts[i].label);
  }
  auto text = gen_text(lang, 7, Domain::kGeneral, 1);
  write_text((dir / "t.txt").string(), text);
  EXPECT_EQ(read_text((dir / "t.txt").string()), text);
}

TEST(Synth, ConfigValidationAndJson) {
  SynthConfig c;
  c.mix_prob = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  SynthConfig d;
  d.noise_sigma = 0.25;
  d.tokenization = TokenizationMode::kCharacter;
  EXPECT_EQ(to_json(synth_config_from_json(to_json(d))), to_json(d));
}

}  // namespace
}  // namespace tsot
