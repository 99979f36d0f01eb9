// tsot/synth.hpp

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

// Seeded synthetic corpus for overlapped speech. Words come from a bigram
// chain; every token is rendered as `frames_per_token` copies of a fixed
// random embedding plus Gaussian noise. Some word pairs share (almost) the
// same embedding, so only the language context tells them apart.
//
// Two text domains share the vocabulary. In the general domain, words of a
// small "domain context" set are rarely followed by a homophone. In the
// shifted domain the same contexts favour homophones, with the preferred
// member of each pair swapped, and are themselves visited more often.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsot/labels.hpp"
#include "tsot/params.hpp"
#include "tsot/tensor.hpp"

namespace tsot {

enum class Domain { kGeneral, kShifted };

inline std::string to_string(Domain d) { return d == Domain::kGeneral ? "general" : "shifted"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "general") return Domain::kGeneral;
  if (s == "shifted") return Domain::kShifted;
  throw std::invalid_argument("unknown domain '" + s + "' (expected general or shifted)");
}

struct SynthConfig {
  int vocab_size = 30;
  std::uint64_t seed = 1;        // corpus sampling
  std::uint64_t chain_seed = 7;  // bigram chain, word forms, embeddings
  TokenizationMode tokenization = TokenizationMode::kWord;

  int frames_per_token = 4;
  int feat_dim = 16;
  double noise_sigma = 0.1;
  double mix_prob = 0.67;
  double offset_min = 0.3;  // fraction of the first utterance's length
  double offset_max = 0.7;
  int min_words = 3;
  int max_words = 8;

  int homophone_pairs = 5;
  double homophone_delta = 1e-3;
  double pair_preference = 0.97;  // probability of the preferred pair member
  double transition_alpha = 0.7;  // Dirichlet concentration of bigram rows
  double domain_context_fraction = 0.25;
  double general_suppression = 0.03;  // homophone mass after domain contexts
  double shift_boost = 3.0;           // homophone mass after domain contexts
  double shift_entry_boost = 3.0;     // mass of transitions into domain contexts
  double shift_temperature = 1.0;     // retempering of shifted domain-context rows

  int train_utts = 6000;
  int dev_utts = 200;
  int test_utts = 200;
  int lm_text_utts = 20000;
  int adapt_text_utts = 5000;
  int heldout_text_utts = 1000;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (vocab_size < 2 || frames_per_token < 1 || feat_dim < 1 || min_words < 1 ||
        max_words < min_words)
      throw std::invalid_argument("synth config: invalid sizes");
    if (!(noise_sigma >= 0) || !prob(mix_prob) || !prob(offset_min) || !prob(offset_max) ||
        offset_min > offset_max)
      throw std::invalid_argument("synth config: invalid noise, mix or offset settings");
    if (homophone_pairs < 0 || 2 * homophone_pairs > vocab_size || !(homophone_delta > 0) ||
        !(pair_preference > 0.5 && pair_preference < 1.0))
      throw std::invalid_argument("synth config: invalid homophone settings");
    if (!prob(domain_context_fraction) || !(general_suppression > 0) || !(shift_boost > 0) ||
        !(shift_entry_boost > 0) || !(shift_temperature > 0) || !(transition_alpha > 0))
      throw std::invalid_argument("synth config: invalid domain settings");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"seed", c.seed},
          {"chain_seed", c.chain_seed},
          {"tokenization", c.tokenization == TokenizationMode::kWord ? "word" : "character"},
          {"frames_per_token", c.frames_per_token},
          {"feat_dim", c.feat_dim},
          {"noise_sigma", c.noise_sigma},
          {"mix_prob", c.mix_prob},
          {"offset_min", c.offset_min},
          {"offset_max", c.offset_max},
          {"min_words", c.min_words},
          {"max_words", c.max_words},
          {"homophone_pairs", c.homophone_pairs},
          {"homophone_delta", c.homophone_delta},
          {"pair_preference", c.pair_preference},
          {"transition_alpha", c.transition_alpha},
          {"domain_context_fraction", c.domain_context_fraction},
          {"general_suppression", c.general_suppression},
          {"shift_boost", c.shift_boost},
          {"shift_entry_boost", c.shift_entry_boost},
          {"shift_temperature", c.shift_temperature},
          {"train_utts", c.train_utts},
          {"dev_utts", c.dev_utts},
          {"test_utts", c.test_utts},
          {"lm_text_utts", c.lm_text_utts},
          {"adapt_text_utts", c.adapt_text_utts},
          {"heldout_text_utts", c.heldout_text_utts}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j[k].get<std::remove_reference_t<decltype(dst)>>();
  };
  get("vocab_size", c.vocab_size);
  get("seed", c.seed);
  get("chain_seed", c.chain_seed);
  if (j.contains("tokenization")) {
    std::string m = j["tokenization"].get<std::string>();
    if (m != "word" && m != "character")
      throw std::invalid_argument("synth config: tokenization must be word or character");
    c.tokenization = m == "word" ? TokenizationMode::kWord : TokenizationMode::kCharacter;
  }
  get("frames_per_token", c.frames_per_token);
  get("feat_dim", c.feat_dim);
  get("noise_sigma", c.noise_sigma);
  get("mix_prob", c.mix_prob);
  get("offset_min", c.offset_min);
  get("offset_max", c.offset_max);
  get("min_words", c.min_words);
  get("max_words", c.max_words);
  get("homophone_pairs", c.homophone_pairs);
  get("homophone_delta", c.homophone_delta);
  get("pair_preference", c.pair_preference);
  get("transition_alpha", c.transition_alpha);
  get("domain_context_fraction", c.domain_context_fraction);
  get("general_suppression", c.general_suppression);
  get("shift_boost", c.shift_boost);
  get("shift_entry_boost", c.shift_entry_boost);
  get("shift_temperature", c.shift_temperature);
  get("train_utts", c.train_utts);
  get("dev_utts", c.dev_utts);
  get("test_utts", c.test_utts);
  get("lm_text_utts", c.lm_text_utts);
  get("adapt_text_utts", c.adapt_text_utts);
  get("heldout_text_utts", c.heldout_text_utts);
  c.validate();
  return c;
}

/// The word inventory, the two bigram chains and the token embeddings.
class SynthLanguage {
 public:
  explicit SynthLanguage(const SynthConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(cfg_.chain_seed, 0));
    make_words(rng);
    const int V = cfg_.vocab_size;

    partner_.assign(V, -1);
    for (int p = 0; p < cfg_.homophone_pairs; ++p) {
      partner_[2 * p] = 2 * p + 1;
      partner_[2 * p + 1] = 2 * p;
    }
    std::vector<int> common;
    for (int w = 0; w < V; ++w)
      if (partner_[w] < 0) common.push_back(w);
    std::shuffle(common.begin(), common.end(), rng);
    domain_context_.assign(V, false);
    int n_ctx = static_cast<int>(std::lround(cfg_.domain_context_fraction * common.size()));
    for (int i = 0; i < n_ctx; ++i) domain_context_[common[i]] = true;

    build_chains(rng);
    vocab_ = cfg_.tokenization == TokenizationMode::kWord ? Vocabulary(words_)
                                                          : Vocabulary::characters_of(words_);
    build_embeddings(rng);
  }

  const SynthConfig& config() const { return cfg_; }
  const std::vector<std::string>& words() const { return words_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  int partner(int w) const { return partner_[w]; }
  bool is_homophone(int w) const { return partner_[w] >= 0; }
  bool is_domain_context(int w) const { return domain_context_[w]; }

  // Row c < |V| is the distribution after word c; row |V| is the start.
  const std::vector<std::vector<double>>& transitions(Domain d) const {
    return d == Domain::kGeneral ? general_ : shifted_;
  }

  /// Token embedding table (vocabulary size x feat_dim).
  const Tensor<float>& embeddings() const { return emb_; }

  std::vector<int> sample_ids(Domain d, Rng& rng) const {
    std::uniform_int_distribution<int> len(cfg_.min_words, cfg_.max_words);
    int n = len(rng);
    const auto& P = transitions(d);
    std::vector<int> out;
    int prev = cfg_.vocab_size;
    for (int i = 0; i < n; ++i) {
      std::discrete_distribution<int> next(P[prev].begin(), P[prev].end());
      prev = next(rng);
      out.push_back(prev);
    }
    return out;
  }

  std::vector<std::string> sample(Domain d, Rng& rng) const {
    std::vector<std::string> out;
    for (int id : sample_ids(d, rng)) out.push_back(words_[id]);
    return out;
  }

 private:
  void make_words(Rng& rng) {
    static const char* kCons = "bdfgklmnprstvz";
    static const char* kVow = "aeiou";
    std::uniform_int_distribution<int> c(0, 13), v(0, 4);
    std::set<std::string> seen;
    while (static_cast<int>(words_.size()) < cfg_.vocab_size) {
      std::string w{kCons[c(rng)], kVow[v(rng)], kCons[c(rng)], kVow[v(rng)]};
      if (seen.insert(w).second) words_.push_back(w);
    }
  }

  static void normalize(std::vector<double>& row) {
    double s = 0;
    for (double x : row) s += x;
    for (double& x : row) x /= s;
  }

  void build_chains(Rng& rng) {
    const int V = cfg_.vocab_size;
    std::gamma_distribution<double> gamma(cfg_.transition_alpha, 1.0);
    std::bernoulli_distribution coin(0.5);
    general_.assign(V + 1, std::vector<double>(V, 0.0));
    shifted_ = general_;
    for (int c = 0; c <= V; ++c) {
      // Base masses; a homophone pair shares one draw split by preference.
      std::vector<double> base(V);
      for (int w = 0; w < V; ++w) base[w] = gamma(rng) + 1e-3;
      std::vector<double> g(V), s(V);
      bool ctx = c < V && domain_context_[c];
      for (int w = 0; w < V; ++w) {
        if (partner_[w] < 0) {
          g[w] = base[w];
          s[w] = base[w] * (domain_context_[w] ? cfg_.shift_entry_boost : 1.0);
        }
      }
      for (int p = 0; p < cfg_.homophone_pairs; ++p) {
        int a = 2 * p, b = 2 * p + 1;
        double mass = base[a] + base[b];
        int pref = coin(rng) ? a : b, other = partner_[pref];
        double hi = cfg_.pair_preference, lo = 1.0 - hi;
        g[pref] = mass * hi * (ctx ? cfg_.general_suppression : 1.0);
        g[other] = mass * lo * (ctx ? cfg_.general_suppression : 1.0);
        // The shifted domain swaps the preferred member after domain contexts.
        s[pref] = mass * (ctx ? lo * cfg_.shift_boost : hi);
        s[other] = mass * (ctx ? hi * cfg_.shift_boost : lo);
      }
      if (ctx && cfg_.shift_temperature != 1.0)
        for (double& x : s) x = std::pow(x, 1.0 / cfg_.shift_temperature);
      normalize(g);
      normalize(s);
      general_[c] = std::move(g);
      shifted_[c] = std::move(s);
    }
  }

  void build_embeddings(Rng& rng) {
    const int n = vocab_.size(), d = cfg_.feat_dim;
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    emb_ = Tensor<float>(n, d);
    for (float& x : emb_.storage()) x = gauss(rng);
    if (cfg_.tokenization == TokenizationMode::kWord) {
      for (int p = 0; p < cfg_.homophone_pairs; ++p) {
        std::vector<float> dir(d);
        double norm = 0;
        for (float& x : dir) {
          x = gauss(rng);
          norm += static_cast<double>(x) * x;
        }
        norm = std::sqrt(norm);
        for (int k = 0; k < d; ++k)
          emb_(2 * p + 1, k) = emb_(2 * p, k) + static_cast<float>(cfg_.homophone_delta * dir[k] / norm);
      }
    }
    double min_dist = min_pairwise_distance(emb_);
    if (!(min_dist > 0)) throw std::logic_error("synth: token embeddings are not injective");
  }

 public:
  static double min_pairwise_distance(const Tensor<float>& e) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < e.rows(); ++i)
      for (std::size_t j = i + 1; j < e.rows(); ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < e.cols(); ++k) {
          double diff = static_cast<double>(e(i, k)) - e(j, k);
          acc += diff * diff;
        }
        best = std::min(best, std::sqrt(acc));
      }
    return best;
  }

 private:
  SynthConfig cfg_;
  std::vector<std::string> words_;
  std::vector<int> partner_;
  std::vector<bool> domain_context_;
  std::vector<std::vector<double>> general_, shifted_;
  Vocabulary vocab_;
  Tensor<float> emb_;
};

struct Utterance {
  std::string id;
  Tensor<float> features;  // frames x feat_dim
  std::vector<TimedWord> words;
  SerializedLabel label;
};

/// Renders one speaker's words: every token covers `frames_per_token` frames
/// of its embedding plus N(0, sigma^2) noise.
inline Utterance render_features(const std::vector<std::string>& words, const Vocabulary& vocab,
                                 const Tensor<float>& embeddings, const SynthConfig& cfg, Rng& rng,
                                 const std::string& speaker = "A") {
  const int r = cfg.frames_per_token;
  std::vector<std::vector<int>> ids;
  std::size_t tokens = 0;
  for (const auto& w : words) {
    ids.push_back(vocab.tokenize(w));
    if (ids.back().empty()) throw LabelError("render_features: out-of-vocabulary word '" + w + "'");
    tokens += ids.back().size();
  }
  Utterance u;
  u.features = Tensor<float>(tokens * r, embeddings.cols());
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise_sigma));
  int frame = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    int start = frame;
    for (int id : ids[i])
      for (int k = 0; k < r; ++k, ++frame)
        for (std::size_t d = 0; d < embeddings.cols(); ++d)
          u.features(frame, d) =
              embeddings(id, d) + (cfg.noise_sigma > 0 ? noise(rng) : 0.0f);
    u.words.push_back({speaker, words[i], start, frame});
  }
  u.label = serialize_tsot(u.words, vocab);
  return u;
}

/// Overlays u2 onto u1 starting at frame `offset`. Speakers become "A" (u1)
/// and "B" (u2).
inline Utterance mix(const Utterance& u1, const Utterance& u2, int offset, const Vocabulary& vocab) {
  if (offset < 0) throw std::invalid_argument("mix: negative offset");
  if (u1.features.cols() != u2.features.cols())
    throw ShapeError("mix: feature dims " + u1.features.shape_str() + " vs " + u2.features.shape_str());
  std::size_t frames = std::max(u1.features.rows(), offset + u2.features.rows());
  Utterance m;
  m.id = u1.id + "+" + u2.id;
  m.features = Tensor<float>(frames, u1.features.cols());
  for (std::size_t t = 0; t < u1.features.rows(); ++t)
    for (std::size_t d = 0; d < m.features.cols(); ++d) m.features(t, d) += u1.features(t, d);
  for (std::size_t t = 0; t < u2.features.rows(); ++t)
    for (std::size_t d = 0; d < m.features.cols(); ++d)
      m.features(offset + t, d) += u2.features(t, d);
  for (auto w : u1.words) {
    w.speaker = "A";
    m.words.push_back(w);
  }
  for (auto w : u2.words) {
    w.speaker = "B";
    w.start += offset;
    w.end += offset;
    m.words.push_back(w);
  }
  m.label = serialize_tsot(m.words, vocab);
  return m;
}

/// Uniform offset in [offset_min, offset_max] of len1 frames. Multiples of
/// frames_per_token are moved one frame later so token onsets of the two
/// speakers never coincide.
inline int sample_offset(int len1, const SynthConfig& cfg, Rng& rng) {
  int lo = static_cast<int>(std::ceil(cfg.offset_min * len1));
  int hi = std::max(lo, static_cast<int>(std::floor(cfg.offset_max * len1)));
  int off = std::uniform_int_distribution<int>(lo, hi)(rng);
  if (off % cfg.frames_per_token == 0) ++off;
  return off;
}

enum class MixMode { kSingle, kMixed, kRandom };

/// Text corpus: utterance i is drawn from an RNG seeded by (seed, i).
inline std::vector<std::vector<std::string>> gen_text(const SynthLanguage& lang, int n, Domain d,
                                                      std::uint64_t seed) {
  std::vector<std::vector<std::string>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(lang.sample(d, rng));
  }
  return out;
}

inline std::vector<Utterance> gen_utterances(const SynthLanguage& lang, int n, Domain d,
                                             MixMode mode, std::uint64_t seed,
                                             const std::string& prefix) {
  const auto& cfg = lang.config();
  const auto& vocab = lang.vocabulary();
  std::vector<Utterance> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    bool mixed = mode == MixMode::kMixed ||
                 (mode == MixMode::kRandom && std::bernoulli_distribution(cfg.mix_prob)(rng));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%05d", prefix.c_str(), i);
    Utterance u1 = render_features(lang.sample(d, rng), vocab, lang.embeddings(), cfg, rng);
    if (mixed) {
      Utterance u2 = render_features(lang.sample(d, rng), vocab, lang.embeddings(), cfg, rng);
      int off = sample_offset(static_cast<int>(u1.features.rows()), cfg, rng);
      u1 = mix(u1, u2, off, vocab);
    }
    u1.id = buf;
    out.push_back(std::move(u1));
  }
  return out;
}

// ---- corpus files ----------------------------------------------------------
//
// <name>.f32             concatenated little-endian float32 frames
// <name>.manifest.jsonl  {utt_id, offset, frames, dim, label}
// <name>.jsonl           transcript records

inline void write_split(const std::string& dir, const std::string& name,
                        const std::vector<Utterance>& utts, const Vocabulary& vocab) {
  std::ofstream feats(dir + "/" + name + ".f32", std::ios::binary);
  std::ofstream man(dir + "/" + name + ".manifest.jsonl");
  if (!feats || !man) throw std::runtime_error("cannot write split '" + name + "' in " + dir);
  std::vector<TranscriptRecord> recs;
  std::uint64_t offset = 0;
  for (const auto& u : utts) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    feats.write(reinterpret_cast<const char*>(u.features.data()),
                static_cast<std::streamsize>(u.features.size() * sizeof(float)));
    man << nlohmann::json{{"utt_id", u.id},
                          {"offset", offset},
                          {"frames", u.features.rows()},
                          {"dim", u.features.cols()},
                          {"label", render_label(u.label, vocab)}}
               .dump()
        << '\n';
    offset += u.features.size();
    recs.push_back({u.id, u.words});
  }
  write_transcripts(dir + "/" + name + ".jsonl", recs);
}

inline std::vector<Utterance> read_split(const std::string& dir, const std::string& name,
                                         const Vocabulary& vocab) {
  std::ifstream feats(dir + "/" + name + ".f32", std::ios::binary);
  std::ifstream man(dir + "/" + name + ".manifest.jsonl");
  if (!feats || !man) throw std::runtime_error("cannot open split '" + name + "' in " + dir);
  auto recs = read_transcripts(dir + "/" + name + ".jsonl");
  std::vector<Utterance> out;
  std::string line;
  std::size_t i = 0;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Utterance u;
    u.id = j.at("utt_id").get<std::string>();
    if (i >= recs.size() || recs[i].utt_id != u.id)
      throw std::runtime_error("split '" + name + "': manifest and transcripts disagree at " + u.id);
    u.features = Tensor<float>(j.at("frames").get<std::size_t>(), j.at("dim").get<std::size_t>());
    feats.seekg(static_cast<std::streamoff>(j.at("offset").get<std::uint64_t>() * sizeof(float)));
    feats.read(reinterpret_cast<char*>(u.features.data()),
               static_cast<std::streamsize>(u.features.size() * sizeof(float)));
    if (!feats) throw std::runtime_error("split '" + name + "': truncated features at " + u.id);
    u.words = recs[i].words;
    u.label = serialize_tsot(u.words, vocab);
    out.push_back(std::move(u));
    ++i;
  }
  return out;
}

inline void write_text(const std::string& path, const std::vector<std::vector<std::string>>& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write text corpus '" + path + "'");
  for (const auto& s : text) {
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
    os << '\n';
  }
}

inline std::vector<std::vector<std::string>> read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open text corpus '" + path + "'");
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    auto words = std::vector<std::string>{};
    std::istringstream ls(line);
    std::string w;
    while (ls >> w) words.push_back(w);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

}  // namespace tsot
