// tsot/labels.hpp

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

// Token-level serialized output labels for up to two concurrent speakers.
//
// Tokens of all speakers are laid out in order of emission time, and a
// channel-change token <cc> is placed between adjacent tokens that belong to
// different speakers. Splitting back into two virtual channels starts on
// channel 0 and toggles the channel at every <cc>.

#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace tsot {

class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kCcString = "<cc>";
inline constexpr const char* kWordBoundary = "\xe2\x96\x81";  // U+2581

enum class TokenizationMode { kWord, kCharacter };

/// Closed vocabulary V with two implicit specials outside it: blank (|V|,
/// doubling as the start symbol) and <cc> (|V|+1).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens,
                      TokenizationMode mode = TokenizationMode::kWord)
      : tokens_(std::move(tokens)), mode_(mode) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i] == kCcString || tokens_[i].empty())
        throw LabelError("vocabulary: reserved or empty token at index " + std::to_string(i));
      if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw LabelError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }

  // Character vocabulary: each word becomes its characters, the first one
  // carrying the word-boundary mark.
  static Vocabulary characters_of(const std::vector<std::string>& words) {
    std::set<std::string> chars;
    for (const auto& w : words)
      for (std::size_t i = 0; i < w.size(); ++i) {
        std::string c(1, w[i]);
        chars.insert(i == 0 ? kWordBoundary + c : c);
      }
    return Vocabulary({chars.begin(), chars.end()}, TokenizationMode::kCharacter);
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int blank_id() const { return size(); }
  int start_id() const { return blank_id(); }
  int cc_id() const { return size() + 1; }
  int num_outputs() const { return size() + 2; }
  TokenizationMode mode() const { return mode_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_vocab(int id) const { return id >= 0 && id < size(); }

  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
  }

  const std::string& token(int id) const {
    if (!is_vocab(id)) throw LabelError("vocabulary: id " + std::to_string(id) + " is not a vocabulary token");
    return tokens_[id];
  }

  std::string render(int id) const {
    if (id == cc_id()) return kCcString;
    if (id == blank_id()) return "<blank>";
    return token(id);
  }

  // Empty result means the word is not representable.
  std::vector<int> tokenize(const std::string& word) const {
    if (mode_ == TokenizationMode::kWord) {
      int id = lookup(word);
      return id < 0 ? std::vector<int>{} : std::vector<int>{id};
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string c(1, word[i]);
      int id = lookup(i == 0 ? kWordBoundary + c : c);
      if (id < 0) return {};
      out.push_back(id);
    }
    return out;
  }

  std::vector<std::string> detokenize(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    if (mode_ == TokenizationMode::kWord) {
      for (int id : ids) words.push_back(token(id));
      return words;
    }
    const std::string mark = kWordBoundary;
    for (int id : ids) {
      const std::string& t = token(id);
      if (t.rfind(mark, 0) == 0 || words.empty())
        words.push_back(t.rfind(mark, 0) == 0 ? t.substr(mark.size()) : t);
      else
        words.back() += t;
    }
    return words;
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw LabelError("vocabulary: cannot open '" + path + "'");
    std::vector<std::string> toks;
    std::string line;
    TokenizationMode mode = TokenizationMode::kWord;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (line == "#mode=character") {
        mode = TokenizationMode::kCharacter;
        continue;
      }
      toks.push_back(line);
    }
    return Vocabulary(std::move(toks), mode);
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw LabelError("vocabulary: cannot write '" + path + "'");
    if (mode_ == TokenizationMode::kCharacter) os << "#mode=character\n";
    for (const auto& t : tokens_) os << t << '\n';
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.mode_ == b.mode_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  TokenizationMode mode_ = TokenizationMode::kWord;
};

/// One word of one speaker over frames [start, end).
struct TimedWord {
  std::string speaker;
  std::string word;
  int start = 0;
  int end = 0;

  friend bool operator==(const TimedWord&, const TimedWord&) = default;
};

struct SerializedLabel {
  std::vector<int> tokens;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const SerializedLabel&, const SerializedLabel&) = default;
};

struct ChannelTranscripts {
  static constexpr int kNumChannels = 2;
  std::array<std::vector<std::string>, kNumChannels> channels;

  std::string text(int ch) const {
    std::string s;
    for (const auto& w : channels[ch]) {
      if (!s.empty()) s += ' ';
      s += w;
    }
    return s;
  }
};

inline void check_interval(const TimedWord& w) {
  if (w.start < 0 || w.end <= w.start)
    throw LabelError("malformed interval for word '" + w.word + "' of speaker '" +
                     w.speaker + "': [" + std::to_string(w.start) + ", " +
                     std::to_string(w.end) + ")");
}

/// Largest number of distinct speakers active in any single frame.
inline int validate_concurrency(const std::vector<TimedWord>& words) {
  struct Event {
    int frame;
    int delta;  // -1 sorts before +1: intervals are half-open
    const std::string* speaker;
  };
  std::vector<Event> events;
  events.reserve(words.size() * 2);
  for (const auto& w : words) {
    check_interval(w);
    events.push_back({w.start, +1, &w.speaker});
    events.push_back({w.end, -1, &w.speaker});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.delta < b.delta;
  });
  std::map<std::string, int> active;
  int distinct = 0, best = 0;
  for (const auto& e : events) {
    int& n = active[*e.speaker];
    if (e.delta > 0 && n++ == 0) ++distinct;
    if (e.delta < 0 && --n == 0) --distinct;
    best = std::max(best, distinct);
  }
  return best;
}

/// Orders all tokens by emission time (the start frame of their word; ties by
/// speaker id, then by position within the speaker) and inserts <cc> between
/// adjacent tokens of different speakers.
inline SerializedLabel serialize_tsot(const std::vector<TimedWord>& words,
                                      const Vocabulary& vocab) {
  int conc = validate_concurrency(words);
  if (conc > ChannelTranscripts::kNumChannels)
    throw LabelError("serialize_tsot: " + std::to_string(conc) +
                     " concurrent speakers, at most 2 supported");

  struct Item {
    int start;
    const std::string* speaker;
    int within;
    std::vector<int> ids;
  };
  std::vector<Item> items;
  std::map<std::string, int> count;
  std::map<std::string, const TimedWord*> last;
  std::vector<std::string> oov;
  for (const auto& w : words) {
    auto prev = last.find(w.speaker);
    if (prev != last.end() && prev->second->end > w.start)
      throw LabelError("serialize_tsot: words of speaker '" + w.speaker +
                       "' overlap or are out of order at '" + w.word + "'");
    last[w.speaker] = &w;
    auto ids = vocab.tokenize(w.word);
    if (ids.empty()) oov.push_back(w.word);
    items.push_back({w.start, &w.speaker, count[w.speaker]++, std::move(ids)});
  }
  if (!oov.empty()) {
    std::string msg = "serialize_tsot: out-of-vocabulary words:";
    for (const auto& w : oov) msg += " " + w;
    throw LabelError(msg);
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.start != b.start) return a.start < b.start;
    if (*a.speaker != *b.speaker) return *a.speaker < *b.speaker;
    return a.within < b.within;
  });

  SerializedLabel out;
  const std::string* current = nullptr;
  for (const auto& it : items) {
    if (current && *current != *it.speaker) out.tokens.push_back(vocab.cc_id());
    current = it.speaker;
    out.tokens.insert(out.tokens.end(), it.ids.begin(), it.ids.end());
  }
  return out;
}

/// Splits a label into the two virtual channels. Never fails on ids in
/// V ∪ {blank, <cc>}: <cc> toggles the channel each time it appears and blank
/// is ignored.
inline ChannelTranscripts deserialize_tsot(const SerializedLabel& label,
                                           const Vocabulary& vocab) {
  std::array<std::vector<int>, 2> ids;
  int ch = 0;
  for (int id : label.tokens) {
    if (id == vocab.cc_id()) {
      ch = 1 - ch;
    } else if (vocab.is_vocab(id)) {
      ids[ch].push_back(id);
    } else if (id != vocab.blank_id()) {
      throw LabelError("deserialize_tsot: token id " + std::to_string(id) + " out of range");
    }
  }
  ChannelTranscripts out;
  for (int c = 0; c < 2; ++c) out.channels[c] = vocab.detokenize(ids[c]);
  return out;
}

inline std::string render_label(const SerializedLabel& label, const Vocabulary& vocab) {
  std::string s;
  for (int id : label.tokens) {
    if (!s.empty()) s += ' ';
    s += vocab.render(id);
  }
  return s;
}

inline SerializedLabel parse_label(const std::string& text, const Vocabulary& vocab) {
  SerializedLabel out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    if (tok == kCcString) {
      out.tokens.push_back(vocab.cc_id());
      continue;
    }
    int id = vocab.lookup(tok);
    if (id < 0) throw LabelError("parse_label: unknown token '" + tok + "'");
    out.tokens.push_back(id);
  }
  return out;
}

// ---- transcript records --------------------------------------------------
//
// One utterance per line: {"utt_id": ..., "words": [{"spk", "w", "s", "e"}]}.

struct TranscriptRecord {
  std::string utt_id;
  std::vector<TimedWord> words;
};

inline nlohmann::json to_json(const TranscriptRecord& r) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : r.words)
    words.push_back({{"spk", w.speaker}, {"w", w.word}, {"s", w.start}, {"e", w.end}});
  return {{"utt_id", r.utt_id}, {"words", std::move(words)}};
}

inline TranscriptRecord transcript_from_json(const nlohmann::json& j) {
  TranscriptRecord r;
  r.utt_id = j.at("utt_id").get<std::string>();
  for (const auto& w : j.at("words"))
    r.words.push_back({w.at("spk").get<std::string>(), w.at("w").get<std::string>(),
                       w.at("s").get<int>(), w.at("e").get<int>()});
  return r;
}

inline void write_transcripts(const std::string& path,
                              const std::vector<TranscriptRecord>& recs) {
  std::ofstream os(path);
  if (!os) throw LabelError("cannot write transcripts to '" + path + "'");
  for (const auto& r : recs) os << to_json(r).dump() << '\n';
}

inline std::vector<TranscriptRecord> read_transcripts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LabelError("cannot open transcripts '" + path + "'");
  std::vector<TranscriptRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(transcript_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

/// Reference word sequences per speaker, speakers ordered by first start.
inline std::vector<std::vector<std::string>> speaker_word_sequences(
    const std::vector<TimedWord>& words) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const TimedWord*>> by;
  for (const auto& w : words) {
    if (!by.count(w.speaker)) order.push_back(w.speaker);
    by[w.speaker].push_back(&w);
  }
  std::vector<std::pair<int, std::string>> firsts;
  for (const auto& s : order) {
    auto& v = by[s];
    std::stable_sort(v.begin(), v.end(),
                     [](const TimedWord* a, const TimedWord* b) { return a->start < b->start; });
    firsts.push_back({v.front()->start, s});
  }
  std::stable_sort(firsts.begin(), firsts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::vector<std::string>> out;
  for (const auto& [start, s] : firsts) {
    std::vector<std::string> seq;
    for (const auto* w : by[s]) seq.push_back(w->word);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace tsot
