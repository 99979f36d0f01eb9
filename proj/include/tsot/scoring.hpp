// tsot/scoring.hpp

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

// Word error rate by Levenshtein alignment, and a two-channel multi-talker
// WER that scores each reference speaker against the hypothesis channel
// assignment with the fewest total errors.

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsot/labels.hpp"

namespace tsot {

struct WerReport {
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long ref_words = 0;
  long utterances = 0;

  long errors() const { return substitutions + insertions + deletions; }
  // Rate is undefined for an empty reference.
  bool defined() const { return ref_words > 0; }
  double wer() const {
    return defined() ? static_cast<double>(errors()) / static_cast<double>(ref_words) : 0.0;
  }

  WerReport& operator+=(const WerReport& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_words += o.ref_words;
    utterances += o.utterances;
    return *this;
  }
  friend WerReport operator+(WerReport a, const WerReport& b) { return a += b; }
  friend bool operator==(const WerReport&, const WerReport&) = default;
};

inline nlohmann::json to_json(const WerReport& r) {
  nlohmann::json j = {{"sub", r.substitutions}, {"ins", r.insertions}, {"del", r.deletions},
                      {"ref_words", r.ref_words}, {"utterances", r.utterances},
                      {"errors", r.errors()}};
  j["wer"] = r.defined() ? nlohmann::json(r.wer()) : nlohmann::json(nullptr);
  return j;
}

/// Lowercases and splits on whitespace.
inline std::vector<std::string> normalize_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(w);
  }
  return out;
}

/// Unit-cost edit distance. Counts follow one optimal path; on ties the
/// backtrace prefers substitution (or match), then insertion, then deletion.
inline WerReport wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> d((n + 1) * (m + 1));
  auto D = [&](std::size_t i, std::size_t j) -> long& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) D(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) D(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      D(i, j) = std::min({D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), D(i, j - 1) + 1,
                          D(i - 1, j) + 1});

  WerReport r;
  r.ref_words = static_cast<long>(n);
  r.utterances = 1;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      long diag = D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      if (D(i, j) == diag) {
        if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
        --i, --j;
        continue;
      }
    }
    if (j > 0 && D(i, j) == D(i, j - 1) + 1) {
      ++r.insertions;
      --j;
    } else {
      ++r.deletions;
      --i;
    }
  }
  return r;
}

struct MultiTalkerResult {
  WerReport report;
  bool swapped = false;  // reference speaker k was scored against channel 1-k
};

/// Minimum-error assignment of up to two reference speakers to the two
/// hypothesis channels. A missing speaker scores as an empty reference.
inline MultiTalkerResult multitalker_wer_detail(
    const std::vector<std::vector<std::string>>& ref_speakers, const ChannelTranscripts& hyp) {
  if (ref_speakers.size() > 2)
    throw std::invalid_argument("multitalker_wer: " + std::to_string(ref_speakers.size()) +
                                " reference speakers (at most 2 supported)");
  std::vector<std::string> empty;
  auto ref = [&](int k) -> const std::vector<std::string>& {
    return k < static_cast<int>(ref_speakers.size()) ? ref_speakers[k] : empty;
  };
  MultiTalkerResult best;
  for (int swap = 0; swap < 2; ++swap) {
    WerReport r = wer(ref(0), hyp.channels[swap]) + wer(ref(1), hyp.channels[1 - swap]);
    r.utterances = 1;
    if (swap == 0 || r.errors() < best.report.errors()) best = {r, swap == 1};
  }
  return best;
}

inline WerReport multitalker_wer(const std::vector<std::vector<std::string>>& ref_speakers,
                                 const ChannelTranscripts& hyp) {
  return multitalker_wer_detail(ref_speakers, hyp).report;
}

/// Fraction of speech frames where two speakers are active.
inline double overlap_ratio(const std::vector<TimedWord>& words) {
  std::map<int, int> delta;
  for (const auto& w : words) {
    delta[w.start] += 1;
    delta[w.end] -= 1;
  }
  long speech = 0, overlap = 0;
  int active = 0, prev = 0;
  for (auto [frame, dv] : delta) {
    if (active >= 1) speech += frame - prev;
    if (active >= 2) overlap += frame - prev;
    active += dv;
    prev = frame;
  }
  return speech > 0 ? static_cast<double>(overlap) / static_cast<double>(speech) : 0.0;
}

/// Scoring condition of a reference utterance: single-speaker, or a bucket of
/// the overlap ratio for two-speaker mixtures.
inline std::string overlap_condition(const std::vector<TimedWord>& words) {
  std::map<std::string, int> speakers;
  for (const auto& w : words) speakers[w.speaker] = 1;
  if (speakers.size() <= 1) return "single";
  double r = overlap_ratio(words);
  if (r == 0.0) return "mixed_0";
  if (r <= 0.2) return "mixed_0-20";
  if (r <= 0.4) return "mixed_20-40";
  return "mixed_40-100";
}

}  // namespace tsot
