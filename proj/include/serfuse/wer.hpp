// serfuse/wer.hpp

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

#include "serfuse/common.hpp"
#include "serfuse/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace serfuse {

// Word-level error-rate analysis: minimum-edit alignment, corpus aggregation,
// and per-emotion / per-length-bucket breakdowns. Aggregates are
// micro-averaged (total edits over total reference words).

struct AlignmentResult {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_len = 0;
  int total_edits() const { return substitutions + deletions + insertions; }
  double wer() const { return static_cast<double>(total_edits()) / ref_len; }
};

// Lowercases and strips non-alphanumeric characters from token edges.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (auto& raw : split_whitespace(text)) {
    size_t b = 0, e = raw.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b >= e) continue;
    std::string tok = raw.substr(b, e - b);
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(tok));
  }
  return out;
}

// Minimum (S+D+I) alignment by edit-distance dynamic programming with unit
// costs. Tie-break prefers substitutions over insertion+deletion pairs; the
// binding contract is the total count.
inline AlignmentResult word_error_rate(const std::vector<std::string>& ref,
                                       const std::vector<std::string>& hyp) {
  if (ref.empty())
    throw Error("word_error_rate: empty reference (WER undefined)");
  const size_t m = ref.size(), n = hyp.size();
  std::vector<std::vector<int>> d(m + 1, std::vector<int>(n + 1, 0));
  for (size_t i = 0; i <= m; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= n; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int del = d[i - 1][j] + 1;
      int ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }
  AlignmentResult res;
  res.ref_len = static_cast<int>(m);
  size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++res.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++res.deletions;
      --i;
    } else {
      ++res.insertions;
      --j;
    }
  }
  return res;
}

// Micro-averaged corpus WER: sum of edits over sum of reference lengths.
inline double corpus_wer(
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
        pairs) {
  if (pairs.empty()) throw Error("corpus_wer: empty corpus");
  long edits = 0, words = 0;
  for (const auto& [ref, hyp] : pairs) {
    AlignmentResult a = word_error_rate(ref, hyp);
    edits += a.total_edits();
    words += a.ref_len;
  }
  return static_cast<double>(edits) / static_cast<double>(words);
}

// ---------------------------------------------------------------------------
// Per-emotion report (overall WER, utterance counts, short-utterance ratio).
// An utterance is short when its reference has fewer than 10 words.
// ---------------------------------------------------------------------------

inline constexpr int kShortUtteranceWords = 10;  // short <=> ref word count < 10

struct EmotionWerCell {
  bool present = false;
  long utterances = 0;
  long ref_words = 0;
  long edits = 0;
  long short_utterances = 0;
  double wer() const { return static_cast<double>(edits) / ref_words; }
  double short_ratio() const {
    return static_cast<double>(short_utterances) / utterances;
  }
};

struct WerReport {
  std::array<EmotionWerCell, kNumEmotions> per_emotion;
  EmotionWerCell overall;
};

inline WerReport emotion_wer_report(const std::vector<UtteranceRecord>& records) {
  WerReport rep;
  for (const auto& rec : records) {
    if (!rec.hyp_transcript)
      throw Error("emotion_wer_report: record \"" + rec.utterance_id +
                  "\" has no hyp_transcript");
    AlignmentResult a = word_error_rate(rec.ref_transcript, *rec.hyp_transcript);
    auto add = [&](EmotionWerCell& cell) {
      cell.present = true;
      cell.utterances += 1;
      cell.ref_words += a.ref_len;
      cell.edits += a.total_edits();
      if (a.ref_len < kShortUtteranceWords) cell.short_utterances += 1;
    };
    add(rep.per_emotion[static_cast<int>(rec.emotion)]);
    add(rep.overall);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// WER by reference word count. Buckets partition at <=10, 11-20, 21-30, >30.
// ---------------------------------------------------------------------------

inline constexpr int kNumLengthBuckets = 4;

inline const std::array<const char*, kNumLengthBuckets>& length_bucket_labels() {
  static const std::array<const char*, kNumLengthBuckets> kLabels = {
      "<=10", "11-20", "21-30", ">30"};
  return kLabels;
}

inline int length_bucket_index(int ref_words) {
  if (ref_words <= 10) return 0;
  if (ref_words <= 20) return 1;
  if (ref_words <= 30) return 2;
  return 3;
}

struct LengthBucketReport {
  // [bucket][emotion] plus a per-bucket overall column.
  std::array<std::array<EmotionWerCell, kNumEmotions>, kNumLengthBuckets> cells;
  std::array<EmotionWerCell, kNumLengthBuckets> bucket_overall;
};

inline LengthBucketReport length_bucket_report(
    const std::vector<UtteranceRecord>& records) {
  LengthBucketReport rep;
  for (const auto& rec : records) {
    if (!rec.hyp_transcript)
      throw Error("length_bucket_report: record \"" + rec.utterance_id +
                  "\" has no hyp_transcript");
    AlignmentResult a = word_error_rate(rec.ref_transcript, *rec.hyp_transcript);
    int b = length_bucket_index(a.ref_len);
    auto add = [&](EmotionWerCell& cell) {
      cell.present = true;
      cell.utterances += 1;
      cell.ref_words += a.ref_len;
      cell.edits += a.total_edits();
    };
    add(rep.cells[b][static_cast<int>(rec.emotion)]);
    add(rep.bucket_overall[b]);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report emission: aligned-text tables and machine-readable JSON.
// Both are byte-stable for fixed input.
// ---------------------------------------------------------------------------

inline std::string format_percent_cell(bool present, double fraction) {
  return present ? strprintf("%.1f%%", 100.0 * fraction) : std::string("-");
}

inline std::string format_emotion_wer_table(const WerReport& rep) {
  std::string out;
  out += strprintf("%-8s%10s%10s%10s%10s%10s\n", "", "Ang", "Hap", "Neu", "Sad",
                   "Overall");
  out += strprintf("%-8s", "WER");
  for (const auto& cell : rep.per_emotion)
    out += strprintf("%10s", format_percent_cell(cell.present, cell.present ? cell.wer() : 0).c_str());
  out += strprintf("%10s\n", format_percent_cell(rep.overall.present,
                                                 rep.overall.present ? rep.overall.wer() : 0)
                                 .c_str());
  out += strprintf("%-8s", "Utter");
  for (const auto& cell : rep.per_emotion)
    out += strprintf("%10ld", cell.utterances);
  out += strprintf("%10ld\n", rep.overall.utterances);
  out += strprintf("%-8s", "Short%");
  for (const auto& cell : rep.per_emotion)
    out += strprintf(
        "%10s",
        format_percent_cell(cell.present, cell.present ? cell.short_ratio() : 0).c_str());
  out += strprintf("%10s\n",
                   format_percent_cell(rep.overall.present,
                                       rep.overall.present ? rep.overall.short_ratio() : 0)
                       .c_str());
  return out;
}

inline std::string format_length_bucket_table(const LengthBucketReport& rep) {
  std::string out;
  out += strprintf("%-8s%10s%10s%10s%10s%10s\n", "N", "Ang", "Hap", "Neu", "Sad",
                   "Overall");
  for (int b = 0; b < kNumLengthBuckets; ++b) {
    out += strprintf("%-8s", length_bucket_labels()[b]);
    for (int e = 0; e < kNumEmotions; ++e) {
      const auto& cell = rep.cells[b][e];
      out += strprintf("%10s",
                       format_percent_cell(cell.present, cell.present ? cell.wer() : 0).c_str());
    }
    const auto& ov = rep.bucket_overall[b];
    out += strprintf("%10s\n",
                     format_percent_cell(ov.present, ov.present ? ov.wer() : 0).c_str());
  }
  return out;
}

inline nlohmann::json emotion_wer_report_json(const WerReport& rep) {
  nlohmann::json j;
  for (int e = 0; e < kNumEmotions; ++e) {
    const auto& cell = rep.per_emotion[e];
    nlohmann::json c;
    c["present"] = cell.present;
    if (cell.present) {
      c["wer"] = cell.wer();
      c["utterances"] = cell.utterances;
      c["ref_words"] = cell.ref_words;
      c["edits"] = cell.edits;
      c["short_ratio"] = cell.short_ratio();
    }
    j["per_emotion"][emotion_name(static_cast<Emotion>(e))] = c;
  }
  j["overall"]["wer"] = rep.overall.present ? rep.overall.wer() : 0.0;
  j["overall"]["utterances"] = rep.overall.utterances;
  j["overall"]["short_ratio"] =
      rep.overall.present ? rep.overall.short_ratio() : 0.0;
  return j;
}

inline nlohmann::json length_bucket_report_json(const LengthBucketReport& rep) {
  nlohmann::json j = nlohmann::json::array();
  for (int b = 0; b < kNumLengthBuckets; ++b) {
    nlohmann::json row;
    row["bucket"] = length_bucket_labels()[b];
    for (int e = 0; e < kNumEmotions; ++e) {
      const auto& cell = rep.cells[b][e];
      nlohmann::json c;
      c["present"] = cell.present;
      if (cell.present) {
        c["wer"] = cell.wer();
        c["utterances"] = cell.utterances;
      }
      row[emotion_name(static_cast<Emotion>(e))] = c;
    }
    const auto& ov = rep.bucket_overall[b];
    row["overall"]["present"] = ov.present;
    if (ov.present) {
      row["overall"]["wer"] = ov.wer();
      row["overall"]["utterances"] = ov.utterances;
    }
    j.push_back(row);
  }
  return j;
}

// Combined report over both breakdowns. "text" and "json" are the only
// formats; anything else is rejected.
inline std::string emit_wer_report(const WerReport& rep,
                                   const LengthBucketReport& buckets,
                                   const std::string& format) {
  if (format == "text") {
    std::string out = "Per-emotion word error rate\n";
    out += format_emotion_wer_table(rep);
    out += "\nWord error rate by reference length\n";
    out += format_length_bucket_table(buckets);
    return out;
  }
  if (format == "json") {
    nlohmann::json j;
    j["per_emotion"] = emotion_wer_report_json(rep);
    j["by_length"] = length_bucket_report_json(buckets);
    return j.dump(2) + "\n";
  }
  throw Error("emit_report: unknown format " + format);
}

}  // namespace serfuse
