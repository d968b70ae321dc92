// serfuse/folds.hpp

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

#include <algorithm>
#include <array>
#include <set>
#include <string>
#include <vector>

namespace serfuse {

// Leave-one-session-out fold plan: one fold per session, keeping speakers
// disjoint across train and test.
struct FoldPlan {
  std::vector<std::string> fold_sessions;            // sorted session ids
  std::vector<std::vector<std::string>> fold_ids;    // utterance ids per fold

  size_t n_folds() const { return fold_sessions.size(); }
};

inline FoldPlan make_folds(const std::vector<UtteranceRecord>& records,
                           int expected_sessions = 5) {
  if (records.empty()) throw Error("make_folds: empty corpus");
  std::set<std::string> sessions;
  for (const auto& r : records) sessions.insert(r.session_id);
  if (static_cast<int>(sessions.size()) < expected_sessions)
    throw Error(strprintf(
        "make_folds: found %zu sessions but %d expected; pass an "
        "expected_sessions override to fold a smaller corpus",
        sessions.size(), expected_sessions));
  FoldPlan plan;
  plan.fold_sessions.assign(sessions.begin(), sessions.end());
  plan.fold_ids.resize(plan.fold_sessions.size());
  for (const auto& r : records) {
    auto it = std::lower_bound(plan.fold_sessions.begin(), plan.fold_sessions.end(),
                               r.session_id);
    plan.fold_ids[it - plan.fold_sessions.begin()].push_back(r.utterance_id);
  }
  return plan;
}

// Fraction of correct predictions.
inline double weighted_accuracy(const std::vector<Emotion>& preds,
                                const std::vector<Emotion>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw Error("weighted_accuracy: empty or mismatched inputs");
  int correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// Mean per-class recall over the classes that occur in labels.
inline double unweighted_accuracy(const std::vector<Emotion>& preds,
                                  const std::vector<Emotion>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw Error("unweighted_accuracy: empty or mismatched inputs");
  std::array<int, kNumEmotions> total{}, correct{};
  for (size_t i = 0; i < preds.size(); ++i) {
    int c = static_cast<int>(labels[i]);
    ++total[c];
    if (preds[i] == labels[i]) ++correct[c];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return sum / static_cast<double>(present);
}

}  // namespace serfuse
