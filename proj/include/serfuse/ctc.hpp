// serfuse/ctc.hpp

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

#include <limits>
#include <vector>

namespace serfuse {

// Connectionist temporal classification over per-frame log-probabilities of
// shape (T, V+1); the blank symbol is the last column. Loss is the negative
// log of the total probability of all blank-augmented alignment paths that
// collapse to the target. Infeasible instances (too few frames for the target
// plus the blanks forced between repeated tokens) are reported explicitly
// rather than as an infinite loss.
struct CtcResult {
  bool feasible = false;
  double loss = 0.0;
  Mat grad_log_probs;  // d(loss)/d(log_probs); empty unless requested
};

inline CtcResult ctc_loss(const Mat& log_probs, const std::vector<int>& target,
                          bool with_grad = true) {
  const int t_len = static_cast<int>(log_probs.rows());
  const int n_sym = static_cast<int>(log_probs.cols());
  const int blank = n_sym - 1;
  if (t_len < 1) throw Error("ctc_loss: empty log-probability sequence");
  if (n_sym < 2) throw Error("ctc_loss: need at least one token plus blank");
  if (target.empty()) throw Error("ctc_loss: empty target");
  for (int tok : target) {
    if (tok < 0 || tok >= blank)
      throw Error(strprintf("ctc_loss: target token %d outside vocab of %d", tok,
                            blank));
  }

  const int n_tok = static_cast<int>(target.size());
  int repeats = 0;
  for (int u = 1; u < n_tok; ++u)
    if (target[u] == target[u - 1]) ++repeats;
  if (t_len < n_tok + repeats) return CtcResult{false, 0.0, Mat()};

  const int s_len = 2 * n_tok + 1;
  auto label = [&](int s) { return (s % 2 == 0) ? blank : target[s / 2]; };
  // A state may be skipped from s-2 unless it is a blank or repeats the token
  // two states back.
  auto can_skip = [&](int s) {
    return s >= 2 && label(s) != blank && label(s) != label(s - 2);
  };

  const double kNegInf = -std::numeric_limits<double>::infinity();
  Mat alpha = Mat::Constant(t_len, s_len, kNegInf);
  alpha(0, 0) = log_probs(0, blank);
  if (s_len > 1) alpha(0, 1) = log_probs(0, label(1));
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_sum_exp(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_sum_exp(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc + log_probs(t, label(s));
    }
  }
  double log_p = alpha(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = log_sum_exp(log_p, alpha(t_len - 1, s_len - 2));

  CtcResult result;
  result.feasible = true;
  result.loss = -log_p;
  if (!with_grad) return result;

  Mat beta = Mat::Constant(t_len, s_len, kNegInf);
  beta(t_len - 1, s_len - 1) = log_probs(t_len - 1, blank);
  if (s_len > 1) beta(t_len - 1, s_len - 2) = log_probs(t_len - 1, label(s_len - 2));
  for (int t = t_len - 2; t >= 0; --t) {
    for (int s = s_len - 1; s >= 0; --s) {
      double acc = beta(t + 1, s);
      if (s + 1 < s_len) acc = log_sum_exp(acc, beta(t + 1, s + 1));
      if (s + 2 < s_len && can_skip(s + 2)) acc = log_sum_exp(acc, beta(t + 1, s + 2));
      beta(t, s) = acc + log_probs(t, label(s));
    }
  }

  // Paths through state s at frame t have total log-mass alpha + beta minus
  // the doubly counted frame emission; distinct states are disjoint events.
  Mat mass = Mat::Constant(t_len, n_sym, kNegInf);
  for (int t = 0; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s)
      mass(t, label(s)) = log_sum_exp(mass(t, label(s)), alpha(t, s) + beta(t, s));
  result.grad_log_probs = Mat::Zero(t_len, n_sym);
  for (int t = 0; t < t_len; ++t) {
    for (int k = 0; k < n_sym; ++k) {
      if (mass(t, k) == kNegInf) continue;
      result.grad_log_probs(t, k) = -std::exp(mass(t, k) - log_probs(t, k) - log_p);
    }
  }
  return result;
}

}  // namespace serfuse
