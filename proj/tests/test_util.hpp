// tests/test_util.hpp

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

#include "serfuse/model.hpp"
#include "serfuse/types.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace serfuse::test {

// Scratch directory, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

inline bool mat_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("test: cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string golden_path(const std::string& leaf) {
  return std::string(SERFUSE_TEST_SOURCE_DIR) + "/golden/" + leaf;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking. Central differences with step h; the
// error is relative with an absolute floor, so near-zero coordinates are held
// to an absolute 1e-8 rather than an ill-posed ratio.
// ---------------------------------------------------------------------------

inline double grad_rel_err(double analytic, double numeric) {
  double denom = std::max({1e-4, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckStats {
  int checked = 0;
  double max_rel_err = 0.0;
};

// Compares analytic derivatives against central differences at `samples`
// randomly chosen coordinates of one tensor. `loss` must recompute the scalar
// objective from current parameter values.
template <class LossFn>
void check_tensor_grad(TensorRef param, const double* analytic, LossFn loss,
                       int samples, Rng* rng, GradCheckStats* stats,
                       double h = 1e-5, double tol = 1e-4) {
  long n = static_cast<long>(param.size());
  ASSERT_GT(n, 0) << param.name;
  std::uniform_int_distribution<long> pick(0, n - 1);
  for (int s = 0; s < samples; ++s) {
    long idx = samples >= n ? (s % n) : pick(*rng);
    double saved = param.data[idx];
    param.data[idx] = saved + h;
    double up = loss();
    param.data[idx] = saved - h;
    double down = loss();
    param.data[idx] = saved;
    double numeric = (up - down) / (2.0 * h);
    double rel = grad_rel_err(analytic[idx], numeric);
    stats->checked++;
    stats->max_rel_err = std::max(stats->max_rel_err, rel);
    ASSERT_LT(rel, tol) << param.name << "[" << idx << "] analytic "
                        << analytic[idx] << " numeric " << numeric;
  }
}

// ---------------------------------------------------------------------------
// Independent CTC oracle: enumerate every alignment path, collapse it, and
// accumulate the probability of those that collapse to the target.
// ---------------------------------------------------------------------------

inline std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

// Returns -log P(target | log_probs), or +inf when no path produces target.
inline double ctc_brute_force(const Mat& log_probs, const std::vector<int>& target) {
  const int T = static_cast<int>(log_probs.rows());
  const int n_sym = static_cast<int>(log_probs.cols());
  const int blank = n_sym - 1;
  double total = 0.0;
  std::vector<int> path(T, 0);
  long n_paths = 1;
  for (int t = 0; t < T; ++t) n_paths *= n_sym;
  for (long code = 0; code < n_paths; ++code) {
    long rem = code;
    double lp = 0.0;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % n_sym);
      rem /= n_sym;
      lp += log_probs(t, path[t]);
    }
    if (collapse_path(path, blank) == target) total += std::exp(lp);
  }
  if (total == 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

// ---------------------------------------------------------------------------
// Independent WER oracle: plain exponential recursion over edit choices.
// ---------------------------------------------------------------------------

inline int wer_brute_force(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp, size_t i = 0,
                           size_t j = 0) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  int diag = (ref[i] == hyp[j] ? 0 : 1) + wer_brute_force(ref, hyp, i + 1, j + 1);
  int del = 1 + wer_brute_force(ref, hyp, i + 1, j);
  int ins = 1 + wer_brute_force(ref, hyp, i, j + 1);
  return std::min(diag, std::min(del, ins));
}

// ---------------------------------------------------------------------------
// Deterministic corpus with planted substitution counts, for report goldens.
// References use distinct in-utterance tokens and hypotheses substitute a
// prefix with out-of-vocabulary tokens, so the minimum alignment is exactly
// that many substitutions.
// ---------------------------------------------------------------------------

inline std::vector<UtteranceRecord> planted_wer_corpus() {
  struct ClassPlan {
    Emotion emotion;
    int utterances;
    int words;       // per utterance
    int base_subs;   // substitutions per utterance
    int extra_subs;  // utterances carrying one extra substitution
  };
  // Totals: ang 456/2000, hap 389/1000, neu 3630/10000, sad 2065/7000;
  // overall 6540/20000.
  const std::vector<ClassPlan> plans = {
      {Emotion::kAng, 200, 10, 2, 56},
      {Emotion::kHap, 200, 5, 2, -11},  // negative: that many get one less
      {Emotion::kNeu, 400, 25, 9, 30},
      {Emotion::kSad, 200, 35, 10, 65},
  };
  std::vector<UtteranceRecord> records;
  for (const auto& plan : plans) {
    for (int u = 0; u < plan.utterances; ++u) {
      int subs = plan.base_subs;
      if (plan.extra_subs >= 0 && u < plan.extra_subs) subs += 1;
      if (plan.extra_subs < 0 && u < -plan.extra_subs) subs -= 1;
      UtteranceRecord rec;
      rec.utterance_id = strprintf("%s_%04d", emotion_name(plan.emotion), u);
      rec.session_id = "S1";
      rec.speaker_id = "S1-A";
      rec.emotion = plan.emotion;
      for (int w = 0; w < plan.words; ++w)
        rec.ref_transcript.push_back(strprintf("w%d", w));
      std::vector<std::string> hyp = rec.ref_transcript;
      for (int s = 0; s < subs; ++s) hyp[s] = strprintf("x%d", s);
      rec.hyp_transcript = hyp;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace serfuse::test
