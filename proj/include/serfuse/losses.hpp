// serfuse/losses.hpp

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
#include "serfuse/fusion.hpp"
#include "serfuse/types.hpp"

namespace serfuse {

// -ln of the probability assigned to the label. For training prefer
// cross_entropy_from_logits, which is stable for extreme logits.
inline double cross_entropy(const EmotionDistribution& dist, Emotion label) {
  const int idx = static_cast<int>(label);
  if (idx < 0 || idx >= dist.size()) throw Error("cross_entropy: bad label");
  return -std::log(dist(idx));
}

struct CrossEntropyResult {
  double loss = 0.0;
  Vec grad_logits;  // softmax(logits) - onehot(label)
};

inline CrossEntropyResult cross_entropy_from_logits(const Vec& logits, Emotion label) {
  const int idx = static_cast<int>(label);
  if (idx < 0 || idx >= logits.size())
    throw Error("cross_entropy_from_logits: bad label");
  double m = logits.maxCoeff();
  Vec shifted = logits.array() - m;
  double lse = std::log(shifted.array().exp().sum());
  CrossEntropyResult r;
  r.loss = lse - shifted(idx);
  r.grad_logits = (shifted.array() - lse).exp();
  r.grad_logits(idx) -= 1.0;
  return r;
}

// The joint objective: total = lambda * l_asr + (1 - lambda) * l_ser.
struct MultiTaskLoss {
  double lambda = 0.2;
  double l_asr = 0.0;
  double l_ser = 0.0;
  double total = 0.0;
};

inline MultiTaskLoss multitask_loss(double l_asr, double l_ser, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw Error("multitask_loss: lambda must be in [0,1]");
  if (!std::isfinite(l_asr) || !std::isfinite(l_ser))
    throw Error("multitask_loss: non-finite component loss");
  MultiTaskLoss m;
  m.lambda = lambda;
  m.l_asr = l_asr;
  m.l_ser = l_ser;
  m.total = lambda * l_asr + (1.0 - lambda) * l_ser;
  return m;
}

// Auxiliary ASR head: per-frame affine map over the encoded hidden sequence
// followed by log-softmax over vocab-plus-blank (blank last).
struct AsrHeadParams {
  Mat w;  // (V+1, model_dim)
  Vec b;  // (V+1)

  int n_symbols() const { return static_cast<int>(w.rows()); }

  static AsrHeadParams init(int n_symbols, int model_dim, Rng* rng) {
    AsrHeadParams p;
    p.w = xavier_uniform(n_symbols, model_dim, rng);
    p.b = Vec::Zero(n_symbols);
    return p;
  }
};

struct AsrHeadGrads {
  Mat w;
  Vec b;

  static AsrHeadGrads zeros_like(const AsrHeadParams& p) {
    return {Mat::Zero(p.w.rows(), p.w.cols()), Vec::Zero(p.b.size())};
  }
};

struct AsrHeadCache {
  Mat input;      // (T, model_dim)
  Mat log_probs;  // (T, V+1)
};

inline Mat asr_head_forward(const AsrHeadParams& p, const Mat& enc_hidden,
                            AsrHeadCache* cache) {
  if (enc_hidden.rows() < 1) throw Error("asr_head: empty input sequence");
  if (enc_hidden.cols() != p.w.cols())
    throw Error(strprintf("asr_head: input dim %d, expected %d",
                          static_cast<int>(enc_hidden.cols()),
                          static_cast<int>(p.w.cols())));
  Mat logits = enc_hidden * p.w.transpose();
  logits.rowwise() += p.b.transpose();
  Mat log_probs = log_softmax_rows(logits);
  if (cache) {
    cache->input = enc_hidden;
    cache->log_probs = log_probs;
  }
  return log_probs;
}

// Backward through log-softmax and the affine map; accumulates into *grads and
// returns d(loss)/d(enc_hidden).
inline Mat asr_head_backward(const AsrHeadParams& p, const AsrHeadCache& cache,
                             const Mat& grad_log_probs, AsrHeadGrads* grads) {
  Vec row_sums = grad_log_probs.rowwise().sum();
  Mat d_logits =
      grad_log_probs - cache.log_probs.array().exp().matrix().cwiseProduct(
                           row_sums.replicate(1, grad_log_probs.cols()));
  grads->w += d_logits.transpose() * cache.input;
  grads->b += d_logits.colwise().sum().transpose();
  return d_logits * p.w;
}

}  // namespace serfuse
