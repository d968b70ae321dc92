// serfuse/fusion.hpp

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

#include "serfuse/attention.hpp"
#include "serfuse/pooling.hpp"
#include "serfuse/types.hpp"

#include <vector>

namespace serfuse {

// Feature-axis concatenation of pooled per-stream vectors.
inline Vec fuse_concat(const std::vector<Vec>& vectors) {
  if (vectors.empty()) throw Error("fuse_concat: empty input list");
  Eigen::Index total = 0;
  for (const auto& v : vectors) total += v.size();
  Vec out(total);
  Eigen::Index at = 0;
  for (const auto& v : vectors) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

// The softmax output layer over the four emotion classes.
struct ClassifierParams {
  Mat w;  // (4, F)
  Vec b;  // (4)

  static ClassifierParams init(int feature_dim, Rng* rng) {
    ClassifierParams p;
    p.w = xavier_uniform(kNumEmotions, feature_dim, rng);
    p.b = Vec::Zero(kNumEmotions);
    return p;
  }
};

struct ClassifierGrads {
  Mat w;
  Vec b;

  static ClassifierGrads zeros_like(const ClassifierParams& p) {
    return {Mat::Zero(p.w.rows(), p.w.cols()), Vec::Zero(p.b.size())};
  }
};

// Probabilities indexed by Emotion order {ang, hap, neu, sad}.
using EmotionDistribution = Vec;

inline Vec classifier_logits(const ClassifierParams& p, const Vec& fused) {
  if (fused.size() != p.w.cols())
    throw Error(strprintf("classify: feature dim %d, expected %d",
                          static_cast<int>(fused.size()),
                          static_cast<int>(p.w.cols())));
  check_finite(fused, "classifier input");
  return p.w * fused + p.b;
}

inline EmotionDistribution classify(const ClassifierParams& p, const Vec& fused) {
  return softmax_vec(classifier_logits(p, fused));
}

// Given d(loss)/d(logits), accumulates parameter gradients and returns
// d(loss)/d(fused).
inline Vec classifier_backward(const ClassifierParams& p, const Vec& fused,
                               const Vec& grad_logits, ClassifierGrads* grads) {
  grads->w += grad_logits * fused.transpose();
  grads->b += grad_logits;
  return p.w.transpose() * grad_logits;
}

// Three-stream co-attention: the acoustic sequence anchors one co-attention
// block with each non-acoustic stream; each block output is mean-pooled and
// the two pooled vectors concatenated (128 dims).
struct TriCoAttentionParams {
  CoAttentionParams with_s1;  // anchor paired with the first other stream
  CoAttentionParams with_s2;  // anchor paired with the second other stream

  static TriCoAttentionParams init(int model_dim, int num_heads, Rng* rng) {
    TriCoAttentionParams p;
    p.with_s1 = CoAttentionParams::init(model_dim, num_heads, rng);
    p.with_s2 = CoAttentionParams::init(model_dim, num_heads, rng);
    return p;
  }
};

struct TriCoAttentionGrads {
  CoAttentionGrads with_s1, with_s2;

  static TriCoAttentionGrads zeros_like(const TriCoAttentionParams& p) {
    return {CoAttentionGrads::zeros_like(p.with_s1),
            CoAttentionGrads::zeros_like(p.with_s2)};
  }
};

struct TriCoAttentionCache {
  CoAttentionCache c1, c2;
  Eigen::Index rows1 = 0, rows2 = 0;
};

inline Vec fuse_coattention(const TriCoAttentionParams& p, const Mat& anchor,
                            const Mat& s1, const Mat& s2,
                            TriCoAttentionCache* cache) {
  Mat h1 = co_attention_forward(p.with_s1, anchor, s1, cache ? &cache->c1 : nullptr);
  Mat h2 = co_attention_forward(p.with_s2, anchor, s2, cache ? &cache->c2 : nullptr);
  if (cache) {
    cache->rows1 = h1.rows();
    cache->rows2 = h2.rows();
  }
  return fuse_concat({mean_over_time(h1), mean_over_time(h2)});
}

inline void fuse_coattention_backward(const TriCoAttentionParams& p,
                                      const TriCoAttentionCache& cache,
                                      const Vec& grad_fused,
                                      TriCoAttentionGrads* grads, Mat* grad_anchor,
                                      Mat* grad_s1, Mat* grad_s2) {
  const int dm = p.with_s1.ab.model_dim();
  Mat d_h1 = mean_over_time_backward(grad_fused.segment(0, dm), cache.rows1);
  Mat d_h2 = mean_over_time_backward(grad_fused.segment(dm, dm), cache.rows2);
  co_attention_backward(p.with_s1, cache.c1, d_h1, &grads->with_s1, grad_anchor,
                        grad_s1);
  co_attention_backward(p.with_s2, cache.c2, d_h2, &grads->with_s2, grad_anchor,
                        grad_s2);
}

// Hierarchical co-attention ordered frame -> utterance -> dialog: stage one
// fuses the acoustic and hidden sequences, stage two fuses that result with
// the text sequence, and the final sequence is mean-pooled (64 dims).
struct HierarchicalParams {
  CoAttentionParams stage1, stage2;

  static HierarchicalParams init(int model_dim, int num_heads, Rng* rng) {
    HierarchicalParams p;
    p.stage1 = CoAttentionParams::init(model_dim, num_heads, rng);
    p.stage2 = CoAttentionParams::init(model_dim, num_heads, rng);
    return p;
  }
};

struct HierarchicalGrads {
  CoAttentionGrads stage1, stage2;

  static HierarchicalGrads zeros_like(const HierarchicalParams& p) {
    return {CoAttentionGrads::zeros_like(p.stage1),
            CoAttentionGrads::zeros_like(p.stage2)};
  }
};

struct HierarchicalCache {
  CoAttentionCache c1, c2;
  Mat h1;
  Eigen::Index rows2 = 0;
};

inline Vec fuse_hierarchical(const HierarchicalParams& p, const Mat& mfcc,
                             const Mat& hidden, const Mat& text,
                             HierarchicalCache* cache) {
  HierarchicalCache local;
  HierarchicalCache* c = cache ? cache : &local;
  c->h1 = co_attention_forward(p.stage1, mfcc, hidden, &c->c1);
  Mat h2 = co_attention_forward(p.stage2, c->h1, text, &c->c2);
  c->rows2 = h2.rows();
  return mean_over_time(h2);
}

inline void fuse_hierarchical_backward(const HierarchicalParams& p,
                                       const HierarchicalCache& cache,
                                       const Vec& grad_fused,
                                       HierarchicalGrads* grads, Mat* grad_mfcc,
                                       Mat* grad_hidden, Mat* grad_text) {
  Mat d_h2 = mean_over_time_backward(grad_fused, cache.rows2);
  Mat d_h1 = Mat::Zero(cache.h1.rows(), cache.h1.cols());
  co_attention_backward(p.stage2, cache.c2, d_h2, &grads->stage2, &d_h1, grad_text);
  co_attention_backward(p.stage1, cache.c1, d_h1, &grads->stage1, grad_mfcc,
                        grad_hidden);
}

}  // namespace serfuse
