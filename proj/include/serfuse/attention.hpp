// serfuse/attention.hpp

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

#include <vector>

namespace serfuse {

// Scaled dot-product multi-head attention without positional encoding.
// Projections are square (model_dim x model_dim); head h owns the column
// block [h*head_dim, (h+1)*head_dim). Scores use 1/sqrt(head_dim). Queries
// come from q_in, keys and values from kv_in; self-attention passes the same
// matrix for both.
struct MultiHeadParams {
  Mat wq, wk, wv, wo;  // (model_dim, model_dim) each
  int num_heads = 16;

  int model_dim() const { return static_cast<int>(wq.cols()); }
  int head_dim() const { return model_dim() / num_heads; }

  static MultiHeadParams init(int model_dim, int num_heads, Rng* rng) {
    if (model_dim % num_heads != 0)
      throw Error("attention: model_dim must be divisible by num_heads");
    MultiHeadParams p;
    p.num_heads = num_heads;
    p.wq = xavier_uniform(model_dim, model_dim, rng);
    p.wk = xavier_uniform(model_dim, model_dim, rng);
    p.wv = xavier_uniform(model_dim, model_dim, rng);
    p.wo = xavier_uniform(model_dim, model_dim, rng);
    return p;
  }
};

struct MultiHeadGrads {
  Mat wq, wk, wv, wo;

  static MultiHeadGrads zeros_like(const MultiHeadParams& p) {
    auto z = [](const Mat& m) { return Mat::Zero(m.rows(), m.cols()); };
    return {z(p.wq), z(p.wk), z(p.wv), z(p.wo)};
  }
};

struct MultiHeadCache {
  Mat q_in, kv_in;
  Mat q, k, v;              // projected, (T, model_dim)
  std::vector<Mat> attn;    // per-head row-softmax weights, (T_q, T_kv)
  Mat concat;               // head outputs side by side, (T_q, model_dim)
};

inline Mat multi_head_forward(const MultiHeadParams& p, const Mat& q_in,
                              const Mat& kv_in, MultiHeadCache* cache) {
  const int dm = p.model_dim();
  if (q_in.cols() != dm || kv_in.cols() != dm)
    throw Error(strprintf("attention: inputs must have %d columns", dm));
  if (q_in.rows() == 0 || kv_in.rows() == 0)
    throw Error("attention: empty input");
  const int hd = p.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat q = q_in * p.wq;
  Mat k = kv_in * p.wk;
  Mat v = kv_in * p.wv;
  Mat concat(q_in.rows(), dm);
  std::vector<Mat> attn(p.num_heads);
  for (int h = 0; h < p.num_heads; ++h) {
    auto qh = q.middleCols(h * hd, hd);
    auto kh = k.middleCols(h * hd, hd);
    auto vh = v.middleCols(h * hd, hd);
    Mat scores = scale * (qh * kh.transpose());
    attn[h] = softmax_rows(scores);
    concat.middleCols(h * hd, hd) = attn[h] * vh;
  }
  Mat out = concat * p.wo;
  if (cache) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->attn = std::move(attn);
    cache->concat = concat;
  }
  return out;
}

// Row-wise softmax Jacobian product: for each row, ds = a .* (da - (da . a)).
inline Mat softmax_rows_backward(const Mat& a, const Mat& da) {
  Mat ds(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double dot = a.row(r).dot(da.row(r));
    ds.row(r) = a.row(r).cwiseProduct((da.row(r).array() - dot).matrix());
  }
  return ds;
}

// Accumulates into *grads, *grad_q_in, *grad_kv_in. The input-gradient
// accumulators must be pre-sized and may alias each other for self-attention.
inline void multi_head_backward(const MultiHeadParams& p, const MultiHeadCache& cache,
                                const Mat& grad_out, MultiHeadGrads* grads,
                                Mat* grad_q_in, Mat* grad_kv_in) {
  const int dm = p.model_dim();
  const int hd = p.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat d_concat = grad_out * p.wo.transpose();
  grads->wo += cache.concat.transpose() * grad_out;

  Mat dq = Mat::Zero(cache.q.rows(), dm);
  Mat dk = Mat::Zero(cache.k.rows(), dm);
  Mat dv = Mat::Zero(cache.v.rows(), dm);
  for (int h = 0; h < p.num_heads; ++h) {
    auto kh = cache.k.middleCols(h * hd, hd);
    auto qh = cache.q.middleCols(h * hd, hd);
    auto vh = cache.v.middleCols(h * hd, hd);
    Mat d_ch = d_concat.middleCols(h * hd, hd);
    const Mat& a = cache.attn[h];
    Mat da = d_ch * vh.transpose();
    dv.middleCols(h * hd, hd) += a.transpose() * d_ch;
    Mat ds = softmax_rows_backward(a, da);
    dq.middleCols(h * hd, hd) += scale * (ds * kh);
    dk.middleCols(h * hd, hd) += scale * (ds.transpose() * qh);
  }
  grads->wq += cache.q_in.transpose() * dq;
  grads->wk += cache.kv_in.transpose() * dk;
  grads->wv += cache.kv_in.transpose() * dv;
  *grad_q_in += dq * p.wq.transpose();
  *grad_kv_in += dk * p.wk.transpose() + dv * p.wv.transpose();
}

// Bidirectional co-attention block over two streams. Each direction has its
// own projections (including its own output projection); the two attended
// sequences are stacked along the time axis:
//   rows [0, T_a)          attend a over b,
//   rows [T_a, T_a + T_b)  attend b over a.
struct CoAttentionParams {
  MultiHeadParams ab;  // queries from a, keys/values from b
  MultiHeadParams ba;  // queries from b, keys/values from a

  static CoAttentionParams init(int model_dim, int num_heads, Rng* rng) {
    CoAttentionParams p;
    p.ab = MultiHeadParams::init(model_dim, num_heads, rng);
    p.ba = MultiHeadParams::init(model_dim, num_heads, rng);
    return p;
  }
};

struct CoAttentionGrads {
  MultiHeadGrads ab, ba;

  static CoAttentionGrads zeros_like(const CoAttentionParams& p) {
    return {MultiHeadGrads::zeros_like(p.ab), MultiHeadGrads::zeros_like(p.ba)};
  }
};

struct CoAttentionCache {
  MultiHeadCache ab, ba;
  Eigen::Index t_a = 0, t_b = 0;
};

inline Mat co_attention_forward(const CoAttentionParams& p, const Mat& a,
                                const Mat& b, CoAttentionCache* cache) {
  Mat out_ab = multi_head_forward(p.ab, a, b, cache ? &cache->ab : nullptr);
  Mat out_ba = multi_head_forward(p.ba, b, a, cache ? &cache->ba : nullptr);
  Mat out(a.rows() + b.rows(), out_ab.cols());
  out.topRows(a.rows()) = out_ab;
  out.bottomRows(b.rows()) = out_ba;
  if (cache) {
    cache->t_a = a.rows();
    cache->t_b = b.rows();
  }
  return out;
}

inline void co_attention_backward(const CoAttentionParams& p,
                                  const CoAttentionCache& cache, const Mat& grad_out,
                                  CoAttentionGrads* grads, Mat* grad_a, Mat* grad_b) {
  Mat g_ab = grad_out.topRows(cache.t_a);
  Mat g_ba = grad_out.bottomRows(cache.t_b);
  multi_head_backward(p.ab, cache.ab, g_ab, &grads->ab, grad_a, grad_b);
  multi_head_backward(p.ba, cache.ba, g_ba, &grads->ba, grad_b, grad_a);
}

}  // namespace serfuse
