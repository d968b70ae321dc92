// serfuse/lstm.hpp

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

// One LSTM direction. Gate rows of w_x / w_h / b are packed [i; f; g; o],
// each block of H rows. Zero initial state.
struct LstmDirParams {
  Mat w_x;  // (4H, D)
  Mat w_h;  // (4H, H)
  Vec b;    // (4H)

  int hidden() const { return static_cast<int>(w_h.cols()); }
  int input() const { return static_cast<int>(w_x.cols()); }

  static LstmDirParams init(int input_dim, int hidden_dim, Rng* rng) {
    LstmDirParams p;
    p.w_x = xavier_uniform(4 * hidden_dim, input_dim, rng);
    p.w_h = xavier_uniform(4 * hidden_dim, hidden_dim, rng);
    p.b = Vec::Zero(4 * hidden_dim);
    // Forget-gate bias at 1 keeps early training stable.
    p.b.segment(hidden_dim, hidden_dim).setOnes();
    return p;
  }
};

struct LstmDirGrads {
  Mat w_x;
  Mat w_h;
  Vec b;

  static LstmDirGrads zeros_like(const LstmDirParams& p) {
    return {Mat::Zero(p.w_x.rows(), p.w_x.cols()),
            Mat::Zero(p.w_h.rows(), p.w_h.cols()), Vec::Zero(p.b.size())};
  }
};

struct LstmDirCache {
  Mat x;       // (T, D)
  Mat i, f, g, o;  // gate activations, (T, H) each
  Mat c;       // cell states, (T, H)
  Mat tanh_c;  // (T, H)
  Mat h;       // outputs, (T, H)
};

inline Mat lstm_dir_forward(const LstmDirParams& p, const Mat& x, LstmDirCache* cache) {
  const int t_len = static_cast<int>(x.rows());
  const int h_dim = p.hidden();
  if (static_cast<int>(x.cols()) != p.input())
    throw Error(strprintf("lstm: input dim %d, expected %d",
                          static_cast<int>(x.cols()), p.input()));
  if (t_len == 0) throw Error("lstm: empty input");

  // All input projections in one product; the recurrence stays per-step.
  Mat preact = x * p.w_x.transpose();  // (T, 4H)

  Mat mi(t_len, h_dim), mf(t_len, h_dim), mg(t_len, h_dim), mo(t_len, h_dim);
  Mat mc(t_len, h_dim), mtanh(t_len, h_dim), mh(t_len, h_dim);
  Vec h_prev = Vec::Zero(h_dim);
  Vec c_prev = Vec::Zero(h_dim);
  for (int t = 0; t < t_len; ++t) {
    Vec a = preact.row(t).transpose() + p.w_h * h_prev + p.b;
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    Vec gi = a.segment(0, h_dim).unaryExpr(sigmoid);
    Vec gf = a.segment(h_dim, h_dim).unaryExpr(sigmoid);
    Vec gg = a.segment(2 * h_dim, h_dim).array().tanh();
    Vec go = a.segment(3 * h_dim, h_dim).unaryExpr(sigmoid);
    Vec c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
    Vec tc = c.array().tanh();
    Vec h = go.cwiseProduct(tc);
    mi.row(t) = gi.transpose();
    mf.row(t) = gf.transpose();
    mg.row(t) = gg.transpose();
    mo.row(t) = go.transpose();
    mc.row(t) = c.transpose();
    mtanh.row(t) = tc.transpose();
    mh.row(t) = h.transpose();
    h_prev = h;
    c_prev = c;
  }
  if (cache) {
    cache->x = x;
    cache->i = mi;
    cache->f = mf;
    cache->g = mg;
    cache->o = mo;
    cache->c = mc;
    cache->tanh_c = mtanh;
    cache->h = mh;
  }
  return mh;
}

// Accumulates parameter gradients into *grads and returns d/dx. grad_h is the
// upstream gradient on every output row.
inline Mat lstm_dir_backward(const LstmDirParams& p, const LstmDirCache& cache,
                             const Mat& grad_h, LstmDirGrads* grads) {
  const int t_len = static_cast<int>(cache.x.rows());
  const int h_dim = p.hidden();
  Mat d_a(t_len, 4 * h_dim);
  Vec dh_next = Vec::Zero(h_dim);
  Vec dc_next = Vec::Zero(h_dim);
  for (int t = t_len - 1; t >= 0; --t) {
    Vec dh = grad_h.row(t).transpose() + dh_next;
    Vec i = cache.i.row(t).transpose();
    Vec f = cache.f.row(t).transpose();
    Vec g = cache.g.row(t).transpose();
    Vec o = cache.o.row(t).transpose();
    Vec tc = cache.tanh_c.row(t).transpose();
    Vec dc = dh.cwiseProduct(o).cwiseProduct(
                 (1.0 - tc.array().square()).matrix()) +
             dc_next;
    Vec c_prev = (t > 0) ? Vec(cache.c.row(t - 1).transpose()) : Vec(Vec::Zero(h_dim));
    Vec da(4 * h_dim);
    da.segment(0, h_dim) =
        dc.cwiseProduct(g).cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    da.segment(h_dim, h_dim) =
        dc.cwiseProduct(c_prev).cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
    da.segment(2 * h_dim, h_dim) =
        dc.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
    da.segment(3 * h_dim, h_dim) =
        dh.cwiseProduct(tc).cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
    d_a.row(t) = da.transpose();
    dh_next = p.w_h.transpose() * da;
    dc_next = dc.cwiseProduct(f);
  }
  grads->w_x += d_a.transpose() * cache.x;
  if (t_len > 1)
    grads->w_h += d_a.middleRows(1, t_len - 1).transpose() * cache.h.topRows(t_len - 1);
  grads->b += d_a.colwise().sum().transpose();
  return d_a * p.w_x;
}

// Two stacked bidirectional layers; layer outputs concatenate the forward pass
// with the time-reversed backward pass, giving 2H columns. Inverted dropout is
// applied between the layers only, and only when a training-mode RNG is
// supplied.
struct BiLstmParams {
  std::vector<LstmDirParams> fwd;  // one per layer
  std::vector<LstmDirParams> bwd;
  double dropout_p = 0.5;

  int layers() const { return static_cast<int>(fwd.size()); }
  int hidden() const { return fwd.empty() ? 0 : fwd[0].hidden(); }
  int output_dim() const { return 2 * hidden(); }

  static BiLstmParams init(int input_dim, int hidden_dim, int n_layers,
                           double dropout_p, Rng* rng) {
    BiLstmParams p;
    p.dropout_p = dropout_p;
    int d = input_dim;
    for (int l = 0; l < n_layers; ++l) {
      p.fwd.push_back(LstmDirParams::init(d, hidden_dim, rng));
      p.bwd.push_back(LstmDirParams::init(d, hidden_dim, rng));
      d = 2 * hidden_dim;
    }
    return p;
  }
};

struct BiLstmGrads {
  std::vector<LstmDirGrads> fwd;
  std::vector<LstmDirGrads> bwd;

  static BiLstmGrads zeros_like(const BiLstmParams& p) {
    BiLstmGrads g;
    for (int l = 0; l < p.layers(); ++l) {
      g.fwd.push_back(LstmDirGrads::zeros_like(p.fwd[l]));
      g.bwd.push_back(LstmDirGrads::zeros_like(p.bwd[l]));
    }
    return g;
  }
};

struct BiLstmCache {
  std::vector<LstmDirCache> fwd;
  std::vector<LstmDirCache> bwd;
  std::vector<Mat> dropout_mask;  // post-layer masks; empty rows when inactive
};

inline Mat bi_lstm_forward(const BiLstmParams& p, const Mat& x, BiLstmCache* cache,
                           Rng* dropout_rng) {
  Mat cur = x;
  if (cache) {
    cache->fwd.resize(p.layers());
    cache->bwd.resize(p.layers());
    cache->dropout_mask.assign(p.layers(), Mat());
  }
  for (int l = 0; l < p.layers(); ++l) {
    Mat h_f = lstm_dir_forward(p.fwd[l], cur, cache ? &cache->fwd[l] : nullptr);
    Mat h_b = lstm_dir_forward(p.bwd[l], reverse_rows(cur),
                               cache ? &cache->bwd[l] : nullptr);
    Mat out(cur.rows(), p.output_dim());
    out.leftCols(p.hidden()) = h_f;
    out.rightCols(p.hidden()) = reverse_rows(h_b);
    if (dropout_rng && p.dropout_p > 0 && l + 1 < p.layers()) {
      const double keep = 1.0 - p.dropout_p;
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Mat mask(out.rows(), out.cols());
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c)
          mask(r, c) = unit(*dropout_rng) < keep ? 1.0 / keep : 0.0;
      out = out.cwiseProduct(mask);
      if (cache) cache->dropout_mask[l] = mask;
    }
    cur = out;
  }
  return cur;
}

inline Mat bi_lstm_backward(const BiLstmParams& p, const BiLstmCache& cache,
                            const Mat& grad_out, BiLstmGrads* grads) {
  Mat d_cur = grad_out;
  for (int l = p.layers() - 1; l >= 0; --l) {
    if (cache.dropout_mask[l].size() > 0)
      d_cur = d_cur.cwiseProduct(cache.dropout_mask[l]);
    Mat d_hf = d_cur.leftCols(p.hidden());
    Mat d_hb = reverse_rows(Mat(d_cur.rightCols(p.hidden())));
    Mat d_in_f = lstm_dir_backward(p.fwd[l], cache.fwd[l], d_hf, &grads->fwd[l]);
    Mat d_in_b = lstm_dir_backward(p.bwd[l], cache.bwd[l], d_hb, &grads->bwd[l]);
    d_cur = d_in_f + reverse_rows(d_in_b);
  }
  return d_cur;
}

}  // namespace serfuse
