// serfuse/encoder.hpp

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
#include "serfuse/lstm.hpp"
#include "serfuse/pooling.hpp"
#include "serfuse/types.hpp"

namespace serfuse {

inline constexpr int kModelDim = 64;
inline constexpr int kLstmHidden = 32;
inline constexpr int kLstmLayers = 2;
inline constexpr int kNumHeads = 16;
inline constexpr int kMfccPoolKernel = 2;

// Stream encoder: optional temporal max pooling (acoustic front end only),
// two bidirectional LSTM layers, multi-head self-attention over the LSTM
// output. Produces a (T, 64) sequence; mean pooling down to a fixed vector is
// left to the caller so fusion blocks can consume the full sequence.
struct EncoderParams {
  BiLstmParams lstm;
  MultiHeadParams attn;
  bool pool_input = false;

  static EncoderParams init(int input_dim, bool pool_input, double dropout_p,
                            Rng* rng) {
    EncoderParams p;
    p.pool_input = pool_input;
    p.lstm = BiLstmParams::init(input_dim, kLstmHidden, kLstmLayers, dropout_p, rng);
    p.attn = MultiHeadParams::init(kModelDim, kNumHeads, rng);
    return p;
  }
};

struct EncoderGrads {
  BiLstmGrads lstm;
  MultiHeadGrads attn;

  static EncoderGrads zeros_like(const EncoderParams& p) {
    return {BiLstmGrads::zeros_like(p.lstm), MultiHeadGrads::zeros_like(p.attn)};
  }
};

struct EncoderCache {
  BiLstmCache lstm;
  MultiHeadCache attn;
  Mat lstm_out;
};

// dropout_rng enables inter-layer dropout (training mode); pass nullptr for
// deterministic evaluation.
inline Mat encoder_forward(const EncoderParams& p, const Mat& features,
                           EncoderCache* cache, Rng* dropout_rng) {
  Mat x = p.pool_input ? max_pool_time(features, kMfccPoolKernel) : features;
  Mat h = bi_lstm_forward(p.lstm, x, cache ? &cache->lstm : nullptr, dropout_rng);
  if (cache) cache->lstm_out = h;
  return multi_head_forward(p.attn, h, h, cache ? &cache->attn : nullptr);
}

// Returns nothing: input features are data, not parameters, so their gradient
// is dropped after the LSTM layer-one backward pass.
inline void encoder_backward(const EncoderParams& p, const EncoderCache& cache,
                             const Mat& grad_out, EncoderGrads* grads) {
  Mat d_h = Mat::Zero(cache.lstm_out.rows(), cache.lstm_out.cols());
  multi_head_backward(p.attn, cache.attn, grad_out, &grads->attn, &d_h, &d_h);
  bi_lstm_backward(p.lstm, cache.lstm, d_h, &grads->lstm);
}

}  // namespace serfuse
