// serfuse/model.hpp

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

#include "serfuse/ctc.hpp"
#include "serfuse/encoder.hpp"
#include "serfuse/fusion.hpp"
#include "serfuse/losses.hpp"
#include "serfuse/types.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace serfuse {

enum class FusionStrategy { kSingle, kConcat, kCoAttention, kHierarchical };

inline const char* fusion_strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kSingle: return "single";
    case FusionStrategy::kConcat: return "concat";
    case FusionStrategy::kCoAttention: return "coattention";
    case FusionStrategy::kHierarchical: return "hierarchical";
  }
  throw Error("invalid fusion strategy");
}

inline FusionStrategy fusion_strategy_from_name(const std::string& name) {
  for (FusionStrategy s :
       {FusionStrategy::kSingle, FusionStrategy::kConcat,
        FusionStrategy::kCoAttention, FusionStrategy::kHierarchical}) {
    if (name == fusion_strategy_name(s)) return s;
  }
  throw Error("unknown fusion strategy: " + name);
}

// A model input slot. role fixes the position in the architecture
// (mfcc / hidden / text); source names the manifest stream feeding it, so the
// hidden slot can be bound to any of the hidden-layer variants.
struct ModelStream {
  std::string role;
  std::string source;
  int dim = 0;
};

inline constexpr const char* kRoleMfcc = "mfcc";
inline constexpr const char* kRoleHidden = "hidden";
inline constexpr const char* kRoleText = "text";

struct ModelConfig {
  FusionStrategy strategy = FusionStrategy::kHierarchical;
  std::vector<ModelStream> streams;  // canonical role order: mfcc, hidden, text
  int vocab_size = 0;                // ASR tokens excluding blank
  double lambda = 0.2;
  double dropout_p = 0.5;

  int find_role(const std::string& role) const {
    for (size_t i = 0; i < streams.size(); ++i)
      if (streams[i].role == role) return static_cast<int>(i);
    return -1;
  }

  // The auxiliary head exists whenever it could receive gradient under some
  // lambda; lambda itself only gates the loss term.
  bool has_asr_head() const { return vocab_size > 0 && find_role(kRoleHidden) >= 0; }

  int fused_dim() const {
    switch (strategy) {
      case FusionStrategy::kSingle: return kModelDim;
      case FusionStrategy::kConcat:
        return kModelDim * static_cast<int>(streams.size());
      case FusionStrategy::kCoAttention:
        return streams.size() == 3 ? 2 * kModelDim : kModelDim;
      case FusionStrategy::kHierarchical: return kModelDim;
    }
    throw Error("invalid fusion strategy");
  }

  void validate() const {
    if (streams.empty()) throw Error("ModelConfig: no streams");
    static const std::vector<std::string> kOrder = {kRoleMfcc, kRoleHidden,
                                                    kRoleText};
    size_t at = 0;
    for (const auto& s : streams) {
      auto it = std::find(kOrder.begin() + at, kOrder.end(), s.role);
      if (it == kOrder.end())
        throw Error("ModelConfig: bad or out-of-order stream role " + s.role);
      at = static_cast<size_t>(it - kOrder.begin()) + 1;
      if (s.dim < 1) throw Error("ModelConfig: stream dim must be >= 1");
      if (s.source.empty()) throw Error("ModelConfig: stream source missing");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw Error("ModelConfig: lambda must be in [0,1]");
    if (lambda > 0 && !has_asr_head())
      throw Error("ModelConfig: lambda > 0 needs a hidden stream and a vocabulary");
    switch (strategy) {
      case FusionStrategy::kSingle:
        if (streams.size() != 1) throw Error("ModelConfig: single takes 1 stream");
        break;
      case FusionStrategy::kConcat:
        if (streams.size() < 2)
          throw Error("ModelConfig: concat takes at least 2 streams");
        break;
      case FusionStrategy::kCoAttention:
        if (streams.size() < 2 || find_role(kRoleMfcc) != 0)
          throw Error("ModelConfig: coattention takes the acoustic anchor plus 1 or 2 streams");
        break;
      case FusionStrategy::kHierarchical:
        if (streams.size() != 3 || find_role(kRoleMfcc) != 0 ||
            find_role(kRoleHidden) != 1 || find_role(kRoleText) != 2)
          throw Error("ModelConfig: hierarchical takes (mfcc, hidden, text)");
        break;
    }
  }
};

// ASR token inventory. Blank takes the last id, after all real tokens.
struct Vocab {
  std::vector<std::string> tokens;  // sorted, unique

  int size() const { return static_cast<int>(tokens.size()); }
  int blank_id() const { return size(); }

  static Vocab build(const std::vector<UtteranceRecord>& records) {
    std::set<std::string> uniq;
    for (const auto& r : records)
      for (const auto& t : r.ref_transcript) uniq.insert(t);
    Vocab v;
    v.tokens.assign(uniq.begin(), uniq.end());
    return v;
  }

  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) {
      auto it = std::lower_bound(tokens.begin(), tokens.end(), w);
      if (it == tokens.end() || *it != w)
        throw Error("vocab: unknown token " + w);
      ids.push_back(static_cast<int>(it - tokens.begin()));
    }
    return ids;
  }
};

struct ModelParams {
  std::vector<EncoderParams> encoders;  // parallel to ModelConfig::streams
  std::optional<CoAttentionParams> co_pair;   // coattention over 2 streams
  std::optional<TriCoAttentionParams> co_tri; // coattention over 3 streams
  std::optional<HierarchicalParams> hier;
  ClassifierParams cls;
  std::optional<AsrHeadParams> asr;

  static ModelParams init(const ModelConfig& cfg, Rng* rng) {
    cfg.validate();
    ModelParams p;
    for (const auto& s : cfg.streams)
      p.encoders.push_back(
          EncoderParams::init(s.dim, s.role == kRoleMfcc, cfg.dropout_p, rng));
    if (cfg.strategy == FusionStrategy::kCoAttention) {
      if (cfg.streams.size() == 2)
        p.co_pair = CoAttentionParams::init(kModelDim, kNumHeads, rng);
      else
        p.co_tri = TriCoAttentionParams::init(kModelDim, kNumHeads, rng);
    } else if (cfg.strategy == FusionStrategy::kHierarchical) {
      p.hier = HierarchicalParams::init(kModelDim, kNumHeads, rng);
    }
    p.cls = ClassifierParams::init(cfg.fused_dim(), rng);
    if (cfg.has_asr_head())
      p.asr = AsrHeadParams::init(cfg.vocab_size + 1, kModelDim, rng);
    return p;
  }
};

struct ModelGrads {
  std::vector<EncoderGrads> encoders;
  std::optional<CoAttentionGrads> co_pair;
  std::optional<TriCoAttentionGrads> co_tri;
  std::optional<HierarchicalGrads> hier;
  ClassifierGrads cls;
  std::optional<AsrHeadGrads> asr;

  static ModelGrads zeros_like(const ModelParams& p) {
    ModelGrads g;
    for (const auto& e : p.encoders) g.encoders.push_back(EncoderGrads::zeros_like(e));
    if (p.co_pair) g.co_pair = CoAttentionGrads::zeros_like(*p.co_pair);
    if (p.co_tri) g.co_tri = TriCoAttentionGrads::zeros_like(*p.co_tri);
    if (p.hier) g.hier = HierarchicalGrads::zeros_like(*p.hier);
    g.cls = ClassifierGrads::zeros_like(p.cls);
    if (p.asr) g.asr = AsrHeadGrads::zeros_like(*p.asr);
    return g;
  }
};

// Flat view of one tensor for the optimizer and the checkpoint writer.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0, cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

inline TensorRef tensor_ref(const std::string& name, Mat* m) {
  return {name, m->data(), m->rows(), m->cols()};
}
inline TensorRef tensor_ref(const std::string& name, Vec* v) {
  return {name, v->data(), v->size(), 1};
}

namespace detail {

template <class MhaT>
void collect_mha(const std::string& prefix, MhaT* m, std::vector<TensorRef>* out) {
  out->push_back(tensor_ref(prefix + ".wq", &m->wq));
  out->push_back(tensor_ref(prefix + ".wk", &m->wk));
  out->push_back(tensor_ref(prefix + ".wv", &m->wv));
  out->push_back(tensor_ref(prefix + ".wo", &m->wo));
}

template <class CoT>
void collect_co(const std::string& prefix, CoT* c, std::vector<TensorRef>* out) {
  collect_mha(prefix + ".ab", &c->ab, out);
  collect_mha(prefix + ".ba", &c->ba, out);
}

template <class EncT>
void collect_encoder(const std::string& prefix, EncT* e, std::vector<TensorRef>* out) {
  for (size_t l = 0; l < e->lstm.fwd.size(); ++l) {
    for (auto [dir, part] : {std::pair{"fwd", &e->lstm.fwd[l]},
                             std::pair{"bwd", &e->lstm.bwd[l]}}) {
      std::string base = prefix + ".lstm" + std::to_string(l) + "." + dir;
      out->push_back(tensor_ref(base + ".w_x", &part->w_x));
      out->push_back(tensor_ref(base + ".w_h", &part->w_h));
      out->push_back(tensor_ref(base + ".b", &part->b));
    }
  }
  collect_mha(prefix + ".attn", &e->attn, out);
}

}  // namespace detail

// Enumerates every trainable tensor with a stable name. ModelParams and
// ModelGrads share the traversal, so the two listings pair up by index.
template <class ModelT>
std::vector<TensorRef> collect_tensors(ModelT* p, const ModelConfig& cfg) {
  std::vector<TensorRef> out;
  for (size_t i = 0; i < p->encoders.size(); ++i)
    detail::collect_encoder("enc." + cfg.streams[i].role, &p->encoders[i], &out);
  if (p->co_pair) detail::collect_co("fusion.pair", &*p->co_pair, &out);
  if (p->co_tri) {
    detail::collect_co("fusion.s1", &p->co_tri->with_s1, &out);
    detail::collect_co("fusion.s2", &p->co_tri->with_s2, &out);
  }
  if (p->hier) {
    detail::collect_co("fusion.h1", &p->hier->stage1, &out);
    detail::collect_co("fusion.h2", &p->hier->stage2, &out);
  }
  out.push_back(tensor_ref("cls.w", &p->cls.w));
  out.push_back(tensor_ref("cls.b", &p->cls.b));
  if (p->asr) {
    out.push_back(tensor_ref("asr.w", &p->asr->w));
    out.push_back(tensor_ref("asr.b", &p->asr->b));
  }
  return out;
}

// One utterance, features in ModelConfig stream order.
struct UtteranceTensors {
  std::string utterance_id;
  std::vector<Mat> features;
  Emotion label = Emotion::kAng;
  std::vector<int> target_tokens;  // ASR target; empty when unused
};

struct ModelCache {
  std::vector<EncoderCache> enc;
  std::vector<Mat> enc_out;
  TriCoAttentionCache co_tri;
  CoAttentionCache co_pair;
  Eigen::Index co_pair_rows = 0;
  HierarchicalCache hier;
  Vec fused;
  Vec logits;
  AsrHeadCache asr;
  bool asr_ran = false;
};

struct ForwardOutput {
  Vec logits;
  double l_ser = 0.0;
  Vec grad_logits;     // d l_ser / d logits
  bool asr_ran = false;
  bool ctc_feasible = true;
  double l_asr = 0.0;
  Mat grad_asr_log_probs;  // d l_asr / d log_probs when the head ran
};

// Forward pass for one utterance. run_asr additionally evaluates the CTC head
// on the encoded hidden stream (training only); dropout_rng enables encoder
// dropout. An infeasible CTC instance reports ctc_feasible = false and
// contributes no ASR loss.
inline ForwardOutput model_forward(const ModelParams& p, const ModelConfig& cfg,
                                   const UtteranceTensors& utt, ModelCache* cache,
                                   Rng* dropout_rng, bool run_asr) {
  if (utt.features.size() != cfg.streams.size())
    throw Error("model_forward: stream count mismatch");
  ModelCache local;
  ModelCache* c = cache ? cache : &local;
  const size_t n = cfg.streams.size();
  c->enc.resize(n);
  c->enc_out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    check_finite(utt.features[i], "features for " + cfg.streams[i].source);
    c->enc_out[i] =
        encoder_forward(p.encoders[i], utt.features[i], &c->enc[i], dropout_rng);
  }

  switch (cfg.strategy) {
    case FusionStrategy::kSingle:
      c->fused = mean_over_time(c->enc_out[0]);
      break;
    case FusionStrategy::kConcat: {
      std::vector<Vec> pooled;
      for (const auto& e : c->enc_out) pooled.push_back(mean_over_time(e));
      c->fused = fuse_concat(pooled);
      break;
    }
    case FusionStrategy::kCoAttention:
      if (n == 2) {
        Mat h = co_attention_forward(*p.co_pair, c->enc_out[0], c->enc_out[1],
                                     &c->co_pair);
        c->co_pair_rows = h.rows();
        c->fused = mean_over_time(h);
      } else {
        c->fused = fuse_coattention(*p.co_tri, c->enc_out[0], c->enc_out[1],
                                    c->enc_out[2], &c->co_tri);
      }
      break;
    case FusionStrategy::kHierarchical:
      c->fused = fuse_hierarchical(*p.hier, c->enc_out[0], c->enc_out[1],
                                   c->enc_out[2], &c->hier);
      break;
  }
  c->logits = classifier_logits(p.cls, c->fused);

  ForwardOutput out;
  out.logits = c->logits;
  CrossEntropyResult ce = cross_entropy_from_logits(c->logits, utt.label);
  out.l_ser = ce.loss;
  out.grad_logits = ce.grad_logits;

  if (run_asr && p.asr && cfg.lambda > 0 && !utt.target_tokens.empty()) {
    int hid = cfg.find_role(kRoleHidden);
    Mat log_probs = asr_head_forward(*p.asr, c->enc_out[hid], &c->asr);
    CtcResult ctc = ctc_loss(log_probs, utt.target_tokens, true);
    out.asr_ran = ctc.feasible;
    out.ctc_feasible = ctc.feasible;
    if (ctc.feasible) {
      out.l_asr = ctc.loss;
      out.grad_asr_log_probs = std::move(ctc.grad_log_probs);
    }
  }
  c->asr_ran = out.asr_ran;
  return out;
}

// Backward pass for one utterance. grad_logits is the upstream gradient on the
// classifier logits (already scaled by the loss weighting); grad_asr_log_probs
// likewise for the ASR head, or empty. Accumulates into *grads.
inline void model_backward(const ModelParams& p, const ModelConfig& cfg,
                           const ModelCache& cache, const Vec& grad_logits,
                           const Mat& grad_asr_log_probs, ModelGrads* grads) {
  const size_t n = cfg.streams.size();
  std::vector<Mat> d_enc(n);
  for (size_t i = 0; i < n; ++i)
    d_enc[i] = Mat::Zero(cache.enc_out[i].rows(), cache.enc_out[i].cols());

  Vec d_fused = classifier_backward(p.cls, cache.fused, grad_logits, &grads->cls);
  switch (cfg.strategy) {
    case FusionStrategy::kSingle:
      d_enc[0] += mean_over_time_backward(d_fused, cache.enc_out[0].rows());
      break;
    case FusionStrategy::kConcat: {
      Eigen::Index at = 0;
      for (size_t i = 0; i < n; ++i) {
        d_enc[i] += mean_over_time_backward(d_fused.segment(at, kModelDim),
                                            cache.enc_out[i].rows());
        at += kModelDim;
      }
      break;
    }
    case FusionStrategy::kCoAttention:
      if (n == 2) {
        Mat d_h = mean_over_time_backward(d_fused, cache.co_pair_rows);
        co_attention_backward(*p.co_pair, cache.co_pair, d_h, &*grads->co_pair,
                              &d_enc[0], &d_enc[1]);
      } else {
        fuse_coattention_backward(*p.co_tri, cache.co_tri, d_fused,
                                  &*grads->co_tri, &d_enc[0], &d_enc[1],
                                  &d_enc[2]);
      }
      break;
    case FusionStrategy::kHierarchical:
      fuse_hierarchical_backward(*p.hier, cache.hier, d_fused, &*grads->hier,
                                 &d_enc[0], &d_enc[1], &d_enc[2]);
      break;
  }

  if (cache.asr_ran && grad_asr_log_probs.size() > 0) {
    int hid = cfg.find_role(kRoleHidden);
    d_enc[hid] +=
        asr_head_backward(*p.asr, cache.asr, grad_asr_log_probs, &*grads->asr);
  }

  for (size_t i = 0; i < n; ++i)
    encoder_backward(p.encoders[i], cache.enc[i], d_enc[i], &grads->encoders[i]);
}

// Deterministic evaluation: dropout off, no ASR head.
inline EmotionDistribution model_predict(const ModelParams& p,
                                         const ModelConfig& cfg,
                                         const UtteranceTensors& utt) {
  ModelCache cache;
  model_forward(p, cfg, utt, &cache, nullptr, false);
  return softmax_vec(cache.logits);
}

}  // namespace serfuse
