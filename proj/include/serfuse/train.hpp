// serfuse/train.hpp

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

#include "serfuse/config.hpp"
#include "serfuse/feature-matrix.hpp"
#include "serfuse/folds.hpp"
#include "serfuse/model.hpp"
#include "serfuse/optim.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace serfuse {

// Binds the configured roles to manifest streams and discovers feature dims
// from the first record. A configuration without the hidden role cannot carry
// the auxiliary ASR objective, so lambda collapses to 0 there.
inline ModelConfig make_model_config(const TrainConfig& cfg,
                                     const std::vector<UtteranceRecord>& records,
                                     const Vocab& vocab) {
  cfg.validate();
  if (records.empty()) throw Error("make_model_config: no records");
  ModelConfig mc;
  mc.strategy = fusion_strategy_from_name(cfg.fusion);
  for (const auto& role : cfg.stream_roles) {
    ModelStream s;
    s.role = role;
    s.source = (role == kRoleMfcc)     ? std::string(kStreamMfcc)
               : (role == kRoleHidden) ? cfg.hidden_stream
                                       : std::string(kStreamText);
    auto it = records[0].features.find(s.source);
    if (it == records[0].features.end())
      throw Error("make_model_config: stream " + s.source + " missing from corpus");
    s.dim = static_cast<int>(read_feature_dims(it->second).second);
    mc.streams.push_back(s);
  }
  mc.vocab_size = vocab.size();
  const bool can_asr = mc.find_role(kRoleHidden) >= 0 && vocab.size() > 0;
  mc.lambda = can_asr ? cfg.lambda : 0.0;
  mc.dropout_p = cfg.dropout_p;
  mc.validate();
  return mc;
}

// with_targets controls whether reference transcripts are encoded as CTC
// targets (training only; evaluation never needs them).
inline UtteranceTensors load_utterance(const UtteranceRecord& rec,
                                       const ModelConfig& mcfg, const Vocab* vocab,
                                       bool with_targets) {
  UtteranceTensors utt;
  utt.utterance_id = rec.utterance_id;
  utt.label = rec.emotion;
  for (const auto& s : mcfg.streams) {
    auto it = rec.features.find(s.source);
    if (it == rec.features.end())
      throw Error("record " + rec.utterance_id + " lacks stream " + s.source);
    Mat m = read_feature_matrix(it->second).to_mat();
    if (static_cast<int>(m.cols()) != s.dim)
      throw Error(strprintf("record %s stream %s has dim %d, expected %d",
                            rec.utterance_id.c_str(), s.source.c_str(),
                            static_cast<int>(m.cols()), s.dim));
    utt.features.push_back(std::move(m));
  }
  if (with_targets && vocab && mcfg.has_asr_head() && mcfg.lambda > 0)
    utt.target_tokens = vocab->encode(rec.ref_transcript);
  return utt;
}

struct EpochMetrics {
  int epoch = 0;
  double l_asr = 0.0;
  double l_ser = 0.0;
  double total = 0.0;
  double heldout_wa = -1.0;  // -1 when no held-out set was given
};

struct TrainOutput {
  ModelConfig model_cfg;
  ModelParams params;
  Vocab vocab;
  AdamState adam;
  std::vector<EpochMetrics> metrics;
  std::set<std::string> trained_ids;  // every id that entered a training batch
  int ctc_infeasible_skipped = 0;
};

struct EvalResult {
  std::vector<std::string> ids;
  std::vector<Emotion> preds;
  std::vector<Emotion> labels;
  double wa = 0.0;
  double ua = 0.0;
};

inline EvalResult evaluate_model(const ModelParams& params, const ModelConfig& mcfg,
                                 const std::vector<UtteranceRecord>& records) {
  if (records.empty()) throw Error("evaluate_model: empty dataset");
  EvalResult r;
  for (const auto& rec : records) {
    UtteranceTensors utt = load_utterance(rec, mcfg, nullptr, false);
    EmotionDistribution dist = model_predict(params, mcfg, utt);
    int arg = 0;
    dist.maxCoeff(&arg);
    r.ids.push_back(rec.utterance_id);
    r.preds.push_back(static_cast<Emotion>(arg));
    r.labels.push_back(rec.emotion);
  }
  r.wa = weighted_accuracy(r.preds, r.labels);
  r.ua = unweighted_accuracy(r.preds, r.labels);
  return r;
}

// Deterministic mini-batch training. One seeded generator drives
// initialization, shuffling, and dropout, so a (seed, config, data) triple
// fixes the whole trajectory. eval_records, when present, are scored after
// each epoch with dropout off and never touch gradients.
inline TrainOutput train_model(const std::vector<UtteranceRecord>& train_records,
                               const std::vector<UtteranceRecord>* eval_records,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (train_records.empty()) throw Error("train_model: empty training set");

  TrainOutput out;
  out.vocab = Vocab::build(train_records);
  out.model_cfg = make_model_config(cfg, train_records, out.vocab);
  Rng rng(cfg.seed);
  out.params = ModelParams::init(out.model_cfg, &rng);

  const ModelConfig& mcfg = out.model_cfg;
  std::vector<UtteranceTensors> data;
  data.reserve(train_records.size());
  for (const auto& rec : train_records)
    data.push_back(load_utterance(rec, mcfg, &out.vocab, true));

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.weight_decay = cfg.weight_decay;
  std::vector<std::string> frozen;
  if (mcfg.lambda == 0.0 && out.params.asr) frozen.push_back("asr.");
  if (mcfg.lambda == 1.0) frozen.push_back("cls.");

  const double lambda = mcfg.lambda;
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double ser_sum = 0.0, asr_sum = 0.0;
    long ser_count = 0, asr_count = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t batch_end = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(batch_end - start);
      ModelGrads grads = ModelGrads::zeros_like(out.params);
      // Two passes: losses first so the batch's ASR participant count is
      // known before gradients are scaled.
      std::vector<ModelCache> caches(batch_end - start);
      std::vector<ForwardOutput> fwd(batch_end - start);
      long batch_asr = 0;
      for (size_t k = start; k < batch_end; ++k) {
        const UtteranceTensors& utt = data[order[k]];
        out.trained_ids.insert(utt.utterance_id);
        fwd[k - start] = model_forward(out.params, mcfg, utt, &caches[k - start],
                                       cfg.dropout_p > 0 ? &rng : nullptr, true);
        if (fwd[k - start].asr_ran) ++batch_asr;
        if (!fwd[k - start].ctc_feasible) ++out.ctc_infeasible_skipped;
      }
      for (size_t k = start; k < batch_end; ++k) {
        const ForwardOutput& f = fwd[k - start];
        ser_sum += f.l_ser;
        ++ser_count;
        Vec d_logits = (1.0 - lambda) * inv_batch * f.grad_logits;
        Mat d_asr;
        if (f.asr_ran) {
          asr_sum += f.l_asr;
          ++asr_count;
          d_asr = (lambda / static_cast<double>(batch_asr)) * f.grad_asr_log_probs;
        }
        model_backward(out.params, mcfg, caches[k - start], d_logits, d_asr,
                       &grads);
      }
      clip_model_gradients(&grads, mcfg, cfg.clip_threshold);
      adam_step_model(&out.params, &grads, &out.adam, adam_cfg, mcfg, frozen);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.l_ser = ser_sum / static_cast<double>(ser_count);
    m.l_asr = asr_count > 0 ? asr_sum / static_cast<double>(asr_count) : 0.0;
    m.total = multitask_loss(m.l_asr, m.l_ser, lambda).total;
    if (eval_records && !eval_records->empty())
      m.heldout_wa = evaluate_model(out.params, mcfg, *eval_records).wa;
    out.metrics.push_back(m);
  }
  return out;
}

// Line-delimited metrics trace: one JSON object per epoch.
inline void save_metrics_trace(const std::vector<EpochMetrics>& metrics,
                               const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("save_metrics_trace: cannot open " + path);
  for (const auto& m : metrics) {
    Json j;
    j["epoch"] = m.epoch;
    j["l_asr"] = strprintf("%.12g", m.l_asr);
    j["l_ser"] = strprintf("%.12g", m.l_ser);
    j["total"] = strprintf("%.12g", m.total);
    j["heldout_wa"] = m.heldout_wa < 0 ? "na" : strprintf("%.6f", m.heldout_wa);
    os << j.dump() << "\n";
  }
  if (!os) throw Error("save_metrics_trace: write failed for " + path);
}

}  // namespace serfuse
