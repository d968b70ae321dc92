// tests/train_test.cpp

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

#include "serfuse/train.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "serfuse/checkpoint.hpp"
#include "serfuse/synth.hpp"
#include "test_util.hpp"

namespace serfuse {
namespace {

// One small corpus shared by the whole file; generation is deterministic.
const SynthResult& corpus() {
  static test::TempDir dir("train_corpus");
  static SynthResult result = [] {
    SynthConfig sc;
    sc.n_per_class = 5;
    sc.vocab_size = 4;
    sc.frames_per_token = 2;
    sc.d_mfcc = 6;
    sc.d_hidden = 8;
    sc.d_text = 5;
    sc.n_sessions = 2;
    sc.len_min = {3, 3, 3, 3};
    sc.len_max = {5, 5, 5, 5};
    sc.seed = 4242;
    return synth_generate(sc, dir.str());
  }();
  return result;
}

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.max_epochs = 2;
  cfg.seed = 7;
  return cfg;
}

bool params_bitwise_equal(ModelParams* a, ModelParams* b, const ModelConfig& cfg) {
  auto ta = collect_tensors(a, cfg);
  auto tb = collect_tensors(b, cfg);
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].size() != tb[i].size()) return false;
    if (std::memcmp(ta[i].data, tb[i].data, sizeof(double) * ta[i].size()) != 0)
      return false;
  }
  return true;
}

TEST(MakeModelConfigTest, LambdaCollapsesWithoutHiddenRole) {
  TrainConfig cfg = small_train_config();
  cfg.fusion = "concat";
  cfg.stream_roles = {"mfcc", "text"};
  Vocab vocab = Vocab::build(corpus().records);
  ModelConfig mc = make_model_config(cfg, corpus().records, vocab);
  EXPECT_DOUBLE_EQ(mc.lambda, 0.0);
  EXPECT_FALSE(mc.has_asr_head());
}

TEST(MakeModelConfigTest, LambdaCollapsesWithEmptyVocab) {
  TrainConfig cfg = small_train_config();
  Vocab empty;
  ModelConfig mc = make_model_config(cfg, corpus().records, empty);
  EXPECT_DOUBLE_EQ(mc.lambda, 0.0);
  EXPECT_FALSE(mc.has_asr_head());
}

TEST(MakeModelConfigTest, BindsRolesToStreamsAndDims) {
  TrainConfig cfg = small_train_config();
  cfg.hidden_stream = kStreamHiddenFirst;
  Vocab vocab = Vocab::build(corpus().records);
  ModelConfig mc = make_model_config(cfg, corpus().records, vocab);
  ASSERT_EQ(mc.streams.size(), 3u);
  EXPECT_EQ(mc.streams[0].source, kStreamMfcc);
  EXPECT_EQ(mc.streams[1].source, kStreamHiddenFirst);
  EXPECT_EQ(mc.streams[2].source, kStreamText);
  EXPECT_EQ(mc.streams[0].dim, 6);
  EXPECT_EQ(mc.streams[1].dim, 8);
  EXPECT_EQ(mc.streams[2].dim, 5);
  EXPECT_DOUBLE_EQ(mc.lambda, cfg.lambda);
  EXPECT_TRUE(mc.has_asr_head());
}

TEST(MakeModelConfigTest, MissingStreamIsRejected) {
  TrainConfig cfg = small_train_config();
  std::vector<UtteranceRecord> records = corpus().records;
  for (auto& rec : records) rec.features.erase(std::string(kStreamText));
  Vocab vocab = Vocab::build(records);
  EXPECT_THROW(make_model_config(cfg, records, vocab), Error);
}

TEST(LoadUtteranceTest, OrdersFeaturesAndEncodesTargets) {
  TrainConfig cfg = small_train_config();
  Vocab vocab = Vocab::build(corpus().records);
  ModelConfig mc = make_model_config(cfg, corpus().records, vocab);
  const UtteranceRecord& rec = corpus().records[0];
  UtteranceTensors utt = load_utterance(rec, mc, &vocab, true);
  ASSERT_EQ(utt.features.size(), 3u);
  EXPECT_EQ(utt.features[0].cols(), 6);
  EXPECT_EQ(utt.features[1].cols(), 8);
  EXPECT_EQ(utt.features[2].cols(), 5);
  EXPECT_EQ(utt.target_tokens.size(), rec.ref_transcript.size());
  EXPECT_EQ(utt.label, rec.emotion);

  UtteranceTensors eval_utt = load_utterance(rec, mc, nullptr, false);
  EXPECT_TRUE(eval_utt.target_tokens.empty());
}

TEST(LoadUtteranceTest, RejectsDimMismatch) {
  TrainConfig cfg = small_train_config();
  Vocab vocab = Vocab::build(corpus().records);
  ModelConfig mc = make_model_config(cfg, corpus().records, vocab);
  mc.streams[0].dim += 1;
  EXPECT_THROW(load_utterance(corpus().records[0], mc, &vocab, true), Error);
}

TEST(TrainTest, RerunsAreBitIdentical) {
  TrainConfig cfg = small_train_config();
  TrainOutput a = train_model(corpus().records, nullptr, cfg);
  TrainOutput b = train_model(corpus().records, nullptr, cfg);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].l_asr, b.metrics[i].l_asr);
    EXPECT_EQ(a.metrics[i].l_ser, b.metrics[i].l_ser);
    EXPECT_EQ(a.metrics[i].total, b.metrics[i].total);
  }
  EXPECT_TRUE(params_bitwise_equal(&a.params, &b.params, a.model_cfg));
  EXPECT_EQ(a.adam.step, b.adam.step);
}

TEST(TrainTest, LambdaZeroFreezesAsrHeadBytes) {
  TrainConfig cfg = small_train_config();
  cfg.lambda = 0.0;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);
  ASSERT_TRUE(out.params.asr.has_value());

  Rng rng(cfg.seed);
  ModelParams fresh = ModelParams::init(out.model_cfg, &rng);
  EXPECT_TRUE(test::mat_equal(out.params.asr->w, fresh.asr->w));
  EXPECT_TRUE(test::mat_equal(out.params.asr->b, fresh.asr->b));
  EXPECT_FALSE(test::mat_equal(out.params.cls.w, fresh.cls.w));
  EXPECT_EQ(out.adam.moments.count("asr.w"), 0u);
}

TEST(TrainTest, LambdaOneFreezesClassifierBytes) {
  TrainConfig cfg = small_train_config();
  cfg.lambda = 1.0;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);

  Rng rng(cfg.seed);
  ModelParams fresh = ModelParams::init(out.model_cfg, &rng);
  EXPECT_TRUE(test::mat_equal(out.params.cls.w, fresh.cls.w));
  EXPECT_TRUE(test::mat_equal(out.params.cls.b, fresh.cls.b));
  EXPECT_FALSE(test::mat_equal(out.params.asr->w, fresh.asr->w));
  EXPECT_EQ(out.adam.moments.count("cls.w"), 0u);
}

TEST(TrainTest, EpochTotalsFollowTheLambdaWeighting) {
  TrainConfig cfg = small_train_config();
  TrainOutput out = train_model(corpus().records, nullptr, cfg);
  ASSERT_FALSE(out.metrics.empty());
  for (const auto& m : out.metrics) {
    EXPECT_NEAR(m.total, 0.2 * m.l_asr + 0.8 * m.l_ser, 1e-12);
    EXPECT_GT(m.l_ser, 0.0);
    EXPECT_GT(m.l_asr, 0.0);
    EXPECT_DOUBLE_EQ(m.heldout_wa, -1.0);
  }
}

TEST(TrainTest, HeldoutSetIsScoredEveryEpoch) {
  TrainConfig cfg = small_train_config();
  cfg.max_epochs = 1;
  std::vector<UtteranceRecord> train_set, eval_set;
  for (const auto& rec : corpus().records) {
    if (rec.session_id == "S1")
      eval_set.push_back(rec);
    else
      train_set.push_back(rec);
  }
  ASSERT_FALSE(eval_set.empty());
  TrainOutput out = train_model(train_set, &eval_set, cfg);
  for (const auto& m : out.metrics) {
    EXPECT_GE(m.heldout_wa, 0.0);
    EXPECT_LE(m.heldout_wa, 1.0);
  }
  for (const auto& rec : eval_set)
    EXPECT_EQ(out.trained_ids.count(rec.utterance_id), 0u);
}

TEST(TrainTest, EveryTrainingUtteranceEntersABatch) {
  TrainConfig cfg = small_train_config();
  cfg.max_epochs = 1;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);
  EXPECT_EQ(out.trained_ids.size(), corpus().records.size());
  for (const auto& rec : corpus().records)
    EXPECT_EQ(out.trained_ids.count(rec.utterance_id), 1u);
}

TEST(TrainTest, InfeasibleCtcInstancesAreCountedAndSkipped) {
  // Hand-built corpus: references longer than the hidden frame count make the
  // CTC alignment impossible for two of the four utterances.
  test::TempDir dir("infeasible");
  std::vector<UtteranceRecord> records;
  Rng rng(55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](int rows, int cols) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
    return m;
  };
  for (int i = 0; i < 4; ++i) {
    UtteranceRecord rec;
    rec.utterance_id = strprintf("u%d", i);
    rec.session_id = "S1";
    rec.speaker_id = "S1-A";
    rec.emotion = static_cast<Emotion>(i);
    int ref_len = (i < 2) ? 8 : 2;  // 8 tokens cannot fit in 4 hidden frames
    for (int w = 0; w < ref_len; ++w)
      rec.ref_transcript.push_back(strprintf("t%d", w % 4));
    for (const auto& stream : known_streams()) {
      int rows = (stream == kStreamMfcc) ? 8 : 4;
      std::string path = dir.str(rec.utterance_id + "." + stream + ".fmx");
      write_feature_matrix(FeatureMatrix::from_mat(fill(rows, 5)), path);
      rec.features[stream] = path;
    }
    records.push_back(rec);
  }
  TrainConfig cfg = small_train_config();
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  TrainOutput out = train_model(records, nullptr, cfg);
  EXPECT_EQ(out.ctc_infeasible_skipped, 2 * 2);
  for (const auto& m : out.metrics) EXPECT_GT(m.l_asr, 0.0);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  TrainConfig cfg = small_train_config();
  cfg.max_epochs = 1;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);

  test::TempDir dir("ckpt");
  std::string path = dir.str("model.ckpt");
  save_checkpoint(path, out.model_cfg, &out.params, out.vocab, out.adam,
                  static_cast<uint32_t>(out.metrics.size()), cfg.config_hash());
  CheckpointData loaded = load_checkpoint(path);

  EXPECT_EQ(loaded.epoch, 1u);
  EXPECT_EQ(loaded.config_hash, cfg.config_hash());
  EXPECT_EQ(loaded.vocab.tokens, out.vocab.tokens);
  EXPECT_EQ(loaded.model_cfg.vocab_size, out.model_cfg.vocab_size);
  EXPECT_DOUBLE_EQ(loaded.model_cfg.lambda, out.model_cfg.lambda);
  EXPECT_TRUE(params_bitwise_equal(&loaded.params, &out.params, out.model_cfg));
  EXPECT_EQ(loaded.adam.step, out.adam.step);
  ASSERT_EQ(loaded.adam.moments.size(), out.adam.moments.size());
  for (const auto& [name, mv] : out.adam.moments) {
    ASSERT_EQ(loaded.adam.moments.count(name), 1u);
    EXPECT_TRUE(test::mat_equal(loaded.adam.moments.at(name).first, mv.first));
    EXPECT_TRUE(test::mat_equal(loaded.adam.moments.at(name).second, mv.second));
  }

  // The restored model scores identically, bit for bit.
  EvalResult before = evaluate_model(out.params, out.model_cfg, corpus().records);
  EvalResult after = evaluate_model(loaded.params, loaded.model_cfg, corpus().records);
  EXPECT_EQ(before.preds, after.preds);
  EXPECT_EQ(before.wa, after.wa);

  UtteranceTensors utt =
      load_utterance(corpus().records[0], out.model_cfg, nullptr, false);
  EmotionDistribution d1 = model_predict(out.params, out.model_cfg, utt);
  EmotionDistribution d2 = model_predict(loaded.params, loaded.model_cfg, utt);
  EXPECT_TRUE(test::mat_equal(d1, d2));
}

TEST(CheckpointTest, RejectsCorruptFiles) {
  TrainConfig cfg = small_train_config();
  cfg.max_epochs = 1;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);
  test::TempDir dir("ckpt_bad");
  std::string path = dir.str("model.ckpt");
  save_checkpoint(path, out.model_cfg, &out.params, out.vocab, out.adam, 1,
                  cfg.config_hash());
  std::string bytes = test::read_file(path);

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream os(dir.str("magic.ckpt"), std::ios::binary);
    os << bad;
    os.close();
    EXPECT_THROW(load_checkpoint(dir.str("magic.ckpt")), Error);
  }
  {
    std::string bad = bytes;
    bad[4] = 0x7f;  // version word
    std::ofstream os(dir.str("version.ckpt"), std::ios::binary);
    os << bad;
    os.close();
    EXPECT_THROW(load_checkpoint(dir.str("version.ckpt")), Error);
  }
  {
    std::ofstream os(dir.str("trunc.ckpt"), std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
    os.close();
    EXPECT_THROW(load_checkpoint(dir.str("trunc.ckpt")), Error);
  }
  EXPECT_THROW(load_checkpoint(dir.str("absent.ckpt")), Error);
}

TEST(MetricsTraceTest, WritesOneJsonObjectPerEpoch) {
  std::vector<EpochMetrics> metrics(2);
  metrics[0] = {1, 2.5, 1.25, 1.5, -1.0};
  metrics[1] = {2, 2.0, 1.0, 1.2, 0.75};
  test::TempDir dir("trace");
  std::string path = dir.str("metrics.jsonl");
  save_metrics_trace(metrics, path);

  std::ifstream is(path);
  std::string line;
  std::vector<Json> rows;
  while (std::getline(is, line)) rows.push_back(Json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["epoch"].get<int>(), 1);
  EXPECT_EQ(rows[0]["l_asr"].get<std::string>(), "2.5");
  EXPECT_EQ(rows[0]["heldout_wa"].get<std::string>(), "na");
  EXPECT_EQ(rows[1]["heldout_wa"].get<std::string>(), "0.750000");
  EXPECT_EQ(rows[1]["total"].get<std::string>(), "1.2");
}

TEST(EvaluateTest, RejectsEmptySet) {
  TrainConfig cfg = small_train_config();
  cfg.max_epochs = 1;
  TrainOutput out = train_model(corpus().records, nullptr, cfg);
  EXPECT_THROW(evaluate_model(out.params, out.model_cfg, {}), Error);
}

}  // namespace
}  // namespace serfuse
