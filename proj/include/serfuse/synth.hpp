// serfuse/synth.hpp

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
#include "serfuse/feature-matrix.hpp"
#include "serfuse/manifest.hpp"
#include "serfuse/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace serfuse {

// Seeded generator for a desk-scale corpus with a modality-split planted
// signal:
//   - mfcc carries an arousal-like component separating {ang,hap} from
//     {neu,sad} along a planted direction;
//   - the hidden-layer variants and the text stream carry a valence-like
//     component separating {hap,neu} from {ang,sad};
// so no single stream supports 4-way classification, while any
// acoustic+linguistic fusion does. Hidden and text streams additionally carry
// per-token embeddings (orthogonal to the planted directions), which makes
// the reference transcript decodable from the hidden stream. Hypothesis
// transcripts are the references with i.i.d. per-token substitutions at a
// per-class rate.

struct SynthConfig {
  int n_per_class = 200;
  int vocab_size = 8;        // tokens excluding blank
  int frames_per_token = 3;  // hidden/mfcc frames per transcript token
  int d_mfcc = 40;
  int d_hidden = 64;
  int d_text = 32;
  int n_sessions = 5;
  // Per-stream noise and planted-signal scales, keyed by stream name.
  std::map<std::string, double> noise_stddev = {
      {kStreamMfcc, 0.5},        {kStreamHiddenFirst, 0.5},
      {kStreamHiddenMiddle, 0.5}, {kStreamHiddenFinal, 0.5},
      {kStreamText, 0.5}};
  std::map<std::string, double> signal_strength = {
      {kStreamMfcc, 1.0},        {kStreamHiddenFirst, 0.6},
      {kStreamHiddenMiddle, 1.0}, {kStreamHiddenFinal, 0.25},
      {kStreamText, 1.0}};
  // Per-class token substitution rates, indexed by Emotion order.
  std::array<double, kNumEmotions> corruption_rate = {0.228, 0.389, 0.363, 0.295};
  // Per-class transcript length ranges (inclusive), indexed by Emotion order.
  std::array<int, kNumEmotions> len_min = {4, 4, 4, 4};
  std::array<int, kNumEmotions> len_max = {12, 12, 12, 12};
  uint64_t seed = 1234;

  void validate() const {
    if (n_per_class < 1) throw Error("SynthConfig: n_per_class must be >= 1");
    if (vocab_size < 2) throw Error("SynthConfig: vocab_size must be >= 2");
    if (frames_per_token < 1)
      throw Error("SynthConfig: frames_per_token must be >= 1");
    if (d_mfcc < 1 || d_hidden < 1 || d_text < 1)
      throw Error("SynthConfig: feature dims must be >= 1");
    if (n_sessions < 1) throw Error("SynthConfig: n_sessions must be >= 1");
    for (const auto& s : known_streams()) {
      if (noise_stddev.find(s) == noise_stddev.end() ||
          signal_strength.find(s) == signal_strength.end())
        throw Error("SynthConfig: missing noise/signal entry for stream " + s);
      if (noise_stddev.at(s) < 0)
        throw Error("SynthConfig: noise_stddev must be >= 0");
    }
    for (int c = 0; c < kNumEmotions; ++c) {
      if (corruption_rate[c] < 0.0 || corruption_rate[c] > 1.0)
        throw Error("SynthConfig: corruption rates must be in [0,1]");
      if (len_min[c] < 1 || len_min[c] > len_max[c])
        throw Error("SynthConfig: need 1 <= len_min <= len_max");
    }
  }

  int stream_dim(const std::string& stream) const {
    if (stream == kStreamMfcc) return d_mfcc;
    if (stream == kStreamText) return d_text;
    return d_hidden;
  }
};

// +1 for {ang,hap}, -1 for {neu,sad}.
inline double arousal_code(Emotion e) {
  return (e == Emotion::kAng || e == Emotion::kHap) ? 1.0 : -1.0;
}

// +1 for {hap,neu}, -1 for {ang,sad}.
inline double valence_code(Emotion e) {
  return (e == Emotion::kHap || e == Emotion::kNeu) ? 1.0 : -1.0;
}

struct SynthStreamTruth {
  Vec arousal_dir;       // planted unit direction 1
  Vec valence_dir;       // planted unit direction 2, orthogonal to 1
  Mat token_embeddings;  // V x D, each row orthogonal to both directions; 0x0 if unused
};

struct SynthGroundTruth {
  std::map<std::string, SynthStreamTruth> streams;
  std::vector<std::string> vocab;
};

struct SynthResult {
  std::vector<UtteranceRecord> records;  // feature paths resolved to out_dir
  SynthGroundTruth truth;
  std::string manifest_path;
};

namespace detail {

inline Vec random_unit(int dim, Rng* rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gauss(*rng);
  double n = v.norm();
  if (n < 1e-12) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / n;
}

// Draws (u1, u2) orthonormal. In one dimension u2 degenerates to zero.
inline std::pair<Vec, Vec> random_orthonormal_pair(int dim, Rng* rng) {
  Vec u1 = random_unit(dim, rng);
  Vec raw = random_unit(dim, rng);
  Vec u2 = raw - u1.dot(raw) * u1;
  double n = u2.norm();
  if (n < 1e-8) {
    u2.setZero();
    if (dim > 1) {
      // Deterministic fallback: complete with a basis vector.
      int idx = 0;
      u1.cwiseAbs().minCoeff(&idx);
      u2(idx) = 1.0;
      u2 -= u1.dot(u2) * u1;
      u2.normalize();
    }
  } else {
    u2 /= n;
  }
  return {u1, u2};
}

}  // namespace detail

// Generates the corpus under out_dir: a "manifest" file plus
// features/<utterance_id>.<stream>.fmx payloads. The whole corpus is a pure
// function of the config (two runs with one seed are byte-identical).
inline SynthResult synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "features");

  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthResult result;
  for (int t = 0; t < cfg.vocab_size; ++t)
    result.truth.vocab.push_back("t" + std::to_string(t));

  // Planted directions and token embeddings, drawn once in fixed stream order.
  for (const auto& stream : known_streams()) {
    SynthStreamTruth truth;
    int dim = cfg.stream_dim(stream);
    auto [u1, u2] = detail::random_orthonormal_pair(dim, &rng);
    truth.arousal_dir = u1;
    truth.valence_dir = u2;
    if (stream != kStreamMfcc) {
      Mat emb(cfg.vocab_size, dim);
      double scale = 1.0 / std::sqrt(static_cast<double>(dim));
      for (int v = 0; v < cfg.vocab_size; ++v)
        for (int d = 0; d < dim; ++d) emb(v, d) = scale * gauss(rng);
      // Keep the planted directions free of token content.
      for (int v = 0; v < cfg.vocab_size; ++v) {
        Vec row = emb.row(v).transpose();
        row -= u1.dot(row) * u1;
        row -= u2.dot(row) * u2;
        emb.row(v) = row.transpose();
      }
      truth.token_embeddings = emb;
    }
    result.truth.streams[stream] = truth;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Emotion emotion : all_emotions()) {
    const int cls = static_cast<int>(emotion);
    std::uniform_int_distribution<int> len_dist(cfg.len_min[cls], cfg.len_max[cls]);
    std::uniform_int_distribution<int> tok_dist(0, cfg.vocab_size - 1);
    for (int i = 0; i < cfg.n_per_class; ++i) {
      UtteranceRecord rec;
      rec.utterance_id = strprintf("%s_%04d", emotion_name(emotion), i);
      int sess = i % cfg.n_sessions;
      rec.session_id = "S" + std::to_string(sess + 1);
      rec.speaker_id = rec.session_id + ((i / cfg.n_sessions) % 2 == 0 ? "-A" : "-B");
      rec.emotion = emotion;

      const int len = len_dist(rng);
      std::vector<int> tokens(len);
      for (int j = 0; j < len; ++j) tokens[j] = tok_dist(rng);
      for (int j = 0; j < len; ++j)
        rec.ref_transcript.push_back(result.truth.vocab[tokens[j]]);

      // Hypothesis: i.i.d. substitution with a different token.
      std::vector<std::string> hyp;
      std::uniform_int_distribution<int> other_dist(0, cfg.vocab_size - 2);
      for (int j = 0; j < len; ++j) {
        if (unit(rng) < cfg.corruption_rate[cls]) {
          int alt = other_dist(rng);
          if (alt >= tokens[j]) ++alt;
          hyp.push_back(result.truth.vocab[alt]);
        } else {
          hyp.push_back(result.truth.vocab[tokens[j]]);
        }
      }
      rec.hyp_transcript = std::move(hyp);

      for (const auto& stream : known_streams()) {
        const SynthStreamTruth& truth = result.truth.streams.at(stream);
        const int dim = cfg.stream_dim(stream);
        const double noise = cfg.noise_stddev.at(stream);
        const double strength = cfg.signal_strength.at(stream);
        Vec signal = (stream == kStreamMfcc)
                         ? Vec(strength * arousal_code(emotion) * truth.arousal_dir)
                         : Vec(strength * valence_code(emotion) * truth.valence_dir);
        const int frames =
            (stream == kStreamText) ? len : len * cfg.frames_per_token;
        Mat m(frames, dim);
        for (int f = 0; f < frames; ++f) {
          Vec row = signal;
          if (stream != kStreamMfcc) {
            int tok = (stream == kStreamText) ? tokens[f]
                                              : tokens[f / cfg.frames_per_token];
            row += truth.token_embeddings.row(tok).transpose();
          }
          m.row(f) = row.transpose();
          if (noise > 0) {
            for (int d = 0; d < dim; ++d) m(f, d) += noise * gauss(rng);
          }
        }
        fs::path fpath = fs::path(out_dir) / "features" /
                         (rec.utterance_id + "." + stream + ".fmx");
        write_feature_matrix(FeatureMatrix::from_mat(m), fpath.string());
        rec.features[stream] = fpath.string();
      }
      result.records.push_back(std::move(rec));
    }
  }

  result.manifest_path = (fs::path(out_dir) / "manifest").string();
  save_manifest(result.records, result.manifest_path);
  return result;
}

}  // namespace serfuse
