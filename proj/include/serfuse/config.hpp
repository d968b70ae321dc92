// serfuse/config.hpp

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
#include "serfuse/model.hpp"
#include "serfuse/synth.hpp"
#include "serfuse/types.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace serfuse {

using Json = nlohmann::json;

// Flat key-value training configuration. Files hold it as a JSON object;
// command-line overrides address the same keys with string values.
struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  double clip_threshold = 5.0;
  int batch_size = 20;
  int max_epochs = 100;
  double lambda = 0.2;
  double dropout_p = 0.5;
  uint64_t seed = 1234;
  std::string fusion = "hierarchical";
  std::vector<std::string> stream_roles = {"mfcc", "hidden", "text"};
  std::string hidden_stream = kStreamHiddenMiddle;
  int expected_sessions = 5;

  void validate() const {
    if (learning_rate <= 0) throw Error("TrainConfig: learning_rate must be > 0");
    if (weight_decay < 0) throw Error("TrainConfig: weight_decay must be >= 0");
    if (clip_threshold <= 0) throw Error("TrainConfig: clip_threshold must be > 0");
    if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
    if (max_epochs < 1) throw Error("TrainConfig: max_epochs must be >= 1");
    if (!(lambda >= 0 && lambda <= 1)) throw Error("TrainConfig: lambda must be in [0,1]");
    if (!(dropout_p >= 0 && dropout_p < 1))
      throw Error("TrainConfig: dropout_p must be in [0,1)");
    if (expected_sessions < 2)
      throw Error("TrainConfig: expected_sessions must be >= 2");
    fusion_strategy_from_name(fusion);
    if (stream_roles.empty()) throw Error("TrainConfig: no stream roles");
    static const std::vector<std::string> kOrder = {kRoleMfcc, kRoleHidden, kRoleText};
    size_t at = 0;
    for (const auto& r : stream_roles) {
      auto it = std::find(kOrder.begin() + at, kOrder.end(), r);
      if (it == kOrder.end())
        throw Error("TrainConfig: bad or out-of-order stream role " + r);
      at = static_cast<size_t>(it - kOrder.begin()) + 1;
    }
    if (hidden_stream != kStreamHiddenFirst && hidden_stream != kStreamHiddenMiddle &&
        hidden_stream != kStreamHiddenFinal)
      throw Error("TrainConfig: unknown hidden_stream " + hidden_stream);
  }

  Json to_json() const {
    Json j;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["clip_threshold"] = clip_threshold;
    j["batch_size"] = batch_size;
    j["max_epochs"] = max_epochs;
    j["lambda"] = lambda;
    j["dropout_p"] = dropout_p;
    j["seed"] = seed;
    j["fusion"] = fusion;
    j["streams"] = join_tokens(stream_roles, ",");
    j["hidden_stream"] = hidden_stream;
    j["expected_sessions"] = expected_sessions;
    return j;
  }

  void apply_json(const Json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const Json& v = it.value();
      if (k == "learning_rate") learning_rate = v.get<double>();
      else if (k == "weight_decay") weight_decay = v.get<double>();
      else if (k == "clip_threshold") clip_threshold = v.get<double>();
      else if (k == "batch_size") batch_size = v.get<int>();
      else if (k == "max_epochs") max_epochs = v.get<int>();
      else if (k == "lambda") lambda = v.get<double>();
      else if (k == "dropout_p") dropout_p = v.get<double>();
      else if (k == "seed") seed = v.get<uint64_t>();
      else if (k == "fusion") fusion = v.get<std::string>();
      else if (k == "streams")
        stream_roles = split_tokens(v.get<std::string>(), ',');
      else if (k == "hidden_stream") hidden_stream = v.get<std::string>();
      else if (k == "expected_sessions") expected_sessions = v.get<int>();
      else throw Error("TrainConfig: unknown key " + k);
    }
  }

  // String override from the command line; numeric keys are parsed.
  void apply_override(const std::string& key, const std::string& value) {
    Json j;
    if (key == "fusion" || key == "streams" || key == "hidden_stream") {
      j[key] = value;
    } else if (key == "batch_size" || key == "max_epochs" ||
               key == "expected_sessions") {
      j[key] = std::stoi(value);
    } else if (key == "seed") {
      j[key] = static_cast<uint64_t>(std::stoull(value));
    } else {
      j[key] = std::stod(value);
    }
    apply_json(j);
  }

  std::string canonical_string() const { return to_json().dump(); }

  uint64_t config_hash() const {
    std::string s = canonical_string();
    return fnv1a64(s.data(), s.size());
  }

  static std::vector<std::string> split_tokens(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }
};

inline Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config file: " + path);
  Json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw Error("config parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config file must hold a JSON object: " + path);
  return j;
}

inline TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg;
  cfg.apply_json(load_json_file(path));
  return cfg;
}

// Number-or-object forms are accepted for the per-stream scales; arrays or a
// single value for the per-class fields.
inline void apply_synth_json(const Json& j, SynthConfig* cfg) {
  auto per_stream = [](const Json& v, std::map<std::string, double>* out) {
    if (v.is_number()) {
      for (auto& kv : *out) kv.second = v.get<double>();
    } else if (v.is_object()) {
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (out->find(it.key()) == out->end())
          throw Error("SynthConfig: unknown stream " + it.key());
        (*out)[it.key()] = it.value().get<double>();
      }
    } else {
      throw Error("SynthConfig: expected number or per-stream object");
    }
  };
  auto per_class_d = [](const Json& v, std::array<double, kNumEmotions>* out) {
    if (v.is_number()) {
      out->fill(v.get<double>());
    } else {
      if (!v.is_array() || v.size() != kNumEmotions)
        throw Error("SynthConfig: expected 4-element array");
      for (int i = 0; i < kNumEmotions; ++i) (*out)[i] = v[i].get<double>();
    }
  };
  auto per_class_i = [](const Json& v, std::array<int, kNumEmotions>* out) {
    if (v.is_number()) {
      out->fill(v.get<int>());
    } else {
      if (!v.is_array() || v.size() != kNumEmotions)
        throw Error("SynthConfig: expected 4-element array");
      for (int i = 0; i < kNumEmotions; ++i) (*out)[i] = v[i].get<int>();
    }
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const Json& v = it.value();
    if (k == "n_per_class") cfg->n_per_class = v.get<int>();
    else if (k == "vocab_size") cfg->vocab_size = v.get<int>();
    else if (k == "frames_per_token") cfg->frames_per_token = v.get<int>();
    else if (k == "d_mfcc") cfg->d_mfcc = v.get<int>();
    else if (k == "d_hidden") cfg->d_hidden = v.get<int>();
    else if (k == "d_text") cfg->d_text = v.get<int>();
    else if (k == "n_sessions") cfg->n_sessions = v.get<int>();
    else if (k == "seed") cfg->seed = v.get<uint64_t>();
    else if (k == "noise_stddev") per_stream(v, &cfg->noise_stddev);
    else if (k == "signal_strength") per_stream(v, &cfg->signal_strength);
    else if (k == "corruption_rate") per_class_d(v, &cfg->corruption_rate);
    else if (k == "len_min") per_class_i(v, &cfg->len_min);
    else if (k == "len_max") per_class_i(v, &cfg->len_max);
    else throw Error("SynthConfig: unknown key " + k);
  }
}

inline Json synth_config_to_json(const SynthConfig& cfg) {
  Json j;
  j["n_per_class"] = cfg.n_per_class;
  j["vocab_size"] = cfg.vocab_size;
  j["frames_per_token"] = cfg.frames_per_token;
  j["d_mfcc"] = cfg.d_mfcc;
  j["d_hidden"] = cfg.d_hidden;
  j["d_text"] = cfg.d_text;
  j["n_sessions"] = cfg.n_sessions;
  j["seed"] = cfg.seed;
  j["noise_stddev"] = cfg.noise_stddev;
  j["signal_strength"] = cfg.signal_strength;
  j["corruption_rate"] = cfg.corruption_rate;
  j["len_min"] = cfg.len_min;
  j["len_max"] = cfg.len_max;
  return j;
}

inline Json model_config_to_json(const ModelConfig& cfg) {
  Json j;
  j["strategy"] = fusion_strategy_name(cfg.strategy);
  Json streams = Json::array();
  for (const auto& s : cfg.streams)
    streams.push_back({{"role", s.role}, {"source", s.source}, {"dim", s.dim}});
  j["streams"] = streams;
  j["vocab_size"] = cfg.vocab_size;
  j["lambda"] = cfg.lambda;
  j["dropout_p"] = cfg.dropout_p;
  return j;
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.strategy = fusion_strategy_from_name(j.at("strategy").get<std::string>());
  cfg.streams.clear();
  for (const auto& s : j.at("streams")) {
    ModelStream ms;
    ms.role = s.at("role").get<std::string>();
    ms.source = s.at("source").get<std::string>();
    ms.dim = s.at("dim").get<int>();
    cfg.streams.push_back(ms);
  }
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  cfg.validate();
  return cfg;
}

}  // namespace serfuse
