// serfuse/optim.hpp

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

#include "serfuse/model.hpp"
#include "serfuse/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace serfuse {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled
};

// First and second moments stored flat, keyed by tensor name; created lazily
// at zero on first use so the state serializes independently of topology.
struct AdamState {
  uint64_t step = 0;
  std::map<std::string, std::pair<Vec, Vec>> moments;
};

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;

// Global-norm clipping over a whole tensor list. Returns the pre-clip norm.
inline double clip_gradients(const std::vector<TensorRef>& grads,
                             double threshold) {
  double sq = 0.0;
  for (const auto& g : grads) {
    ArrayMap a(g.data, g.size());
    double part = (a * a).sum();
    if (!std::isfinite(part))
      throw Error("training diverged: non-finite gradient in " + g.name);
    sq += part;
  }
  double norm = std::sqrt(sq);
  if (norm > threshold && norm > 0) {
    double scale = threshold / norm;
    for (const auto& g : grads) {
      ArrayMap a(g.data, g.size());
      a *= scale;
    }
  }
  return norm;
}

inline bool has_frozen_prefix(const std::string& name,
                              const std::vector<std::string>& frozen_prefixes) {
  for (const auto& p : frozen_prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

// One Adam step with decoupled weight decay over paired parameter/gradient
// listings. Tensors under a frozen prefix are left untouched entirely (no
// moment update, no decay), so their bytes cannot drift.
inline void adam_step(const std::vector<TensorRef>& params,
                      const std::vector<TensorRef>& grads, AdamState* state,
                      const AdamConfig& cfg,
                      const std::vector<std::string>& frozen_prefixes = {}) {
  if (params.size() != grads.size())
    throw Error("adam_step: parameter/gradient listing mismatch");
  state->step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state->step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state->step));
  for (size_t i = 0; i < params.size(); ++i) {
    const TensorRef& p = params[i];
    const TensorRef& g = grads[i];
    if (p.name != g.name || p.size() != g.size())
      throw Error("adam_step: tensor mismatch at " + p.name);
    if (has_frozen_prefix(p.name, frozen_prefixes)) continue;
    auto& slot = state->moments[p.name];
    if (slot.first.size() == 0) {
      slot.first = Vec::Zero(p.size());
      slot.second = Vec::Zero(p.size());
    } else if (slot.first.size() != p.size()) {
      throw Error("adam_step: stale optimizer state for " + p.name);
    }
    ArrayMap theta(p.data, p.size());
    ArrayMap grad(g.data, g.size());
    auto m = slot.first.array();
    auto v = slot.second.array();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
    theta -= cfg.learning_rate * ((m / bc1) / ((v / bc2).sqrt() + cfg.eps)) +
             cfg.learning_rate * cfg.weight_decay * theta;
  }
}

inline double clip_model_gradients(ModelGrads* g, const ModelConfig& cfg,
                                   double threshold) {
  auto refs = collect_tensors(g, cfg);
  return clip_gradients(refs, threshold);
}

inline void adam_step_model(ModelParams* p, ModelGrads* g, AdamState* state,
                            const AdamConfig& cfg, const ModelConfig& mcfg,
                            const std::vector<std::string>& frozen_prefixes = {}) {
  auto prefs = collect_tensors(p, mcfg);
  auto grefs = collect_tensors(g, mcfg);
  adam_step(prefs, grefs, state, cfg, frozen_prefixes);
}

}  // namespace serfuse
