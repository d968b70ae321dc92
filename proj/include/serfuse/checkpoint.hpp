// serfuse/checkpoint.hpp

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
#include "serfuse/model.hpp"
#include "serfuse/optim.hpp"

#include <fstream>
#include <map>
#include <string>

namespace serfuse {

// Versioned binary container:
//   magic "CKPT", version u32, model-config JSON (length-prefixed),
//   train-config hash u64, epoch u32, vocab (count + tokens),
//   named parameter blobs, Adam step + named moment pairs.
// Parameter blobs use the FMX1 header layout with a float64 payload (magic
// "FMX8") so a save/load round trip restores forward outputs bit-exactly;
// float32 storage could not represent the trained weights losslessly.
inline constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;
inline constexpr char kFmx8Magic[4] = {'F', 'M', 'X', '8'};

struct CheckpointData {
  ModelConfig model_cfg;
  ModelParams params;
  Vocab vocab;
  AdamState adam;
  uint32_t epoch = 0;
  uint64_t config_hash = 0;
};

namespace detail {

// Row-major float64 payload behind a tensor name, mirroring the FMX1 layout.
inline void write_fmx8(std::ostream& os, const TensorRef& t) {
  os.write(kFmx8Magic, 4);
  write_u32le(os, static_cast<uint32_t>(t.rows));
  write_u32le(os, static_cast<uint32_t>(t.cols));
  for (Eigen::Index r = 0; r < t.rows; ++r)
    for (Eigen::Index c = 0; c < t.cols; ++c)
      write_f64le(os, t.data[c * t.rows + r]);
}

inline void read_fmx8_into(std::istream& is, const TensorRef& t,
                           const std::string& what) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFmx8Magic, 4) != 0)
    throw Error("checkpoint: bad tensor magic for " + what);
  uint32_t rows = read_u32le(is, what + " rows");
  uint32_t cols = read_u32le(is, what + " cols");
  if (rows != static_cast<uint32_t>(t.rows) || cols != static_cast<uint32_t>(t.cols))
    throw Error(strprintf("checkpoint: %s has shape %ux%u, expected %ldx%ld",
                          what.c_str(), rows, cols, static_cast<long>(t.rows),
                          static_cast<long>(t.cols)));
  for (Eigen::Index r = 0; r < t.rows; ++r)
    for (Eigen::Index c = 0; c < t.cols; ++c)
      t.data[c * t.rows + r] = read_f64le(is, what + " payload");
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& mcfg,
                            ModelParams* params, const Vocab& vocab,
                            const AdamState& adam, uint32_t epoch,
                            uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("save_checkpoint: cannot open " + path);
  os.write(kCkptMagic, 4);
  write_u32le(os, kCkptVersion);
  write_lp_string(os, model_config_to_json(mcfg).dump());
  write_u64le(os, config_hash);
  write_u32le(os, epoch);
  write_u32le(os, static_cast<uint32_t>(vocab.tokens.size()));
  for (const auto& t : vocab.tokens) write_lp_string(os, t);

  auto tensors = collect_tensors(params, mcfg);
  write_u32le(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_lp_string(os, t.name);
    detail::write_fmx8(os, t);
  }

  write_u64le(os, adam.step);
  write_u32le(os, static_cast<uint32_t>(adam.moments.size()));
  for (const auto& [name, mv] : adam.moments) {
    write_lp_string(os, name);
    write_u64le(os, static_cast<uint64_t>(mv.first.size()));
    for (Eigen::Index i = 0; i < mv.first.size(); ++i)
      write_f64le(os, mv.first(i));
    for (Eigen::Index i = 0; i < mv.second.size(); ++i)
      write_f64le(os, mv.second(i));
  }
  os.flush();
  if (!os) throw Error("save_checkpoint: write failed for " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw Error("load_checkpoint: bad magic in " + path);
  uint32_t version = read_u32le(is, "checkpoint version");
  if (version != kCkptVersion)
    throw Error(strprintf("load_checkpoint: unsupported version %u", version));

  CheckpointData out;
  std::string cfg_json = read_lp_string(is, "model config");
  out.model_cfg = model_config_from_json(Json::parse(cfg_json));
  out.config_hash = read_u64le(is, "config hash");
  out.epoch = read_u32le(is, "epoch");
  uint32_t n_vocab = read_u32le(is, "vocab size");
  for (uint32_t i = 0; i < n_vocab; ++i)
    out.vocab.tokens.push_back(read_lp_string(is, "vocab token"));

  // Shapes come from the config; every stored blob must land on a tensor and
  // every tensor must be filled.
  Rng shape_rng(0);
  out.params = ModelParams::init(out.model_cfg, &shape_rng);
  auto tensors = collect_tensors(&out.params, out.model_cfg);
  std::map<std::string, const TensorRef*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;

  uint32_t n_tensors = read_u32le(is, "tensor count");
  if (n_tensors != tensors.size())
    throw Error(strprintf("load_checkpoint: %u tensors stored, model has %zu",
                          n_tensors, tensors.size()));
  std::set<std::string> seen;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_lp_string(is, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw Error("load_checkpoint: unknown tensor " + name);
    if (!seen.insert(name).second)
      throw Error("load_checkpoint: duplicate tensor " + name);
    detail::read_fmx8_into(is, *it->second, name);
  }

  out.adam.step = read_u64le(is, "adam step");
  uint32_t n_moments = read_u32le(is, "moment count");
  for (uint32_t i = 0; i < n_moments; ++i) {
    std::string name = read_lp_string(is, "moment name");
    uint64_t sz = read_u64le(is, "moment size");
    Vec m(static_cast<Eigen::Index>(sz)), v(static_cast<Eigen::Index>(sz));
    for (uint64_t k = 0; k < sz; ++k)
      m(static_cast<Eigen::Index>(k)) = read_f64le(is, "moment payload");
    for (uint64_t k = 0; k < sz; ++k)
      v(static_cast<Eigen::Index>(k)) = read_f64le(is, "moment payload");
    out.adam.moments[name] = {std::move(m), std::move(v)};
  }
  return out;
}

}  // namespace serfuse
