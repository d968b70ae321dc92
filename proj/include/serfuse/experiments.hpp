// serfuse/experiments.hpp

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

#include "serfuse/folds.hpp"
#include "serfuse/train.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace serfuse {

struct FoldOutcome {
  std::string session;
  double wa = 0.0;
  double ua = 0.0;
  int test_size = 0;
  int correct = 0;
  std::vector<std::string> test_ids;
  std::set<std::string> trained_ids;
};

struct ExperimentResult {
  std::string model_label;
  std::string features_label;
  std::string fusion_label;
  uint64_t seed = 0;
  std::vector<FoldOutcome> folds;
  double mean_wa = 0.0;
  double mean_ua = 0.0;
  double pooled_wa = 0.0;  // total correct over total predictions
};

// Session-based cross-validation: train on all but one session, test on the
// held-out session, aggregate. Training never sees a held-out id; that is
// asserted here against the id tracking from the training loop.
inline ExperimentResult run_cv(const std::vector<UtteranceRecord>& records,
                               const TrainConfig& cfg) {
  FoldPlan plan = make_folds(records, cfg.expected_sessions);
  ExperimentResult result;
  result.seed = cfg.seed;
  long total = 0, total_correct = 0;
  for (size_t f = 0; f < plan.n_folds(); ++f) {
    const std::string& session = plan.fold_sessions[f];
    std::vector<UtteranceRecord> train, test;
    for (const auto& r : records)
      (r.session_id == session ? test : train).push_back(r);
    TrainOutput out = train_model(train, &test, cfg);
    EvalResult eval = evaluate_model(out.params, out.model_cfg, test);

    FoldOutcome fold;
    fold.session = session;
    fold.test_ids = eval.ids;
    fold.trained_ids = out.trained_ids;
    for (const auto& id : eval.ids) {
      if (out.trained_ids.count(id))
        throw Error("fold hygiene violation: " + id + " was trained on");
    }
    fold.wa = eval.wa;
    fold.ua = eval.ua;
    fold.test_size = static_cast<int>(eval.ids.size());
    for (size_t i = 0; i < eval.preds.size(); ++i)
      if (eval.preds[i] == eval.labels[i]) ++fold.correct;
    total += fold.test_size;
    total_correct += fold.correct;
    result.folds.push_back(std::move(fold));
  }
  for (const auto& f : result.folds) {
    result.mean_wa += f.wa;
    result.mean_ua += f.ua;
  }
  result.mean_wa /= static_cast<double>(result.folds.size());
  result.mean_ua /= static_cast<double>(result.folds.size());
  result.pooled_wa = static_cast<double>(total_correct) / static_cast<double>(total);
  return result;
}

struct ExperimentRow {
  std::string model_label;
  std::string features_label;
  std::string fusion_label;
  bool ran = false;
  std::string skip_reason;
  std::optional<ExperimentResult> result;
};

inline std::string hidden_variant_label(const std::string& stream) {
  if (stream == kStreamHiddenFirst) return "first layer";
  if (stream == kStreamHiddenMiddle) return "middle layer";
  if (stream == kStreamHiddenFinal) return "final layer";
  return stream;
}

namespace detail {

inline std::string missing_stream(const std::vector<UtteranceRecord>& records,
                                  const TrainConfig& cfg,
                                  const std::vector<std::string>& roles) {
  for (const auto& role : roles) {
    std::string source = (role == kRoleMfcc)     ? std::string(kStreamMfcc)
                         : (role == kRoleHidden) ? cfg.hidden_stream
                                                 : std::string(kStreamText);
    if (records.empty() || records[0].features.find(source) == records[0].features.end())
      return source;
  }
  return "";
}

// One experiment row. With repeats > 1 the same configuration is re-run under
// seed, seed+1, ... and the fold lists concatenate, so the means average over
// initializations as well as folds.
inline ExperimentRow run_row(const std::vector<UtteranceRecord>& records,
                             const TrainConfig& base, const std::string& model,
                             const std::string& features, const std::string& fusion,
                             const std::string& strategy,
                             const std::vector<std::string>& roles, int repeats) {
  ExperimentRow row;
  row.model_label = model;
  row.features_label = features;
  row.fusion_label = fusion;
  std::string missing = missing_stream(records, base, roles);
  if (!missing.empty()) {
    row.skip_reason = "stream " + missing + " not present in the corpus";
    return row;
  }
  TrainConfig cfg = base;
  cfg.fusion = strategy;
  cfg.stream_roles = roles;
  ExperimentResult merged;
  merged.seed = base.seed;
  long total = 0, correct = 0;
  for (int r = 0; r < repeats; ++r) {
    cfg.seed = base.seed + static_cast<uint64_t>(r);
    ExperimentResult one = run_cv(records, cfg);
    for (auto& f : one.folds) {
      total += f.test_size;
      correct += f.correct;
      merged.folds.push_back(std::move(f));
    }
  }
  for (const auto& f : merged.folds) {
    merged.mean_wa += f.wa;
    merged.mean_ua += f.ua;
  }
  merged.mean_wa /= static_cast<double>(merged.folds.size());
  merged.mean_ua /= static_cast<double>(merged.folds.size());
  merged.pooled_wa = static_cast<double>(correct) / static_cast<double>(total);
  merged.model_label = model;
  merged.features_label = features;
  merged.fusion_label = fusion;
  row.ran = true;
  row.result = std::move(merged);
  return row;
}

}  // namespace detail

// The fusion-method comparison: single-stream baselines, then each
// multi-stream configuration under every applicable fusion strategy. One base
// seed is shared across rows so differences reflect configuration.
inline std::vector<ExperimentRow> compare_fusions(
    const std::vector<UtteranceRecord>& records, const TrainConfig& base,
    int repeats = 1) {
  const std::string hv = hidden_variant_label(base.hidden_stream);
  const std::string acoustic_hidden = "Acoustic + Hidden output (" + hv + ")";
  const std::string all3 = "Acoustic + Hidden output (" + hv + ") + Text output";
  std::vector<ExperimentRow> rows;
  auto add = [&](const std::string& model, const std::string& features,
                 const std::string& fusion, const std::string& strategy,
                 const std::vector<std::string>& roles) {
    rows.push_back(
        detail::run_row(records, base, model, features, fusion, strategy, roles,
                        repeats));
  };
  add("SER", "Acoustic", "-", "single", {"mfcc"});
  add("ASR-SER", "Text output", "-", "single", {"text"});
  add("ASR-SER", acoustic_hidden, "Concatenation", "concat", {"mfcc", "hidden"});
  add("ASR-SER", acoustic_hidden, "Co-attention", "coattention", {"mfcc", "hidden"});
  add("ASR-SER", "Acoustic + Text output", "Concatenation", "concat",
      {"mfcc", "text"});
  add("ASR-SER", "Acoustic + Text output", "Co-attention", "coattention",
      {"mfcc", "text"});
  add("ASR-SER", all3, "Concatenation", "concat", {"mfcc", "hidden", "text"});
  add("ASR-SER", all3, "Co-attention", "coattention", {"mfcc", "hidden", "text"});
  add("ASR-SER", all3, "Hierarchical co-attention", "hierarchical",
      {"mfcc", "hidden", "text"});
  return rows;
}

struct LayerSweepResult {
  std::vector<ExperimentRow> rows;
  std::string best_hidden_stream;  // empty when no hidden row ran
};

// The layer-difference sweep: single-feature models over each hidden-layer
// variant plus the acoustic and text baselines; the hidden variant with the
// highest mean WA is selected.
inline LayerSweepResult layer_sweep(const std::vector<UtteranceRecord>& records,
                                    const TrainConfig& base, int repeats = 1) {
  LayerSweepResult sweep;
  auto single = [&](const std::string& model, const std::string& features,
                    const std::string& role, const std::string& hidden_stream) {
    TrainConfig cfg = base;
    if (!hidden_stream.empty()) cfg.hidden_stream = hidden_stream;
    return detail::run_row(records, cfg, model, features, "-", "single", {role},
                           repeats);
  };
  sweep.rows.push_back(single("SER", "Acoustic", "mfcc", ""));
  double best_wa = -1.0;
  for (const auto& stream :
       {kStreamHiddenFirst, kStreamHiddenMiddle, kStreamHiddenFinal}) {
    ExperimentRow row = single(
        "ASR-SER", "Hidden output (" + hidden_variant_label(stream) + ")",
        "hidden", stream);
    if (row.ran && row.result->mean_wa > best_wa) {
      best_wa = row.result->mean_wa;
      sweep.best_hidden_stream = stream;
    }
    sweep.rows.push_back(std::move(row));
  }
  sweep.rows.push_back(single("ASR-SER", "Text output", "text", ""));
  return sweep;
}

// ---------------------------------------------------------------------------
// Report emission. Two formats: "text" (aligned table) and "json"
// (machine-readable); both byte-stable for a fixed result.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pad(const std::string& s, size_t w) {
  return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
}

inline std::string format_rows_text(const std::vector<ExperimentRow>& rows,
                                    const std::string& title,
                                    const std::string& features_header) {
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"Model", features_header, "Fusion", "WA", "UA"});
  std::vector<std::string> notes;
  for (const auto& r : rows) {
    std::array<std::string, 5> c;
    c[0] = r.model_label;
    c[1] = r.features_label;
    c[2] = r.fusion_label;
    if (r.ran) {
      c[3] = strprintf("%.1f%%", 100.0 * r.result->mean_wa);
      c[4] = strprintf("%.1f%%", 100.0 * r.result->mean_ua);
      notes.push_back("");
    } else {
      c[3] = "-";
      c[4] = "-";
      notes.push_back("  (skipped: " + r.skip_reason + ")");
    }
    cells.push_back(c);
  }
  std::array<size_t, 5> width{};
  for (const auto& c : cells)
    for (int i = 0; i < 5; ++i) width[i] = std::max(width[i], c[i].size());
  std::string out = title + "\n";
  for (size_t row = 0; row < cells.size(); ++row) {
    std::string line;
    for (int i = 0; i < 5; ++i) {
      if (i) line += "  ";
      line += pad(cells[row][i], width[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    if (row > 0) line += notes[row - 1];
    out += line + "\n";
    if (row == 0) {
      size_t total = 0;
      for (int i = 0; i < 5; ++i) total += width[i] + (i ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

inline Json rows_to_json(const std::vector<ExperimentRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["model"] = r.model_label;
    j["features"] = r.features_label;
    j["fusion"] = r.fusion_label;
    j["ran"] = r.ran;
    if (!r.ran) {
      j["skip_reason"] = r.skip_reason;
    } else {
      j["seed"] = r.result->seed;
      j["mean_wa"] = strprintf("%.6f", r.result->mean_wa);
      j["mean_ua"] = strprintf("%.6f", r.result->mean_ua);
      j["pooled_wa"] = strprintf("%.6f", r.result->pooled_wa);
      Json folds = Json::array();
      for (const auto& f : r.result->folds)
        folds.push_back({{"session", f.session},
                         {"wa", strprintf("%.6f", f.wa)},
                         {"ua", strprintf("%.6f", f.ua)},
                         {"test_size", f.test_size}});
      j["folds"] = folds;
    }
    arr.push_back(j);
  }
  return arr;
}

}  // namespace detail

inline std::string emit_fusion_report(const std::vector<ExperimentRow>& rows,
                                      const std::string& format) {
  if (format == "text")
    return detail::format_rows_text(rows, "Fusion comparison (mean over folds)",
                                    "Features");
  if (format == "json") return detail::rows_to_json(rows).dump(2) + "\n";
  throw Error("emit_report: unknown format " + format);
}

inline std::string emit_layer_report(const LayerSweepResult& sweep,
                                     const std::string& format) {
  if (format == "text") {
    std::string out = detail::format_rows_text(
        sweep.rows, "Layer-difference sweep (mean over folds)", "ASR output");
    out += sweep.best_hidden_stream.empty()
               ? "Selected hidden stream: none\n"
               : "Selected hidden stream: " + sweep.best_hidden_stream + " (" +
                     hidden_variant_label(sweep.best_hidden_stream) +
                     ", highest WA)\n";
    return out;
  }
  if (format == "json") {
    Json j;
    j["rows"] = detail::rows_to_json(sweep.rows);
    j["best_hidden_stream"] = sweep.best_hidden_stream;
    return j.dump(2) + "\n";
  }
  throw Error("emit_report: unknown format " + format);
}

// Provenance manifest for a run directory: what was run, on what data.
inline uint64_t hash_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("hash_file_bytes: cannot open " + path);
  char buf[4096];
  uint64_t h = 14695981039346656037ull;
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

inline void write_run_manifest(const std::string& run_dir, const TrainConfig& cfg,
                               const std::string& dataset_manifest_path) {
  Json j;
  j["config_hash"] = strprintf("%016llx",
                               static_cast<unsigned long long>(cfg.config_hash()));
  j["seed"] = cfg.seed;
  j["dataset_hash"] = strprintf(
      "%016llx",
      static_cast<unsigned long long>(hash_file_bytes(dataset_manifest_path)));
  j["config"] = cfg.to_json();
  std::filesystem::create_directories(run_dir);
  std::string path = (std::filesystem::path(run_dir) / "run_manifest.json").string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("write_run_manifest: cannot open " + path);
  os << j.dump(2) << "\n";
}

}  // namespace serfuse
