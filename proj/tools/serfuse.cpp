// tools/serfuse.cpp

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

// Command-line front end: corpus synthesis, manifest validation, training,
// evaluation, cross-validation, the fusion comparison and layer sweep, and
// word-error-rate reports. Failures print one JSON object on stderr and exit
// nonzero.

#include "serfuse/checkpoint.hpp"
#include "serfuse/config.hpp"
#include "serfuse/experiments.hpp"
#include "serfuse/manifest.hpp"
#include "serfuse/synth.hpp"
#include "serfuse/train.hpp"
#include "serfuse/wer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using serfuse::Json;

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0)
    throw serfuse::Error("--set expects key=value, got \"" + s + "\"");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

serfuse::TrainConfig make_train_config(const std::string& config_path,
                                       const std::vector<std::string>& sets) {
  serfuse::TrainConfig cfg;
  if (!config_path.empty()) cfg.apply_json(serfuse::load_json_file(config_path));
  for (const auto& s : sets) {
    auto [k, v] = split_assignment(s);
    cfg.apply_override(k, v);
  }
  cfg.validate();
  return cfg;
}

serfuse::SynthConfig make_synth_config(const std::string& config_path,
                                       const std::vector<std::string>& sets) {
  serfuse::SynthConfig cfg;
  if (!config_path.empty())
    serfuse::apply_synth_json(serfuse::load_json_file(config_path), &cfg);
  for (const auto& s : sets) {
    auto [k, v] = split_assignment(s);
    Json parsed = Json::parse(v, nullptr, false);
    Json patch;
    patch[k] = parsed.is_discarded() ? Json(v) : parsed;
    serfuse::apply_synth_json(patch, &cfg);
  }
  cfg.validate();
  return cfg;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw serfuse::Error("cannot open output file: " + path);
  os << content;
  os.flush();
  if (!os) throw serfuse::Error("write failed: " + path);
}

std::string report_extension(const std::string& format) {
  return format == "json" ? ".json" : ".txt";
}

struct CommonArgs {
  std::string manifest;
  std::string out_dir;
  std::string config_path;
  std::vector<std::string> sets;
  std::string format = "text";
  int repeats = 1;
};

void cmd_synth(const CommonArgs& a) {
  serfuse::SynthConfig cfg = make_synth_config(a.config_path, a.sets);
  serfuse::SynthResult result = serfuse::synth_generate(cfg, a.out_dir);
  Json summary;
  summary["manifest"] = result.manifest_path;
  summary["utterances"] = result.records.size();
  summary["config"] = serfuse::synth_config_to_json(cfg);
  std::cout << summary.dump(2) << "\n";
}

void cmd_validate(const CommonArgs& a, const std::vector<std::string>& required) {
  auto records = serfuse::load_manifest(a.manifest);
  serfuse::StreamReport report = serfuse::validate_streams(records, required);
  Json j;
  j["utterances"] = records.size();
  Json streams = Json::array();
  for (const auto& s : report.streams)
    streams.push_back(
        {{"name", s.name}, {"dim", s.dim}, {"utterances", s.utterances}});
  j["streams"] = streams;
  Json issues = Json::array();
  for (const auto& is : report.issues)
    issues.push_back({{"kind", serfuse::stream_issue_kind_name(is.kind)},
                      {"stream", is.stream},
                      {"utterance_id", is.utterance_id},
                      {"message", is.message}});
  j["issues"] = issues;
  j["ok"] = report.ok();
  std::cout << j.dump(2) << "\n";
  if (!report.ok()) throw serfuse::Error("manifest validation failed");
}

void cmd_train(const CommonArgs& a, const std::string& heldout_session) {
  serfuse::TrainConfig cfg = make_train_config(a.config_path, a.sets);
  auto records = serfuse::load_manifest(a.manifest);
  std::vector<serfuse::UtteranceRecord> train, heldout;
  for (const auto& r : records)
    (!heldout_session.empty() && r.session_id == heldout_session ? heldout : train)
        .push_back(r);
  if (!heldout_session.empty() && heldout.empty())
    throw serfuse::Error("no records in held-out session " + heldout_session);

  std::filesystem::create_directories(a.out_dir);
  serfuse::write_run_manifest(a.out_dir, cfg, a.manifest);
  serfuse::TrainOutput out =
      serfuse::train_model(train, heldout.empty() ? nullptr : &heldout, cfg);

  std::filesystem::path dir(a.out_dir);
  serfuse::save_metrics_trace(out.metrics, (dir / "metrics.jsonl").string());
  serfuse::save_checkpoint((dir / "checkpoint.ckpt").string(), out.model_cfg,
                           &out.params, out.vocab, out.adam,
                           static_cast<uint32_t>(out.metrics.size()),
                           cfg.config_hash());
  Json j;
  j["checkpoint"] = (dir / "checkpoint.ckpt").string();
  j["metrics"] = (dir / "metrics.jsonl").string();
  j["epochs"] = out.metrics.size();
  j["ctc_infeasible_skipped"] = out.ctc_infeasible_skipped;
  if (!out.metrics.empty()) {
    const auto& last = out.metrics.back();
    j["final"] = {{"l_asr", last.l_asr},
                  {"l_ser", last.l_ser},
                  {"total", last.total}};
    if (last.heldout_wa >= 0) j["final"]["heldout_wa"] = last.heldout_wa;
  }
  std::cout << j.dump(2) << "\n";
}

void cmd_eval(const CommonArgs& a, const std::string& checkpoint_path) {
  auto records = serfuse::load_manifest(a.manifest);
  serfuse::CheckpointData ckpt = serfuse::load_checkpoint(checkpoint_path);
  serfuse::EvalResult r =
      serfuse::evaluate_model(ckpt.params, ckpt.model_cfg, records);
  Json j;
  j["utterances"] = r.ids.size();
  j["wa"] = r.wa;
  j["ua"] = r.ua;
  if (!a.out_dir.empty()) {
    std::filesystem::create_directories(a.out_dir);
    Json preds = Json::array();
    for (size_t i = 0; i < r.ids.size(); ++i)
      preds.push_back({{"utterance_id", r.ids[i]},
                       {"label", serfuse::emotion_name(r.labels[i])},
                       {"pred", serfuse::emotion_name(r.preds[i])}});
    Json full = j;
    full["predictions"] = preds;
    write_text_file(
        (std::filesystem::path(a.out_dir) / "eval.json").string(),
        full.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
}

void cmd_cv(const CommonArgs& a) {
  serfuse::TrainConfig cfg = make_train_config(a.config_path, a.sets);
  auto records = serfuse::load_manifest(a.manifest);
  std::filesystem::create_directories(a.out_dir);
  serfuse::write_run_manifest(a.out_dir, cfg, a.manifest);
  serfuse::ExperimentResult r = serfuse::run_cv(records, cfg);
  Json j;
  j["seed"] = r.seed;
  j["mean_wa"] = r.mean_wa;
  j["mean_ua"] = r.mean_ua;
  j["pooled_wa"] = r.pooled_wa;
  Json folds = Json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"session", f.session},
                     {"wa", f.wa},
                     {"ua", f.ua},
                     {"test_size", f.test_size},
                     {"correct", f.correct}});
  j["folds"] = folds;
  write_text_file((std::filesystem::path(a.out_dir) / "cv.json").string(),
                  j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
}

void cmd_compare_fusions(const CommonArgs& a) {
  serfuse::TrainConfig cfg = make_train_config(a.config_path, a.sets);
  auto records = serfuse::load_manifest(a.manifest);
  std::filesystem::create_directories(a.out_dir);
  serfuse::write_run_manifest(a.out_dir, cfg, a.manifest);
  auto rows = serfuse::compare_fusions(records, cfg, a.repeats);
  std::string report = serfuse::emit_fusion_report(rows, a.format);
  write_text_file((std::filesystem::path(a.out_dir) /
                   ("fusion_report" + report_extension(a.format)))
                      .string(),
                  report);
  std::cout << report;
}

void cmd_layer_sweep(const CommonArgs& a) {
  serfuse::TrainConfig cfg = make_train_config(a.config_path, a.sets);
  auto records = serfuse::load_manifest(a.manifest);
  std::filesystem::create_directories(a.out_dir);
  serfuse::write_run_manifest(a.out_dir, cfg, a.manifest);
  serfuse::LayerSweepResult sweep = serfuse::layer_sweep(records, cfg, a.repeats);
  std::string report = serfuse::emit_layer_report(sweep, a.format);
  write_text_file((std::filesystem::path(a.out_dir) /
                   ("layer_report" + report_extension(a.format)))
                      .string(),
                  report);
  std::cout << report;
}

void cmd_wer_report(const CommonArgs& a) {
  auto records = serfuse::load_manifest(a.manifest);
  serfuse::WerReport rep = serfuse::emotion_wer_report(records);
  serfuse::LengthBucketReport buckets = serfuse::length_bucket_report(records);
  std::string report = serfuse::emit_wer_report(rep, buckets, a.format);
  if (!a.out_dir.empty()) {
    std::filesystem::create_directories(a.out_dir);
    write_text_file((std::filesystem::path(a.out_dir) /
                     ("wer_report" + report_extension(a.format)))
                        .string(),
                    report);
  }
  std::cout << report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint speech-emotion training with hierarchical co-attention fusion"};
  app.require_subcommand(1);

  CommonArgs a;
  std::vector<std::string> required_streams;
  std::string heldout_session;
  std::string checkpoint_path;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", a.config_path, "JSON config file");
    cmd->add_option("--set", a.sets, "Override a config key, key=value");
  };
  auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", a.format, "Report format: text or json");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--out", a.out_dir, "Output directory")->required();
  add_config(synth);
  synth->callback([&] { cmd_synth(a); });

  auto* validate = app.add_subcommand("validate", "Validate a dataset manifest");
  validate->add_option("--manifest", a.manifest, "Manifest path")->required();
  validate->add_option("--require", required_streams, "Stream that must be present");
  validate->callback([&] { cmd_validate(a, required_streams); });

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--manifest", a.manifest, "Manifest path")->required();
  train->add_option("--out", a.out_dir, "Run directory")->required();
  train->add_option("--heldout-session", heldout_session,
                    "Session to hold out for per-epoch scoring");
  add_config(train);
  train->callback([&] { cmd_train(a, heldout_session); });

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--manifest", a.manifest, "Manifest path")->required();
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
  eval->add_option("--out", a.out_dir, "Run directory for eval.json");
  eval->callback([&] { cmd_eval(a, checkpoint_path); });

  auto* cv = app.add_subcommand("cv", "Leave-one-session-out cross-validation");
  cv->add_option("--manifest", a.manifest, "Manifest path")->required();
  cv->add_option("--out", a.out_dir, "Run directory")->required();
  add_config(cv);
  cv->callback([&] { cmd_cv(a); });

  auto* cmp = app.add_subcommand("compare-fusions",
                                 "Cross-validate every fusion configuration");
  cmp->add_option("--manifest", a.manifest, "Manifest path")->required();
  cmp->add_option("--out", a.out_dir, "Run directory")->required();
  cmp->add_option("--repeats", a.repeats, "Seeds per row (seed, seed+1, ...)");
  add_config(cmp);
  add_format(cmp);
  cmp->callback([&] { cmd_compare_fusions(a); });

  auto* sweep = app.add_subcommand("layer-sweep",
                                   "Cross-validate each hidden-layer variant");
  sweep->add_option("--manifest", a.manifest, "Manifest path")->required();
  sweep->add_option("--out", a.out_dir, "Run directory")->required();
  sweep->add_option("--repeats", a.repeats, "Seeds per row (seed, seed+1, ...)");
  add_config(sweep);
  add_format(sweep);
  sweep->callback([&] { cmd_layer_sweep(a); });

  auto* wer = app.add_subcommand("wer-report", "Word-error-rate breakdown");
  wer->add_option("--manifest", a.manifest, "Manifest path")->required();
  wer->add_option("--out", a.out_dir, "Run directory");
  add_format(wer);
  wer->callback([&] { cmd_wer_report(a); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      Json err;
      err["error"] = e.what();
      std::cerr << err.dump() << "\n";
    }
    return app.exit(e);
  } catch (const std::exception& e) {
    Json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
