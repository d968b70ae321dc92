// serfuse/manifest.hpp

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
#include "serfuse/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace serfuse {

// A dataset manifest is line-delimited JSON, one utterance per line:
//   {"utterance_id": "...", "session_id": "...", "speaker_id": "...",
//    "emotion": "ang|hap|neu|sad", "ref_transcript": "tok tok ...",
//    "hyp_transcript": "tok ...",  (optional)
//    "features": {"mfcc": "features/<id>.mfcc.fmx", ...}}
// Feature paths are resolved relative to the manifest's directory.

struct ManifestIssue {
  enum class Kind {
    kParse,
    kMissingField,
    kDuplicateId,
    kUnknownEmotion,
    kUnknownStream,
    kDanglingFeature,
    kEmptyRef,
  };
  Kind kind;
  int line_no;  // 1-based
  std::string message;
};

inline const char* manifest_issue_kind_name(ManifestIssue::Kind k) {
  switch (k) {
    case ManifestIssue::Kind::kParse: return "parse_error";
    case ManifestIssue::Kind::kMissingField: return "missing_field";
    case ManifestIssue::Kind::kDuplicateId: return "duplicate_id";
    case ManifestIssue::Kind::kUnknownEmotion: return "unknown_emotion";
    case ManifestIssue::Kind::kUnknownStream: return "unknown_stream";
    case ManifestIssue::Kind::kDanglingFeature: return "dangling_feature";
    case ManifestIssue::Kind::kEmptyRef: return "empty_ref_transcript";
  }
  return "unknown";
}

class ManifestError : public Error {
 public:
  ManifestError(const std::string& path, std::vector<ManifestIssue> issues)
      : Error(make_message(path, issues)), issues_(std::move(issues)) {}
  const std::vector<ManifestIssue>& issues() const { return issues_; }

 private:
  static std::string make_message(const std::string& path,
                                  const std::vector<ManifestIssue>& issues) {
    std::string msg = "manifest " + path + ": " + std::to_string(issues.size()) +
                      " validation failure(s)";
    for (const auto& is : issues) {
      msg += strprintf("\n  [%s] line %d: %s", manifest_issue_kind_name(is.kind),
                       is.line_no, is.message.c_str());
    }
    return msg;
  }
  std::vector<ManifestIssue> issues_;
};

// Loads and validates a manifest. Throws ManifestError listing every
// validation failure (duplicate ids, unknown emotion labels, dangling feature
// references, malformed lines) rather than stopping at the first.
inline std::vector<UtteranceRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("load_manifest: cannot open " + path);
  std::filesystem::path base = std::filesystem::path(path).parent_path();

  std::vector<UtteranceRecord> records;
  std::vector<ManifestIssue> issues;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      issues.push_back({ManifestIssue::Kind::kParse, line_no, e.what()});
      continue;
    }
    UtteranceRecord rec;
    bool ok = true;
    auto need_string = [&](const char* key, std::string* out) {
      if (!j.contains(key) || !j[key].is_string()) {
        issues.push_back({ManifestIssue::Kind::kMissingField, line_no,
                          std::string("missing or non-string field \"") + key + "\""});
        ok = false;
        return;
      }
      *out = j[key].get<std::string>();
    };
    need_string("utterance_id", &rec.utterance_id);
    need_string("session_id", &rec.session_id);
    need_string("speaker_id", &rec.speaker_id);
    std::string emotion, ref;
    need_string("emotion", &emotion);
    need_string("ref_transcript", &ref);
    if (!ok) continue;

    if (!seen_ids.insert(rec.utterance_id).second) {
      issues.push_back({ManifestIssue::Kind::kDuplicateId, line_no,
                        "duplicate utterance_id \"" + rec.utterance_id + "\""});
      continue;
    }
    try {
      rec.emotion = emotion_from_name(emotion);
    } catch (const Error& e) {
      issues.push_back({ManifestIssue::Kind::kUnknownEmotion, line_no, e.what()});
      continue;
    }
    rec.ref_transcript = split_whitespace(ref);
    if (rec.ref_transcript.empty()) {
      issues.push_back({ManifestIssue::Kind::kEmptyRef, line_no,
                        "empty ref_transcript for \"" + rec.utterance_id + "\""});
      continue;
    }
    if (j.contains("hyp_transcript") && !j["hyp_transcript"].is_null()) {
      if (!j["hyp_transcript"].is_string()) {
        issues.push_back({ManifestIssue::Kind::kMissingField, line_no,
                          "hyp_transcript must be a string"});
        continue;
      }
      rec.hyp_transcript = split_whitespace(j["hyp_transcript"].get<std::string>());
    }
    if (j.contains("features")) {
      if (!j["features"].is_object()) {
        issues.push_back({ManifestIssue::Kind::kMissingField, line_no,
                          "features must be an object"});
        continue;
      }
      bool feat_ok = true;
      for (auto it = j["features"].begin(); it != j["features"].end(); ++it) {
        const std::string& stream = it.key();
        if (!is_known_stream(stream)) {
          issues.push_back({ManifestIssue::Kind::kUnknownStream, line_no,
                            "unknown stream name \"" + stream + "\""});
          feat_ok = false;
          continue;
        }
        if (!it.value().is_string()) {
          issues.push_back({ManifestIssue::Kind::kMissingField, line_no,
                            "feature path for \"" + stream + "\" must be a string"});
          feat_ok = false;
          continue;
        }
        std::filesystem::path p(it.value().get<std::string>());
        if (p.is_relative()) p = base / p;
        if (!std::filesystem::exists(p)) {
          issues.push_back({ManifestIssue::Kind::kDanglingFeature, line_no,
                            "feature file does not exist: " + p.string()});
          feat_ok = false;
          continue;
        }
        rec.features[stream] = p.string();
      }
      if (!feat_ok) continue;
    }
    records.push_back(std::move(rec));
  }
  if (!issues.empty()) throw ManifestError(path, std::move(issues));
  return records;
}

// Writes records as line-delimited JSON. Feature paths are emitted relative
// to the manifest directory when they live under it.
inline void save_manifest(const std::vector<UtteranceRecord>& records,
                          const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("save_manifest: cannot open " + path);
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const auto& rec : records) {
    nlohmann::json j;
    j["utterance_id"] = rec.utterance_id;
    j["session_id"] = rec.session_id;
    j["speaker_id"] = rec.speaker_id;
    j["emotion"] = emotion_name(rec.emotion);
    j["ref_transcript"] = join_tokens(rec.ref_transcript);
    if (rec.hyp_transcript) j["hyp_transcript"] = join_tokens(*rec.hyp_transcript);
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [stream, fpath] : rec.features) {
      std::filesystem::path p(fpath);
      auto rel = p.lexically_relative(base);
      feats[stream] = (!rel.empty() && rel.native().rfind("..", 0) != 0)
                          ? rel.generic_string()
                          : p.generic_string();
    }
    j["features"] = feats;
    os << j.dump() << "\n";
  }
  os.flush();
  if (!os) throw Error("save_manifest: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Stream validation: per-stream dimension consistency across records.
// ---------------------------------------------------------------------------

struct StreamIssue {
  enum class Kind { kMissingStream, kMixedDims, kBadFile };
  Kind kind;
  std::string stream;
  std::string utterance_id;
  std::string message;
};

inline const char* stream_issue_kind_name(StreamIssue::Kind k) {
  switch (k) {
    case StreamIssue::Kind::kMissingStream: return "missing_stream";
    case StreamIssue::Kind::kMixedDims: return "mixed_dims";
    case StreamIssue::Kind::kBadFile: return "bad_file";
  }
  return "unknown";
}

struct StreamInfo {
  std::string name;
  uint32_t dim = 0;      // feature dimension shared by all matrices of the stream
  size_t utterances = 0; // records carrying the stream
};

struct StreamReport {
  std::vector<StreamInfo> streams;
  std::vector<StreamIssue> issues;
  bool ok() const { return issues.empty(); }
};

// Reads every referenced feature file of every listed stream and checks that
// all utterances of one stream share a feature dimension, and that each
// required stream is present on each record.
inline StreamReport validate_streams(const std::vector<UtteranceRecord>& records,
                                     const std::vector<std::string>& required_streams) {
  StreamReport report;
  std::map<std::string, StreamInfo> infos;
  for (const auto& rec : records) {
    for (const auto& req : required_streams) {
      if (rec.features.find(req) == rec.features.end()) {
        report.issues.push_back({StreamIssue::Kind::kMissingStream, req,
                                 rec.utterance_id,
                                 "required stream \"" + req + "\" missing"});
      }
    }
    for (const auto& [stream, path] : rec.features) {
      FeatureMatrix m;
      try {
        m = read_feature_matrix(path);
      } catch (const Error& e) {
        report.issues.push_back(
            {StreamIssue::Kind::kBadFile, stream, rec.utterance_id, e.what()});
        continue;
      }
      auto [it, inserted] = infos.try_emplace(stream);
      StreamInfo& info = it->second;
      if (inserted) {
        info.name = stream;
        info.dim = m.cols;
      } else if (info.dim != m.cols) {
        report.issues.push_back(
            {StreamIssue::Kind::kMixedDims, stream, rec.utterance_id,
             strprintf("stream \"%s\" has dim %u here but %u elsewhere",
                       stream.c_str(), m.cols, info.dim)});
        continue;
      }
      info.utterances++;
    }
  }
  for (auto& [name, info] : infos) report.streams.push_back(info);
  return report;
}

}  // namespace serfuse
