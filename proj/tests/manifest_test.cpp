// tests/manifest_test.cpp

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

#include "serfuse/manifest.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "serfuse/feature-matrix.hpp"
#include "test_util.hpp"

namespace serfuse {
namespace {

using test::TempDir;

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : lines) os << l << "\n";
}

void write_fmx(const std::string& path, int rows, int cols) {
  Mat m = Mat::Constant(rows, cols, 0.5);
  write_feature_matrix(FeatureMatrix::from_mat(m), path);
}

TEST(ManifestTest, LoadsValidRecords) {
  TempDir dir("man");
  std::filesystem::create_directories(dir.str("features"));
  write_fmx(dir.str("features/u1.mfcc.fmx"), 4, 3);
  write_lines(dir.str("data.jsonl"),
              {R"({"utterance_id":"u1","session_id":"S1","speaker_id":"S1-A",)"
               R"("emotion":"ang","ref_transcript":"hello there",)"
               R"("hyp_transcript":"hello here",)"
               R"("features":{"mfcc":"features/u1.mfcc.fmx"}})",
               "",
               R"({"utterance_id":"u2","session_id":"S2","speaker_id":"S2-B",)"
               R"("emotion":"sad","ref_transcript":"one"})"});
  auto records = load_manifest(dir.str("data.jsonl"));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].utterance_id, "u1");
  EXPECT_EQ(records[0].emotion, Emotion::kAng);
  EXPECT_EQ(records[0].ref_transcript, (std::vector<std::string>{"hello", "there"}));
  ASSERT_TRUE(records[0].hyp_transcript.has_value());
  EXPECT_EQ(*records[0].hyp_transcript, (std::vector<std::string>{"hello", "here"}));
  ASSERT_EQ(records[0].features.count("mfcc"), 1u);
  // Relative feature paths resolve against the manifest directory.
  EXPECT_EQ(records[0].features.at("mfcc"), dir.str("features/u1.mfcc.fmx"));
  EXPECT_FALSE(records[1].hyp_transcript.has_value());
  EXPECT_TRUE(records[1].features.empty());
}

TEST(ManifestTest, CollectsAllIssuesBeforeThrowing) {
  TempDir dir("man");
  write_lines(dir.str("bad.jsonl"),
              {"{not json",
               R"({"utterance_id":"u1","session_id":"S1","speaker_id":"A",)"
               R"("emotion":"joy","ref_transcript":"a"})",
               R"({"utterance_id":"u2","session_id":"S1","speaker_id":"A",)"
               R"("emotion":"ang","ref_transcript":""})",
               R"({"utterance_id":"u2","session_id":"S1","speaker_id":"A",)"
               R"("emotion":"ang","ref_transcript":"b"})",
               R"({"utterance_id":"u3","session_id":"S1","speaker_id":"A",)"
               R"("emotion":"ang","ref_transcript":"c",)"
               R"("features":{"mfcc":"missing.fmx"}})",
               R"({"utterance_id":"u4","session_id":"S1","speaker_id":"A",)"
               R"("emotion":"ang","ref_transcript":"d",)"
               R"("features":{"pitch":"x.fmx"}})",
               R"({"session_id":"S1","speaker_id":"A","emotion":"ang",)"
               R"("ref_transcript":"e"})"});
  try {
    load_manifest(dir.str("bad.jsonl"));
    FAIL() << "expected ManifestError";
  } catch (const ManifestError& e) {
    std::multiset<ManifestIssue::Kind> kinds;
    for (const auto& is : e.issues()) kinds.insert(is.kind);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kParse), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kUnknownEmotion), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kEmptyRef), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kDuplicateId), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kDanglingFeature), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kUnknownStream), 1u);
    EXPECT_EQ(kinds.count(ManifestIssue::Kind::kMissingField), 1u);
    EXPECT_EQ(e.issues().size(), 7u);
    // Line numbers are 1-based and preserved per issue.
    EXPECT_EQ(e.issues()[0].line_no, 1);
  }
}

TEST(ManifestTest, SaveLoadRoundTrip) {
  TempDir dir("man");
  std::filesystem::create_directories(dir.str("features"));
  write_fmx(dir.str("features/a.mfcc.fmx"), 2, 3);
  write_fmx(dir.str("features/a.text.fmx"), 2, 4);

  UtteranceRecord rec;
  rec.utterance_id = "a";
  rec.session_id = "S3";
  rec.speaker_id = "S3-B";
  rec.emotion = Emotion::kHap;
  rec.ref_transcript = {"alpha", "beta"};
  rec.hyp_transcript = std::vector<std::string>{"alpha", "gamma"};
  rec.features["mfcc"] = dir.str("features/a.mfcc.fmx");
  rec.features["text"] = dir.str("features/a.text.fmx");

  save_manifest({rec}, dir.str("out.jsonl"));
  // Paths under the manifest directory are stored relative.
  std::string bytes = test::read_file(dir.str("out.jsonl"));
  EXPECT_NE(bytes.find("\"features/a.mfcc.fmx\""), std::string::npos);

  auto records = load_manifest(dir.str("out.jsonl"));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].utterance_id, rec.utterance_id);
  EXPECT_EQ(records[0].session_id, rec.session_id);
  EXPECT_EQ(records[0].speaker_id, rec.speaker_id);
  EXPECT_EQ(records[0].emotion, rec.emotion);
  EXPECT_EQ(records[0].ref_transcript, rec.ref_transcript);
  EXPECT_EQ(*records[0].hyp_transcript, *rec.hyp_transcript);
  EXPECT_EQ(records[0].features, rec.features);
}

TEST(ManifestTest, ValidateStreamsReportsDimsAndIssues) {
  TempDir dir("man");
  std::filesystem::create_directories(dir.str("features"));
  write_fmx(dir.str("features/u1.mfcc.fmx"), 4, 3);
  write_fmx(dir.str("features/u2.mfcc.fmx"), 6, 3);
  write_fmx(dir.str("features/u3.mfcc.fmx"), 5, 7);  // mixed dim
  std::ofstream(dir.str("features/u4.mfcc.fmx")) << "junk";

  auto rec = [&](const std::string& id, const std::string& file) {
    UtteranceRecord r;
    r.utterance_id = id;
    r.session_id = "S1";
    r.speaker_id = "A";
    r.emotion = Emotion::kNeu;
    r.ref_transcript = {"x"};
    if (!file.empty()) r.features["mfcc"] = dir.str("features/" + file);
    return r;
  };
  std::vector<UtteranceRecord> records = {
      rec("u1", "u1.mfcc.fmx"), rec("u2", "u2.mfcc.fmx"), rec("u3", "u3.mfcc.fmx"),
      rec("u4", "u4.mfcc.fmx"), rec("u5", "")};

  StreamReport report = validate_streams(records, {"mfcc"});
  EXPECT_FALSE(report.ok());
  ASSERT_EQ(report.streams.size(), 1u);
  EXPECT_EQ(report.streams[0].name, "mfcc");
  EXPECT_EQ(report.streams[0].dim, 3u);  // first-seen dimension wins
  EXPECT_EQ(report.streams[0].utterances, 2u);

  std::multiset<StreamIssue::Kind> kinds;
  for (const auto& is : report.issues) kinds.insert(is.kind);
  EXPECT_EQ(kinds.count(StreamIssue::Kind::kMixedDims), 1u);
  EXPECT_EQ(kinds.count(StreamIssue::Kind::kBadFile), 1u);
  EXPECT_EQ(kinds.count(StreamIssue::Kind::kMissingStream), 1u);
}

TEST(ManifestTest, ValidateStreamsCleanCorpus) {
  TempDir dir("man");
  write_fmx(dir.str("a.fmx"), 3, 5);
  write_fmx(dir.str("b.fmx"), 9, 5);
  UtteranceRecord r1, r2;
  r1.utterance_id = "a";
  r1.session_id = "S1";
  r1.speaker_id = "A";
  r1.emotion = Emotion::kAng;
  r1.ref_transcript = {"x"};
  r1.features["text"] = dir.str("a.fmx");
  r2 = r1;
  r2.utterance_id = "b";
  r2.features["text"] = dir.str("b.fmx");
  StreamReport report = validate_streams({r1, r2}, {"text"});
  EXPECT_TRUE(report.ok());
  ASSERT_EQ(report.streams.size(), 1u);
  EXPECT_EQ(report.streams[0].dim, 5u);
  EXPECT_EQ(report.streams[0].utterances, 2u);
}

TEST(ManifestTest, MissingFileThrows) {
  EXPECT_THROW(load_manifest("/nonexistent/m.jsonl"), Error);
}

}  // namespace
}  // namespace serfuse
