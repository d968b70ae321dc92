// tests/feature_matrix_test.cpp

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

#include "serfuse/feature-matrix.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "test_util.hpp"

namespace serfuse {
namespace {

using test::TempDir;

FeatureMatrix sample_matrix() {
  FeatureMatrix m;
  m.rows = 3;
  m.cols = 2;
  m.values = {0.0f, 1.5f, -2.25f, 1e-8f, 4096.0f, -0.5f};
  return m;
}

TEST(FeatureMatrixTest, RoundTripBitExact) {
  TempDir dir("fmx");
  FeatureMatrix m = sample_matrix();
  write_feature_matrix(m, dir.str("a.fmx"));
  FeatureMatrix r = read_feature_matrix(dir.str("a.fmx"));
  EXPECT_EQ(r.rows, m.rows);
  EXPECT_EQ(r.cols, m.cols);
  ASSERT_EQ(r.values.size(), m.values.size());
  for (size_t i = 0; i < m.values.size(); ++i) {
    EXPECT_EQ(std::bit_cast<uint32_t>(r.values[i]),
              std::bit_cast<uint32_t>(m.values[i]))
        << i;
  }
}

TEST(FeatureMatrixTest, FileLayoutIsLittleEndianRowMajor) {
  TempDir dir("fmx");
  FeatureMatrix m;
  m.rows = 2;
  m.cols = 2;
  m.values = {1.0f, 2.0f, 3.0f, 4.0f};
  write_feature_matrix(m, dir.str("b.fmx"));
  std::string bytes = test::read_file(dir.str("b.fmx"));
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 4u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "FMX1");
  auto u32 = [&](size_t at) {
    return uint32_t(uint8_t(bytes[at])) | uint32_t(uint8_t(bytes[at + 1])) << 8 |
           uint32_t(uint8_t(bytes[at + 2])) << 16 |
           uint32_t(uint8_t(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), 2u);
  EXPECT_EQ(u32(8), 2u);
  // Row-major payload: 1, 2, 3, 4.
  EXPECT_EQ(u32(12), std::bit_cast<uint32_t>(1.0f));
  EXPECT_EQ(u32(16), std::bit_cast<uint32_t>(2.0f));
  EXPECT_EQ(u32(20), std::bit_cast<uint32_t>(3.0f));
  EXPECT_EQ(u32(24), std::bit_cast<uint32_t>(4.0f));
}

TEST(FeatureMatrixTest, MatConversionRoundTrip) {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  FeatureMatrix fm = FeatureMatrix::from_mat(m);
  EXPECT_EQ(fm.at(0, 2), 3.0f);
  EXPECT_EQ(fm.at(1, 0), 4.0f);
  Mat back = fm.to_mat();
  EXPECT_TRUE(test::mat_equal(back, m));
}

TEST(FeatureMatrixTest, ReadDimsMatchesFullRead) {
  TempDir dir("fmx");
  write_feature_matrix(sample_matrix(), dir.str("c.fmx"));
  auto [rows, cols] = read_feature_dims(dir.str("c.fmx"));
  EXPECT_EQ(rows, 3u);
  EXPECT_EQ(cols, 2u);
}

TEST(FeatureMatrixTest, RejectsBadMagic) {
  TempDir dir("fmx");
  std::ofstream os(dir.str("bad.fmx"), std::ios::binary);
  os << "FMX2" << std::string(8, '\0');
  os.close();
  EXPECT_THROW(read_feature_matrix(dir.str("bad.fmx")), Error);
  EXPECT_THROW(read_feature_dims(dir.str("bad.fmx")), Error);
}

TEST(FeatureMatrixTest, RejectsZeroDims) {
  FeatureMatrix m;
  m.rows = 0;
  m.cols = 2;
  TempDir dir("fmx");
  EXPECT_THROW(write_feature_matrix(m, dir.str("z.fmx")), Error);
}

TEST(FeatureMatrixTest, RejectsTruncatedPayload) {
  TempDir dir("fmx");
  write_feature_matrix(sample_matrix(), dir.str("t.fmx"));
  std::string bytes = test::read_file(dir.str("t.fmx"));
  std::ofstream os(dir.str("t.fmx"), std::ios::binary | std::ios::trunc);
  os << bytes.substr(0, bytes.size() - 3);
  os.close();
  EXPECT_THROW(read_feature_matrix(dir.str("t.fmx")), Error);
}

TEST(FeatureMatrixTest, RejectsTrailingBytes) {
  TempDir dir("fmx");
  write_feature_matrix(sample_matrix(), dir.str("x.fmx"));
  std::ofstream os(dir.str("x.fmx"), std::ios::binary | std::ios::app);
  os << '\0';
  os.close();
  EXPECT_THROW(read_feature_matrix(dir.str("x.fmx")), Error);
}

TEST(FeatureMatrixTest, RejectsNonFinite) {
  TempDir dir("fmx");
  std::ofstream os(dir.str("n.fmx"), std::ios::binary);
  os << "FMX1";
  auto u32 = [&](uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    os.write(b, 4);
  };
  u32(1);
  u32(1);
  u32(0x7fc00000u);  // quiet NaN
  os.close();
  EXPECT_THROW(read_feature_matrix(dir.str("n.fmx")), Error);
}

TEST(FeatureMatrixTest, MissingFileError) {
  EXPECT_THROW(read_feature_matrix("/nonexistent/q.fmx"), Error);
}

}  // namespace
}  // namespace serfuse
