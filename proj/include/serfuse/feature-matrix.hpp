// serfuse/feature-matrix.hpp

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
#include "serfuse/types.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace serfuse {

// A T x D sequence of real-valued frames. On disk ("FMX1" format):
//   magic "FMX1" (4 bytes), rows (u32 LE), cols (u32 LE),
//   rows*cols float32 LE values, row-major.
struct FeatureMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> values;  // row-major, size rows*cols

  float at(uint32_t r, uint32_t c) const { return values[size_t(r) * cols + c]; }

  Mat to_mat() const {
    Mat m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) m(r, c) = at(r, c);
    return m;
  }

  static FeatureMatrix from_mat(const Mat& m) {
    FeatureMatrix fm;
    fm.rows = static_cast<uint32_t>(m.rows());
    fm.cols = static_cast<uint32_t>(m.cols());
    fm.values.resize(size_t(fm.rows) * fm.cols);
    for (uint32_t r = 0; r < fm.rows; ++r)
      for (uint32_t c = 0; c < fm.cols; ++c)
        fm.values[size_t(r) * fm.cols + c] = static_cast<float>(m(r, c));
    return fm;
  }
};

inline constexpr char kFmxMagic[4] = {'F', 'M', 'X', '1'};

inline void validate_feature_matrix(const FeatureMatrix& m, const std::string& what) {
  if (m.rows == 0 || m.cols == 0)
    throw Error(what + ": rows and cols must be >= 1 (got " +
                std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")");
  if (m.values.size() != size_t(m.rows) * m.cols)
    throw Error(what + ": payload length " + std::to_string(m.values.size()) +
                " does not match " + std::to_string(m.rows) + "x" +
                std::to_string(m.cols));
  for (float v : m.values) {
    if (!std::isfinite(v)) throw Error(what + ": non-finite value in payload");
  }
}

inline void write_feature_matrix(const FeatureMatrix& m, const std::string& path) {
  validate_feature_matrix(m, "write_feature_matrix(" + path + ")");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("write_feature_matrix: cannot open " + path);
  os.write(kFmxMagic, 4);
  write_u32le(os, m.rows);
  write_u32le(os, m.cols);
  for (float v : m.values) write_f32le(os, v);
  os.flush();
  if (!os) throw Error("write_feature_matrix: write failed for " + path);
}

// Reads only the header, for cheap dimension discovery.
inline std::pair<uint32_t, uint32_t> read_feature_dims(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open feature file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFmxMagic, 4) != 0)
    throw Error("bad feature-matrix magic in " + path);
  uint32_t rows = read_u32le(is, "rows of " + path);
  uint32_t cols = read_u32le(is, "cols of " + path);
  if (rows == 0 || cols == 0) throw Error("zero dimension in " + path);
  return {rows, cols};
}

inline FeatureMatrix read_feature_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_feature_matrix: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || magic[0] != 'F' || magic[1] != 'M' || magic[2] != 'X' ||
      magic[3] != '1')
    throw Error("read_feature_matrix: bad magic in " + path);
  FeatureMatrix m;
  m.rows = read_u32le(is, path + " rows");
  m.cols = read_u32le(is, path + " cols");
  if (m.rows == 0 || m.cols == 0)
    throw Error("read_feature_matrix: zero dimension in " + path);
  size_t n = size_t(m.rows) * m.cols;
  m.values.resize(n);
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
      throw Error("read_feature_matrix: truncated payload in " + path);
    uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                 (static_cast<uint32_t>(b[2]) << 16) |
                 (static_cast<uint32_t>(b[3]) << 24);
    m.values[i] = std::bit_cast<float>(u);
    if (!std::isfinite(m.values[i]))
      throw Error("read_feature_matrix: non-finite value in " + path);
  }
  // The payload must end exactly at rows*cols values.
  is.peek();
  if (!is.eof())
    throw Error("read_feature_matrix: trailing bytes after payload in " + path);
  return m;
}

}  // namespace serfuse
