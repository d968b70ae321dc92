// serfuse/common.hpp

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

#include "serfuse/types.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace serfuse {

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit) — stable across runs and platforms.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t n,
                        uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Little-endian binary I/O primitives.
// ---------------------------------------------------------------------------

inline void write_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t read_u32le(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw Error("truncated input while reading " + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t read_u64le(std::istream& is, const std::string& what) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) throw Error("truncated input while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32le(std::ostream& os, float v) {
  write_u32le(os, std::bit_cast<uint32_t>(v));
}

inline float read_f32le(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(read_u32le(is, what));
}

inline void write_f64le(std::ostream& os, double v) {
  write_u64le(os, std::bit_cast<uint64_t>(v));
}

inline double read_f64le(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(read_u64le(is, what));
}

inline void write_lp_string(std::ostream& os, const std::string& s) {
  write_u32le(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_lp_string(std::istream& is, const std::string& what) {
  uint32_t n = read_u32le(is, what + " length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (static_cast<uint32_t>(is.gcount()) != n)
    throw Error("truncated input while reading " + what);
  return s;
}

// ---------------------------------------------------------------------------
// Strings.
// ---------------------------------------------------------------------------

template <typename... Args>
std::string strprintf(const char* fmt, Args... args) {
  int n = std::snprintf(nullptr, 0, fmt, args...);
  if (n < 0) throw Error("strprintf: formatting failed");
  std::vector<char> buf(static_cast<size_t>(n) + 1);
  std::snprintf(buf.data(), buf.size(), fmt, args...);
  return std::string(buf.data(), static_cast<size_t>(n));
}

inline std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks,
                               const std::string& sep = " ") {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i > 0) out += sep;
    out += toks[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numeric helpers shared by the network code.
// ---------------------------------------------------------------------------

inline void check_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw Error(what + ": non-finite values");
}

inline void check_finite(const Vec& v, const std::string& what) {
  if (!v.allFinite()) throw Error(what + ": non-finite values");
}

// Row-wise softmax with max subtraction.
inline Mat softmax_rows(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

inline Vec softmax_vec(const Vec& x) {
  double mx = x.maxCoeff();
  Eigen::ArrayXd e = (x.array() - mx).exp();
  return (e / e.sum()).matrix();
}

inline Mat log_softmax_rows(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

inline double log_sum_exp(double a, double b) {
  if (std::isinf(a) && a < 0) return b;
  if (std::isinf(b) && b < 0) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Uniform init in +/- sqrt(6 / (fan_in + fan_out)); rows are the output side
// of y = W x, so fan_out = rows and fan_in = cols. Fill order is fixed so one
// seed always yields the same parameters.
inline Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng* rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(*rng);
  return m;
}

inline Mat reverse_rows(const Mat& m) { return m.colwise().reverse(); }

}  // namespace serfuse
