// serfuse/pooling.hpp

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

namespace serfuse {

// Non-overlapping temporal max pooling (stride == kernel). Output has
// floor(T / kernel) rows; a trailing partial window is dropped. Applied to raw
// acoustic features only, so no backward pass is provided.
inline Mat max_pool_time(const Mat& x, int kernel = 2) {
  if (kernel < 1) throw Error("max_pool_time: kernel must be >= 1");
  const int t_in = static_cast<int>(x.rows());
  if (t_in < kernel)
    throw Error(strprintf("max_pool_time: %d frames but kernel %d", t_in, kernel));
  const int t_out = t_in / kernel;
  Mat out(t_out, x.cols());
  for (int t = 0; t < t_out; ++t) {
    out.row(t) = x.row(t * kernel);
    for (int k = 1; k < kernel; ++k)
      out.row(t) = out.row(t).cwiseMax(x.row(t * kernel + k));
  }
  return out;
}

// Mean over the time axis: (T, D) -> (D).
inline Vec mean_over_time(const Mat& x) {
  if (x.rows() == 0) throw Error("mean_over_time: empty input");
  return x.colwise().mean().transpose();
}

// d(mean)/dx spreads the incoming vector gradient uniformly over rows.
inline Mat mean_over_time_backward(const Vec& grad_out, Eigen::Index t) {
  if (t <= 0) throw Error("mean_over_time_backward: empty input");
  Mat g(t, grad_out.size());
  g.rowwise() = (grad_out.transpose() / static_cast<double>(t));
  return g;
}

}  // namespace serfuse
