// Copyright 2026  The mmtsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared helpers for the test binaries: finite-difference gradients and
// relative-error comparison.

#ifndef MMTSD_TESTS_TESTUTIL_HPP_
#define MMTSD_TESTS_TESTUTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>

#include "mmtsd/common.hpp"

namespace mmtsd::testutil {

// Central finite differences of a scalar function w.r.t. every entry of x.
// `f` must re-evaluate the function from the current contents of x.
inline Mat numeric_grad(Mat& x, const std::function<double()>& f,
                        double h = 1e-5) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + h;
    const double fp = f();
    x(i) = orig - h;
    const double fm = f();
    x(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Max over entries of |a-b| / max(|a|, |b|, floor).
inline double max_rel_err(const Mat& a, const Mat& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

}  // namespace mmtsd::testutil

#endif  // MMTSD_TESTS_TESTUTIL_HPP_
