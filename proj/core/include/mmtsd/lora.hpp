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

// Low-rank adaptation of frozen linear projections:
//   y = W x + (alpha / r) * B (A x)
// with A (r x d_in) randomly initialized and B (d_out x r) zero-initialized,
// so an untrained adapter is an exact no-op on the base projection.

#ifndef MMTSD_LORA_HPP
#define MMTSD_LORA_HPP

#include <string>

#include "mmtsd/nn.hpp"
#include "mmtsd/rng.hpp"
#include "mmtsd/tensor.hpp"

namespace mmtsd {

struct LoraAdapter {
  int rank = 0;
  double alpha = 0.0;
  Tensor A;  // rank x d_in
  Tensor B;  // d_out x rank, starts all-zero

  double scaling() const { return alpha / static_cast<double>(rank); }
};

// Registers prefix/A and prefix/B in the store and returns the adapter view.
LoraAdapter make_lora(ParamStore& ps, const std::string& prefix, int d_in,
                      int d_out, int rank, double alpha, Rng& rng);

// Adapter view over parameters previously registered under `prefix`.
LoraAdapter lora_view(ParamStore& ps, const std::string& prefix, int rank,
                      double alpha);

// Column convention (x: d_in x N): W x + (alpha/r) B (A x).
Tensor lora_forward(const Tensor& x, const Tensor& w_base,
                    const LoraAdapter& adapter);

// Row-major batch convention used inside attention (x: N x d_in):
// x W^T [+ bias] + (alpha/r) (x A^T) B^T.
Tensor lora_linear_rows(const ParamStore& ps, const std::string& linear_prefix,
                        const Tensor& x, const LoraAdapter& adapter);

// Dense merge for deployment: W + (alpha/r) B A.
Mat lora_merge(const Mat& w_base, const LoraAdapter& adapter);

}  // namespace mmtsd

#endif  // MMTSD_LORA_HPP
