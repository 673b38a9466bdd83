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

#include "mmtsd/lora.hpp"

namespace mmtsd {

LoraAdapter make_lora(ParamStore& ps, const std::string& prefix, int d_in,
                      int d_out, int rank, double alpha, Rng& rng) {
  if (rank < 1) throw ConfigError("lora: rank must be >= 1");
  LoraAdapter ad;
  ad.rank = rank;
  ad.alpha = alpha;
  ad.A = ps.add(prefix + "/A", nn::glorot(rank, d_in, rng));
  ad.B = ps.add(prefix + "/B", Mat::Zero(d_out, rank));
  return ad;
}

LoraAdapter lora_view(ParamStore& ps, const std::string& prefix, int rank,
                      double alpha) {
  LoraAdapter ad;
  ad.rank = rank;
  ad.alpha = alpha;
  ad.A = ps.at(prefix + "/A");
  ad.B = ps.at(prefix + "/B");
  if (ad.A.rows() != rank || ad.B.cols() != rank)
    throw ConfigError("lora_view: stored rank does not match");
  return ad;
}

Tensor lora_forward(const Tensor& x, const Tensor& w_base,
                    const LoraAdapter& adapter) {
  if (adapter.A.cols() != x.rows() || w_base.cols() != x.rows() ||
      adapter.B.rows() != w_base.rows() || adapter.B.cols() != adapter.A.rows())
    throw ConfigError("lora_forward: shape mismatch");
  Tensor base = matmul(w_base, x);
  Tensor low = matmul(adapter.B, matmul(adapter.A, x));
  return add(base, scale(low, adapter.scaling()));
}

Tensor lora_linear_rows(const ParamStore& ps, const std::string& linear_prefix,
                        const Tensor& x, const LoraAdapter& adapter) {
  Tensor base = nn::linear(ps, linear_prefix, x);
  if (adapter.A.cols() != x.cols() || adapter.B.rows() != base.cols())
    throw ConfigError("lora_linear_rows: shape mismatch");
  Tensor low = matmul(matmul(x, transpose(adapter.A)), transpose(adapter.B));
  return add(base, scale(low, adapter.scaling()));
}

Mat lora_merge(const Mat& w_base, const LoraAdapter& adapter) {
  if (adapter.B.rows() != w_base.rows() || adapter.A.cols() != w_base.cols() ||
      adapter.B.cols() != adapter.A.rows())
    throw ConfigError("lora_merge: shape mismatch");
  return w_base +
         adapter.scaling() * (adapter.B.value() * adapter.A.value());
}

}  // namespace mmtsd
