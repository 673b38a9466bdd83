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

// Neural-network building blocks on top of the tensor engine.  All
// parameters live in a flat, name-keyed ParamStore (std::map, so iteration
// order is deterministic); layers are free functions that read parameters
// by name prefix.  This keeps checkpointing, freezing, checksums, and the
// optimizer all operating on one canonical parameter list.

#ifndef MMTSD_NN_HPP
#define MMTSD_NN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmtsd/rng.hpp"
#include "mmtsd/tensor.hpp"

namespace mmtsd {

class ParamStore {
 public:
  // Registers a trainable parameter. Throws ConfigError if the name exists.
  Tensor& add(const std::string& name, Mat init);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  // All (name, tensor) pairs in sorted name order.
  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  // Marks every parameter whose name starts with `prefix` (un)trainable.
  void set_trainable(const std::string& prefix, bool trainable);

  void zero_grads();

  // Order-independent FNV-1a digest over names, shapes, and raw value bytes
  // of all parameters under `prefix` (names are iterated sorted, so the
  // digest is well defined). Used to enforce freeze laws.
  std::uint64_t checksum(const std::string& prefix = "") const;

  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Tensor> params_;
};

struct LoraAdapter;  // lora.hpp

namespace nn {

// Xavier/Glorot normal initialization.
Mat glorot(int rows, int cols, Rng& rng);

// y = x * W^T + b with W: out x in, b: 1 x out (row-major batch convention).
void init_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                 Rng& rng, bool bias = true);
Tensor linear(const ParamStore& ps, const std::string& prefix, const Tensor& x);

void init_layernorm(ParamStore& ps, const std::string& prefix, int dim);
Tensor layernorm(const ParamStore& ps, const std::string& prefix,
                 const Tensor& x);

// Runtime options for multi-head attention.
struct AttnOpts {
  int heads = 1;
  const Mat* mask = nullptr;  // additive 0 / -inf mask on scores (Q rows x K rows)
  double dropout = 0.0;       // applied to the output projection result
  Rng* rng = nullptr;         // required when dropout > 0
  const LoraAdapter* lora_q = nullptr;  // low-rank adapters on the query/value
  const LoraAdapter* lora_v = nullptr;  // projections (see lora.hpp)
};

// Multi-head attention: queries from q_in (N_q x D), keys/values from kv_in
// (N_kv x D). Parameters: prefix/{wq,wk,wv,wo} each with bias.
void init_mha(ParamStore& ps, const std::string& prefix, int dim, Rng& rng);
Tensor mha(const ParamStore& ps, const std::string& prefix, const Tensor& q_in,
           const Tensor& kv_in, const AttnOpts& opts);

// Pre-norm Transformer encoder layer:
//   x = x + Drop(MHA(LN1(x)));  x = x + Drop(FF(LN2(x)))
// FF = W2 * gelu(W1 * x), widths dim -> ff_dim -> dim.
void init_encoder_layer(ParamStore& ps, const std::string& prefix, int dim,
                        int ff_dim, Rng& rng);
Tensor encoder_layer(const ParamStore& ps, const std::string& prefix,
                     const Tensor& x, const AttnOpts& opts);

// Pre-norm Transformer decoder layer: masked self-attention over the query
// tokens, cross-attention against `memory`, then the feed-forward block.
void init_decoder_layer(ParamStore& ps, const std::string& prefix, int dim,
                        int ff_dim, Rng& rng);
Tensor decoder_layer(const ParamStore& ps, const std::string& prefix,
                     const Tensor& x, const Tensor& memory,
                     const AttnOpts& self_opts, const AttnOpts& cross_opts);

// Fixed sinusoidal position table (T x D).
Mat sinusoidal_positions(Eigen::Index t, Eigen::Index d);

}  // namespace nn
}  // namespace mmtsd

#endif  // MMTSD_NN_HPP
