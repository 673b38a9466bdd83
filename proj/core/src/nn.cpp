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

#include "mmtsd/nn.hpp"

#include <cmath>
#include <cstring>

#include "mmtsd/lora.hpp"

namespace mmtsd {

Tensor& ParamStore::add(const std::string& name, Mat init) {
  auto [it, inserted] = params_.emplace(name, Tensor::param(std::move(init)));
  if (!inserted) throw ConfigError("ParamStore: duplicate parameter " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("ParamStore: no parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("ParamStore: no parameter " + name);
  return it->second;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, t] : params_)
    if (name.rfind(prefix, 0) == 0) t.set_requires_grad(trainable);
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::uint64_t ParamStore::checksum(const std::string& prefix) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : params_) {
    if (name.rfind(prefix, 0) != 0) continue;
    h = fnv1a64(name.data(), name.size(), h);
    const Mat& v = t.value();
    std::uint64_t dims[2] = {static_cast<std::uint64_t>(v.rows()),
                             static_cast<std::uint64_t>(v.cols())};
    h = fnv1a64(dims, sizeof(dims), h);
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        double d = v(r, c);
        h = fnv1a64(&d, sizeof(d), h);
      }
  }
  return h;
}

namespace nn {

Mat glorot(int rows, int cols, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  return stddev * rng.normal_mat(rows, cols);
}

void init_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                 Rng& rng, bool bias) {
  ps.add(prefix + "/w", glorot(out, in, rng));
  if (bias) ps.add(prefix + "/b", Mat::Zero(1, out));
}

Tensor linear(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
  Tensor y = matmul(x, transpose(ps.at(prefix + "/w")));
  if (ps.has(prefix + "/b")) y = add_rowvec(y, ps.at(prefix + "/b"));
  return y;
}

void init_layernorm(ParamStore& ps, const std::string& prefix, int dim) {
  ps.add(prefix + "/g", Mat::Ones(1, dim));
  ps.add(prefix + "/b", Mat::Zero(1, dim));
}

Tensor layernorm(const ParamStore& ps, const std::string& prefix,
                 const Tensor& x) {
  return layernorm_rows(x, ps.at(prefix + "/g"), ps.at(prefix + "/b"));
}

void init_mha(ParamStore& ps, const std::string& prefix, int dim, Rng& rng) {
  init_linear(ps, prefix + "/wq", dim, dim, rng);
  init_linear(ps, prefix + "/wk", dim, dim, rng);
  init_linear(ps, prefix + "/wv", dim, dim, rng);
  init_linear(ps, prefix + "/wo", dim, dim, rng);
}

Tensor mha(const ParamStore& ps, const std::string& prefix, const Tensor& q_in,
           const Tensor& kv_in, const AttnOpts& opts) {
  const Eigen::Index dim = q_in.cols();
  if (opts.heads < 1 || dim % opts.heads != 0)
    throw ConfigError("mha: head count must divide the model width");
  const Eigen::Index dh = dim / opts.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = opts.lora_q
                 ? lora_linear_rows(ps, prefix + "/wq", q_in, *opts.lora_q)
                 : linear(ps, prefix + "/wq", q_in);
  Tensor k = linear(ps, prefix + "/wk", kv_in);
  Tensor v = opts.lora_v
                 ? lora_linear_rows(ps, prefix + "/wv", kv_in, *opts.lora_v)
                 : linear(ps, prefix + "/wv", kv_in);

  std::vector<Tensor> ctx;
  ctx.reserve(static_cast<std::size_t>(opts.heads));
  for (int h = 0; h < opts.heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    Tensor probs = opts.mask ? softmax_rows_masked(scores, *opts.mask)
                             : softmax_rows(scores);
    ctx.push_back(matmul(probs, vh));
  }
  Tensor out = linear(ps, prefix + "/wo", concat_cols(ctx));
  if (opts.dropout > 0.0) {
    if (!opts.rng) throw ConfigError("mha: dropout requires an rng");
    out = dropout(out, opts.dropout, *opts.rng);
  }
  return out;
}

void init_encoder_layer(ParamStore& ps, const std::string& prefix, int dim,
                        int ff_dim, Rng& rng) {
  init_layernorm(ps, prefix + "/ln1", dim);
  init_mha(ps, prefix + "/attn", dim, rng);
  init_layernorm(ps, prefix + "/ln2", dim);
  init_linear(ps, prefix + "/ff1", dim, ff_dim, rng);
  init_linear(ps, prefix + "/ff2", ff_dim, dim, rng);
}

namespace {

Tensor feed_forward(const ParamStore& ps, const std::string& prefix,
                    const Tensor& x, const AttnOpts& opts) {
  Tensor f = linear(ps, prefix + "/ff2", gelu(linear(ps, prefix + "/ff1", x)));
  if (opts.dropout > 0.0) {
    if (!opts.rng) throw ConfigError("feed_forward: dropout requires an rng");
    f = dropout(f, opts.dropout, *opts.rng);
  }
  return f;
}

}  // namespace

Tensor encoder_layer(const ParamStore& ps, const std::string& prefix,
                     const Tensor& x, const AttnOpts& opts) {
  Tensor h = layernorm(ps, prefix + "/ln1", x);
  Tensor y = add(x, mha(ps, prefix + "/attn", h, h, opts));
  Tensor h2 = layernorm(ps, prefix + "/ln2", y);
  return add(y, feed_forward(ps, prefix, h2, opts));
}

void init_decoder_layer(ParamStore& ps, const std::string& prefix, int dim,
                        int ff_dim, Rng& rng) {
  init_layernorm(ps, prefix + "/ln1", dim);
  init_mha(ps, prefix + "/self", dim, rng);
  init_layernorm(ps, prefix + "/ln2", dim);
  init_mha(ps, prefix + "/cross", dim, rng);
  init_layernorm(ps, prefix + "/ln3", dim);
  init_linear(ps, prefix + "/ff1", dim, ff_dim, rng);
  init_linear(ps, prefix + "/ff2", ff_dim, dim, rng);
}

Tensor decoder_layer(const ParamStore& ps, const std::string& prefix,
                     const Tensor& x, const Tensor& memory,
                     const AttnOpts& self_opts, const AttnOpts& cross_opts) {
  Tensor h = layernorm(ps, prefix + "/ln1", x);
  Tensor y = add(x, mha(ps, prefix + "/self", h, h, self_opts));
  Tensor h2 = layernorm(ps, prefix + "/ln2", y);
  Tensor z = add(y, mha(ps, prefix + "/cross", h2, memory, cross_opts));
  Tensor h3 = layernorm(ps, prefix + "/ln3", z);
  return add(z, feed_forward(ps, prefix, h3, cross_opts));
}

Mat sinusoidal_positions(Eigen::Index t, Eigen::Index d) {
  Mat pos(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = 0; j < d; j += 2) {
      const double angle =
          static_cast<double>(i) /
          std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
      pos(i, j) = std::sin(angle);
      if (j + 1 < d) pos(i, j + 1) = std::cos(angle);
    }
  }
  return pos;
}

}  // namespace nn
}  // namespace mmtsd
