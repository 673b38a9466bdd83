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

#include "mmtsd/tsdmodel.hpp"

#include <limits>

namespace mmtsd {
namespace {

std::string enc_prefix(int i) { return "model/enc/l" + std::to_string(i); }
std::string dec_prefix(int i) { return "model/dec/l" + std::to_string(i); }

}  // namespace

void init_model(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  if (cfg.d_a < 1 || cfg.d_model < 1 || cfg.ff < 1)
    throw ConfigError("init_model: invalid dimensions");
  if (cfg.enc_layers < 1 || cfg.dec_layers < 1)
    throw ConfigError("init_model: need >= 1 encoder and decoder layers");
  if (cfg.heads < 1 || cfg.d_model % cfg.heads != 0)
    throw ConfigError("init_model: heads must divide d_model");

  nn::init_linear(ps, "model/front", cfg.d_a, cfg.d_model, rng);
  for (int i = 0; i < cfg.enc_layers; ++i)
    nn::init_encoder_layer(ps, enc_prefix(i), cfg.d_model, cfg.ff, rng);
  nn::init_layernorm(ps, "model/enc/ln_f", cfg.d_model);
  for (int i = 0; i < cfg.dec_layers; ++i)
    nn::init_decoder_layer(ps, dec_prefix(i), cfg.d_model, cfg.ff, rng);
  nn::init_layernorm(ps, "model/dec/ln_f", cfg.d_model);
}

Tensor encode_speech(ParamStore& ps, const ModelConfig& cfg,
                     const Mat& features, bool train_mode, Rng* rng) {
  if (features.rows() < 1)
    throw InputError("encode_speech: need at least one frame");
  if (features.cols() != cfg.d_a)
    throw InputError("encode_speech: expected " + std::to_string(cfg.d_a) +
                     " feature dims, got " + std::to_string(features.cols()));

  Tensor x = nn::linear(ps, "model/front", Tensor::constant(features));
  if (cfg.use_positions)
    x = add_const(x, nn::sinusoidal_positions(features.rows(), cfg.d_model));

  for (int i = 0; i < cfg.enc_layers; ++i) {
    nn::AttnOpts opts;
    opts.heads = cfg.heads;
    if (train_mode) {
      opts.dropout = cfg.dropout;
      opts.rng = rng;
    }
    x = nn::encoder_layer(ps, enc_prefix(i), x, opts);
  }
  return nn::layernorm(ps, "model/enc/ln_f", x);
}

MatU8 build_decoder_mask(const std::vector<int>& prompt_groups) {
  int total = 0;
  for (int g : prompt_groups) {
    if (g != 1 && g != 2)
      throw ConfigError("build_decoder_mask: group sizes must be 1 or 2, got " +
                        std::to_string(g));
    total += g;
  }
  MatU8 allowed = MatU8::Zero(total, total);
  int offset = 0;
  for (int g : prompt_groups) {
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) allowed(offset + i, offset + j) = 1;
    offset += g;
  }
  return allowed;
}

Mat mask_to_additive(const MatU8& allowed) {
  Mat add = Mat::Zero(allowed.rows(), allowed.cols());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < allowed.rows(); ++i)
    for (Eigen::Index j = 0; j < allowed.cols(); ++j)
      if (!allowed(i, j)) add(i, j) = neg_inf;
  return add;
}

Tensor decode_prompts(ParamStore& ps, const ModelConfig& cfg,
                      const Tensor& prompts, const Tensor& memory,
                      const MatU8& mask, bool train_mode, Rng* rng) {
  if (prompts.cols() != cfg.d_model || memory.cols() != cfg.d_model)
    throw InputError("decode_prompts: width mismatch with d_model");
  if (mask.rows() != prompts.rows() || mask.cols() != prompts.rows())
    throw InputError("decode_prompts: mask must be P x P");

  const Mat additive = mask_to_additive(mask);
  Tensor x = prompts;
  for (int i = 0; i < cfg.dec_layers; ++i) {
    nn::AttnOpts self_opts;
    self_opts.heads = cfg.heads;
    self_opts.mask = &additive;
    nn::AttnOpts cross_opts;
    cross_opts.heads = cfg.heads;
    if (train_mode) {
      self_opts.dropout = cfg.dropout;
      self_opts.rng = rng;
      cross_opts.dropout = cfg.dropout;
      cross_opts.rng = rng;
    }
    x = nn::decoder_layer(ps, dec_prefix(i), x, memory, self_opts, cross_opts);
  }
  return nn::layernorm(ps, "model/dec/ln_f", x);
}

Tensor predict_tracks(const Tensor& f_dec, const Tensor& f_enc) {
  if (f_dec.cols() != f_enc.cols())
    throw InputError("predict_tracks: decoder/encoder width mismatch");
  return sigmoid(matmul(f_dec, transpose(f_enc)));
}

Mat tracks_to_targets(const std::vector<EventTrack>& tracks) {
  if (tracks.empty()) throw InputError("tracks_to_targets: no tracks");
  const std::size_t frames = tracks[0].labels.size();
  Mat targets(static_cast<Eigen::Index>(tracks.size()),
              static_cast<Eigen::Index>(frames));
  for (std::size_t p = 0; p < tracks.size(); ++p) {
    if (tracks[p].labels.size() != frames)
      throw InputError("tracks_to_targets: inconsistent track lengths");
    for (std::size_t t = 0; t < frames; ++t)
      targets(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)) =
          tracks[p].labels[t] ? 1.0 : 0.0;
  }
  return targets;
}

Tensor bce_loss(const Tensor& pred, const std::vector<EventTrack>& tracks) {
  Mat targets = tracks_to_targets(tracks);
  if (targets.rows() != pred.rows() || targets.cols() != pred.cols())
    throw InputError("bce_loss: prediction is " + std::to_string(pred.rows()) +
                     "x" + std::to_string(pred.cols()) + " but tracks are " +
                     std::to_string(targets.rows()) + "x" +
                     std::to_string(targets.cols()));
  return bce_mean(pred, targets);
}

}  // namespace mmtsd
