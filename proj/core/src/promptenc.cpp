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

#include "mmtsd/promptenc.hpp"

#include <cmath>

namespace mmtsd {
namespace {

std::string layer_prefix(const std::string& base, int i) {
  return base + "/l" + std::to_string(i);
}

}  // namespace

// ---- text prompts -------------------------------------------------------

void init_text_encoder(ParamStore& ps, const TextEncoderConfig& cfg,
                       int vocab_size, int n_events, Rng& rng) {
  if (cfg.width < 1 || cfg.layers < 1 || cfg.d_out < 1 || cfg.max_tokens < 1)
    throw ConfigError("init_text_encoder: invalid dimensions");
  if (vocab_size < 2) throw ConfigError("init_text_encoder: vocab too small");
  if (n_events < 2) throw ConfigError("init_text_encoder: need >= 2 events");

  ps.add("text_base/embed", nn::glorot(vocab_size, cfg.width, rng));
  // Row 0 is the CLS position; rows 1.. are token positions.
  ps.add("text_base/pos", nn::glorot(cfg.max_tokens + 1, cfg.width, rng));
  ps.add("text_base/cls", nn::glorot(1, cfg.width, rng));
  for (int i = 0; i < cfg.layers; ++i)
    nn::init_encoder_layer(ps, layer_prefix("text_base", i), cfg.width, cfg.ff,
                           rng);
  nn::init_layernorm(ps, "text_base/ln_f", cfg.width);

  for (int i = 0; i < cfg.layers; ++i) {
    make_lora(ps, layer_prefix("text_lora", i) + "/q", cfg.width, cfg.width,
              cfg.lora_rank, cfg.lora_alpha, rng);
    make_lora(ps, layer_prefix("text_lora", i) + "/v", cfg.width, cfg.width,
              cfg.lora_rank, cfg.lora_alpha, rng);
  }

  nn::init_linear(ps, "text_head/l1", cfg.width, cfg.width, rng);
  nn::init_linear(ps, "text_head/l2", cfg.width, cfg.d_out, rng);
  nn::init_linear(ps, "text_cls_head", cfg.width, n_events, rng);
}

Tensor text_cls_state(ParamStore& ps, const TextEncoderConfig& cfg,
                      const std::vector<int>& token_ids, bool use_lora,
                      bool train_mode, Rng* rng) {
  if (token_ids.empty()) throw InputError("encode_text: empty text prompt");
  std::vector<int> ids = token_ids;
  if (static_cast<int>(ids.size()) > cfg.max_tokens)
    ids.resize(static_cast<std::size_t>(cfg.max_tokens));

  Tensor tokens = gather_rows(ps.at("text_base/embed"), ids);
  Tensor x = concat_rows({ps.at("text_base/cls"), tokens});
  std::vector<int> pos_ids(static_cast<std::size_t>(ids.size()) + 1);
  for (std::size_t i = 0; i < pos_ids.size(); ++i)
    pos_ids[i] = static_cast<int>(i);
  x = add(x, gather_rows(ps.at("text_base/pos"), pos_ids));

  for (int i = 0; i < cfg.layers; ++i) {
    nn::AttnOpts opts;
    opts.heads = cfg.heads;
    if (train_mode) {
      opts.dropout = cfg.dropout;
      opts.rng = rng;
    }
    LoraAdapter q, v;
    if (use_lora) {
      q = lora_view(ps, layer_prefix("text_lora", i) + "/q", cfg.lora_rank,
                    cfg.lora_alpha);
      v = lora_view(ps, layer_prefix("text_lora", i) + "/v", cfg.lora_rank,
                    cfg.lora_alpha);
      opts.lora_q = &q;
      opts.lora_v = &v;
    }
    x = nn::encoder_layer(ps, layer_prefix("text_base", i), x, opts);
  }
  x = nn::layernorm(ps, "text_base/ln_f", x);
  return slice_rows(x, 0, 1);
}

Tensor encode_text_tensor(ParamStore& ps, const TextEncoderConfig& cfg,
                          const std::vector<int>& token_ids, bool use_lora,
                          bool train_mode, Rng* rng) {
  Tensor cls = text_cls_state(ps, cfg, token_ids, use_lora, train_mode, rng);
  Tensor h = relu(nn::linear(ps, "text_head/l1", cls));
  if (train_mode) {
    if (rng == nullptr)
      throw ConfigError("encode_text: train mode requires an rng");
    h = dropout(h, cfg.dropout, *rng);
  }
  return nn::linear(ps, "text_head/l2", h);
}

Vec encode_text(ParamStore& ps, const TextEncoderConfig& cfg,
                const TextPromptCorpus& corpus, const std::string& text,
                bool use_lora) {
  Tensor out =
      encode_text_tensor(ps, cfg, corpus.token_ids(text), use_lora, false);
  return out.value().row(0).transpose();
}

Tensor text_event_logits(ParamStore& ps, const TextEncoderConfig& cfg,
                         const std::vector<int>& token_ids, bool train_mode,
                         Rng* rng) {
  Tensor cls = text_cls_state(ps, cfg, token_ids, /*use_lora=*/false,
                              train_mode, rng);
  return nn::linear(ps, "text_cls_head", cls);
}

// ---- enrollment-audio prompts -------------------------------------------

void init_speaker_embedder(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                           int n_train_speakers, Rng& rng) {
  if (cfg.d_a < 1 || cfg.hidden < 1 || cfg.d_out < 1)
    throw ConfigError("init_speaker_embedder: invalid dimensions");
  if (n_train_speakers < 2)
    throw ConfigError("init_speaker_embedder: need >= 2 speakers");
  nn::init_linear(ps, "spk/l1", 2 * cfg.d_a, cfg.hidden, rng);
  nn::init_linear(ps, "spk/l2", cfg.hidden, cfg.d_out, rng);
  nn::init_linear(ps, "spk_cls", cfg.d_out, n_train_speakers, rng);
}

Tensor encode_audio_prompt_tensor(ParamStore& ps,
                                  const SpeakerEmbedderConfig& cfg,
                                  const Mat& enrollment) {
  if (enrollment.rows() < 10)
    throw InputError("encode_audio_prompt: enrollment needs >= 10 frames, got " +
                     std::to_string(enrollment.rows()));
  if (enrollment.cols() != cfg.d_a)
    throw InputError("encode_audio_prompt: expected " +
                     std::to_string(cfg.d_a) + " feature dims");
  Tensor x = Tensor::constant(enrollment);
  Tensor pooled = concat_cols({mean_rows(x), std_rows(x)});
  Tensor h = gelu(nn::linear(ps, "spk/l1", pooled));
  return nn::linear(ps, "spk/l2", h);
}

Vec encode_audio_prompt(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                        const Mat& enrollment) {
  return encode_audio_prompt_tensor(ps, cfg, enrollment).value().row(0).transpose();
}

Tensor speaker_logits(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                      const Mat& segment) {
  Tensor emb = encode_audio_prompt_tensor(ps, cfg, segment);
  return nn::linear(ps, "spk_cls", emb);
}

// ---- face prompts ---------------------------------------------------------

void init_face_encoder(ParamStore& ps, const FaceEncoderConfig& cfg,
                       std::uint64_t world_seed) {
  if (cfg.d_face < 1 || cfg.d_emb < 1)
    throw ConfigError("init_face_encoder: invalid dimensions");
  Rng rng(hash_combine(world_seed, "face_enc"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_face));
  ps.add("face_enc/w", rng.normal_mat(cfg.d_emb, cfg.d_face) * scale);
  ps.add("face_enc/b", (rng.normal_mat(1, cfg.d_emb) * 0.1));
  ps.set_trainable("face_enc", false);
}

Vec encode_face(const ParamStore& ps, const FaceEncoderConfig& cfg,
                const Vec& face_obs) {
  if (face_obs.size() != cfg.d_face)
    throw InputError("encode_face: expected dimension " +
                     std::to_string(cfg.d_face));
  const Mat& w = ps.at("face_enc/w").value();
  const Mat& b = ps.at("face_enc/b").value();
  Vec pre = w * face_obs + b.row(0).transpose();
  for (Eigen::Index i = 0; i < pre.size(); ++i)
    pre(i) = 0.5 * pre(i) * (1.0 + std::erf(pre(i) / std::sqrt(2.0)));
  return pre;
}

void init_aligner(ParamStore& ps, const AlignerConfig& cfg, Rng& rng) {
  if (cfg.d_in < 1 || cfg.d_out < 1)
    throw ConfigError("init_aligner: invalid dimensions");
  nn::init_linear(ps, "aligner/l1", cfg.d_in, cfg.h1, rng);
  nn::init_linear(ps, "aligner/l2", cfg.h1, cfg.h2, rng);
  nn::init_linear(ps, "aligner/l3", cfg.h2, cfg.h3, rng);
  nn::init_linear(ps, "aligner/l4", cfg.h3, cfg.h4, rng);
  nn::init_linear(ps, "aligner/proj", cfg.h4, cfg.d_out, rng);
}

Tensor align_face_tensor(ParamStore& ps, const AlignerConfig& cfg,
                         const Tensor& raw_face) {
  if (raw_face.cols() != cfg.d_in)
    throw InputError("align_face: expected dimension " +
                     std::to_string(cfg.d_in));
  Tensor h = gelu(nn::linear(ps, "aligner/l1", raw_face));
  h = gelu(nn::linear(ps, "aligner/l2", h));
  h = gelu(nn::linear(ps, "aligner/l3", h));
  h = nn::linear(ps, "aligner/l4", h);  // GeLU sits between layers only
  return nn::linear(ps, "aligner/proj", h);
}

Vec align_face(ParamStore& ps, const AlignerConfig& cfg, const Vec& raw_face) {
  Tensor x = Tensor::constant(raw_face.transpose());
  return align_face_tensor(ps, cfg, x).value().row(0).transpose();
}

double cross_modal_score(const Vec& voice_emb, const Vec& aligned_face_emb) {
  if (voice_emb.size() != aligned_face_emb.size())
    throw InputError("cross_modal_score: dimension mismatch");
  const double nv = voice_emb.norm();
  const double nf = aligned_face_emb.norm();
  if (nv < 1e-12 || nf < 1e-12)
    throw InputError("cross_modal_score: zero-norm embedding");
  return voice_emb.dot(aligned_face_emb) / (nv * nf);
}

}  // namespace mmtsd
