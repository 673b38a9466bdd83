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

// Prompt encoders: text (frozen Transformer base + LoRA + projection head),
// enrollment audio (frozen speaker embedder), and face (fixed random
// encoder + voice-face aligner). Every encoder emits a D-dimensional
// prompt embedding.

#ifndef MMTSD_PROMPTENC_HPP
#define MMTSD_PROMPTENC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mmtsd/corpus.hpp"
#include "mmtsd/lora.hpp"
#include "mmtsd/nn.hpp"
#include "mmtsd/tensor.hpp"

namespace mmtsd {

// ---- text prompts -------------------------------------------------------

struct TextEncoderConfig {
  int width = 64;      // base transformer width
  int layers = 2;      // base depth
  int heads = 4;
  int ff = 256;        // base feed-forward width
  int max_tokens = 32; // longer prompts are truncated
  int d_out = 192;     // prompt embedding dimension D
  int lora_rank = 4;
  double lora_alpha = 8.0;
  double dropout = 0.1;
};

// Registers the text encoder parameters:
//   text_base/...     token/position/CLS embeddings, encoder layers, final
//                     layernorm — pretrained then frozen
//   text_lora/l{i}/{q,v}/...  adapters on every base layer's query/value
//   text_head/...     CLS projection head (linear, ReLU, dropout, linear->D)
//   text_cls_head/... event-classification head, used only for pretraining
// vocab_size must already include the OOV bucket.
void init_text_encoder(ParamStore& ps, const TextEncoderConfig& cfg,
                       int vocab_size, int n_events, Rng& rng);

// Pooled CLS state (1 x width) after the base layers. use_lora toggles the
// adapters; train_mode enables dropout (rng required then).
Tensor text_cls_state(ParamStore& ps, const TextEncoderConfig& cfg,
                      const std::vector<int>& token_ids, bool use_lora,
                      bool train_mode = false, Rng* rng = nullptr);

// Full prompt embedding (1 x D): CLS state -> linear -> ReLU -> dropout ->
// linear. Empty token list throws InputError.
Tensor encode_text_tensor(ParamStore& ps, const TextEncoderConfig& cfg,
                          const std::vector<int>& token_ids, bool use_lora,
                          bool train_mode = false, Rng* rng = nullptr);

// Eval-mode convenience over a corpus vocabulary.
Vec encode_text(ParamStore& ps, const TextEncoderConfig& cfg,
                const TextPromptCorpus& corpus, const std::string& text,
                bool use_lora);

// Event-classification logits (1 x n_events) for base pretraining.
Tensor text_event_logits(ParamStore& ps, const TextEncoderConfig& cfg,
                         const std::vector<int>& token_ids,
                         bool train_mode = false, Rng* rng = nullptr);

// ---- enrollment-audio prompts -------------------------------------------

struct SpeakerEmbedderConfig {
  int d_a = 32;      // input feature dimension
  int hidden = 128;  // perceptron hidden width
  int d_out = 192;   // prompt embedding dimension D
};

// Registers spk/... (the embedder) and spk_cls/... (the identity
// classification head used only for pretraining).
void init_speaker_embedder(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                           int n_train_speakers, Rng& rng);

// Mean+std pooling over time, then a 2-layer perceptron to D. Enrollment
// must have >= 10 frames (InputError otherwise).
Tensor encode_audio_prompt_tensor(ParamStore& ps,
                                  const SpeakerEmbedderConfig& cfg,
                                  const Mat& enrollment);
Vec encode_audio_prompt(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                        const Mat& enrollment);

// Identity logits (1 x n_train_speakers) for pretraining.
Tensor speaker_logits(ParamStore& ps, const SpeakerEmbedderConfig& cfg,
                      const Mat& segment);

// ---- face prompts ---------------------------------------------------------

struct FaceEncoderConfig {
  int d_face = 64;  // worldsim face observation dimension
  int d_emb = 128;  // raw face embedding dimension
};

// Fixed random affine + GeLU, drawn once from the world seed and frozen
// for its lifetime. Registers face_enc/{w,b} as non-trainable.
void init_face_encoder(ParamStore& ps, const FaceEncoderConfig& cfg,
                       std::uint64_t world_seed);

// Raw face embedding (deterministic; no gradients flow into face_enc).
Vec encode_face(const ParamStore& ps, const FaceEncoderConfig& cfg,
                const Vec& face_obs);

struct AlignerConfig {
  int d_in = 128;  // raw face embedding dimension
  int h1 = 1024;
  int h2 = 1024;
  int h3 = 256;
  int h4 = 512;
  int d_out = 192;  // prompt embedding dimension D
};

// Registers aligner/l1..l4 and aligner/proj: four affine layers with GeLU
// between them, then a projection to D.
void init_aligner(ParamStore& ps, const AlignerConfig& cfg, Rng& rng);

// Batched aligner forward (rows = raw face embeddings).
Tensor align_face_tensor(ParamStore& ps, const AlignerConfig& cfg,
                         const Tensor& raw_face);
Vec align_face(ParamStore& ps, const AlignerConfig& cfg, const Vec& raw_face);

// Cosine similarity; higher means same person. Zero-norm inputs throw
// InputError.
double cross_modal_score(const Vec& voice_emb, const Vec& aligned_face_emb);

}  // namespace mmtsd

#endif  // MMTSD_PROMPTENC_HPP
