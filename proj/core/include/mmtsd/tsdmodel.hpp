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

// The target-speech-diarization network: affine front end + Transformer
// encoder over speech frames, a prompt-as-query Transformer decoder with a
// block-diagonal attention mask, the dot-product/sigmoid prediction head,
// and the frame-averaged BCE loss.

#ifndef MMTSD_TSDMODEL_HPP
#define MMTSD_TSDMODEL_HPP

#include <string>
#include <vector>

#include "mmtsd/nn.hpp"
#include "mmtsd/tensor.hpp"
#include "mmtsd/worldsim.hpp"

namespace mmtsd {

struct ModelConfig {
  int d_a = 32;       // input feature dimension
  int d_model = 192;  // width D (also the prompt embedding dimension)
  int enc_layers = 4;
  int dec_layers = 4;
  int heads = 8;
  int ff = 768;       // feed-forward width
  double dropout = 0.1;
  bool use_positions = true;  // sinusoidal positions on encoder input
};

// Registers model/front/{w,b}, model/enc/l{i}/..., model/enc/ln_f,
// model/dec/l{i}/..., model/dec/ln_f.
void init_model(ParamStore& ps, const ModelConfig& cfg, Rng& rng);

// Frame representations F^e (T x D): affine front end, optional sinusoidal
// positions, enc_layers self-attention layers, final layernorm.
// Deterministic in eval mode (train_mode=false).
Tensor encode_speech(ParamStore& ps, const ModelConfig& cfg,
                     const Mat& features, bool train_mode = false,
                     Rng* rng = nullptr);

// Block-diagonal boolean decoder mask from prompt group sizes. Group sizes
// must be 1 (independent prompt) or 2 (audio-text pair); anything else
// throws ConfigError.
MatU8 build_decoder_mask(const std::vector<int>& prompt_groups);

// Boolean mask -> additive attention mask (0 allowed / -inf blocked).
Mat mask_to_additive(const MatU8& allowed);

// Decoder states F^d (P x D): each layer applies masked self-attention over
// the prompt tokens, cross-attention with F^e as keys/values, and the
// feed-forward block; final layernorm.
Tensor decode_prompts(ParamStore& ps, const ModelConfig& cfg,
                      const Tensor& prompts, const Tensor& memory,
                      const MatU8& mask, bool train_mode = false,
                      Rng* rng = nullptr);

// Eq. (1): Y_hat[p, t] = sigmoid(F^d_p . F^e_t), shape P x T.
Tensor predict_tracks(const Tensor& f_dec, const Tensor& f_enc);

// Eq. (2): mean over prompts of the frame-averaged binary cross-entropy,
// probabilities clamped to [1e-7, 1 - 1e-7]. Track lengths must equal the
// prediction's frame count (InputError otherwise).
Tensor bce_loss(const Tensor& pred, const std::vector<EventTrack>& tracks);

// Event tracks stacked into a P x T 0/1 target matrix.
Mat tracks_to_targets(const std::vector<EventTrack>& tracks);

}  // namespace mmtsd

#endif  // MMTSD_TSDMODEL_HPP
