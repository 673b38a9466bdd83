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

// Training stages: stand-in encoder pretraining (speaker embedder, text
// base), the voice-face aligner stage, and the multi-task MM-TSD stage with
// Adam, the decaying learning-rate schedule, and best-validation checkpoint
// selection. Also the finite-difference gradient-check harness.
//
// Every stage derives all randomness from TrainConfig::seed, so identical
// (seed, data) reruns produce identical parameters under the
// single-threaded contract.

#ifndef MMTSD_TRAINING_HPP
#define MMTSD_TRAINING_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmtsd/corpus.hpp"
#include "mmtsd/nn.hpp"
#include "mmtsd/promptenc.hpp"
#include "mmtsd/tensor.hpp"
#include "mmtsd/tsdmodel.hpp"
#include "mmtsd/worldsim.hpp"

namespace mmtsd {

enum class TrainStage { pretrain_text, pretrain_speaker, aligner, mmtsd };

const char* to_string(TrainStage s);

struct TrainConfig {
  double lr0 = 1e-4;   // initial learning rate
  double decay = 0.95; // per-epoch multiplicative factor (5% decrease)
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;
  TrainStage stage = TrainStage::mmtsd;

  void validate() const;  // ConfigError on lr0 <= 0, decay outside (0,1], ...
};

// lr0 * decay^epoch. Requires epoch >= 0 (ConfigError otherwise).
double lr_schedule(double lr0, double decay, int epoch);

// ---- optimizer -----------------------------------------------------------

// Adam moment buffers, keyed by parameter name and created lazily on the
// first step that sees the parameter.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Mat> m;  // first moments
  std::map<std::string, Mat> v;  // second moments
};

// One bias-corrected Adam update from the currently accumulated gradients
// of every trainable parameter. Frozen parameters are skipped entirely
// (no moment buffers, no update). Gradients are left untouched; callers
// zero them when starting the next accumulation.
void adam_step(ParamStore& ps, AdamState& state, double lr);

// Deep copies of every parameter value / restore them in place. Used for
// best-validation checkpoint selection and zero-epoch identity laws.
std::map<std::string, Mat> snapshot_params(const ParamStore& ps);
void restore_params(ParamStore& ps, const std::map<std::string, Mat>& snap);

// ---- metrics log ---------------------------------------------------------

struct TrainLogEntry {
  int epoch = 0;
  TrainStage stage = TrainStage::mmtsd;
  Split split = Split::train;
  double loss = 0.0;
  double lr = 0.0;
};

// CSV with header `epoch,stage,split,loss,lr`.
void save_metrics_csv(const std::string& path,
                      const std::vector<TrainLogEntry>& log);

// ---- stand-in encoder pretraining -----------------------------------------

struct PretrainSpeakerResult {
  double heldout_accuracy = 0.0;
  std::vector<TrainLogEntry> log;
};

// Softmax cross-entropy identity classification over rendered
// single-speaker segments (2 s at the world frame rate). Requires >= 50
// speakers (ConfigError) and an embedder already initialized for exactly
// speakers.size() classes. Freezes spk/ and spk_cls/ on return; the
// classification head is then unused downstream.
PretrainSpeakerResult pretrain_speaker_embedder(
    ParamStore& ps, const SpeakerEmbedderConfig& ecfg, const WorldConfig& wcfg,
    const std::vector<SpeakerProfile>& speakers, const TrainConfig& cfg);

struct PretrainTextResult {
  double val_accuracy = 0.0;
  std::vector<TrainLogEntry> log;
};

// Event classification over the corpus train split; validation accuracy is
// measured on the val split in eval mode. Freezes text_base/ and
// text_cls_head/ on return; LoRA adapters and the projection head stay
// trainable for the MM-TSD stage.
PretrainTextResult pretrain_text_base(ParamStore& ps,
                                      const TextEncoderConfig& tcfg,
                                      const TextPromptCorpus& corpus,
                                      const TrainConfig& cfg);

// ---- voice-face aligner stage ---------------------------------------------

struct AlignerPair {
  Vec voice;     // frozen speaker embedding (d_out)
  Vec raw_face;  // frozen face-encoder output (aligner d_in)
};

struct AlignerTrainResult {
  double heldout_mse_before = 0.0;  // random-init baseline
  double heldout_mse_after = 0.0;
  std::vector<TrainLogEntry> log;
};

// MSE regression from raw face embeddings onto the paired speaker
// embeddings. Empty train_pairs throws InputError. Freezes aligner/ on
// return.
AlignerTrainResult train_aligner(ParamStore& ps, const AlignerConfig& acfg,
                                 const std::vector<AlignerPair>& train_pairs,
                                 const std::vector<AlignerPair>& heldout_pairs,
                                 const TrainConfig& cfg);

// ---- MM-TSD stage ----------------------------------------------------------

// One decoder input token. Text prompts are re-encoded in the graph every
// step so gradients reach the LoRA adapters and the projection head;
// embeddings from frozen encoders enter as constants; `projected` routes a
// raw embedding through a named trainable linear (the no-aligner ablation
// baseline).
struct PromptToken {
  enum class Kind { text, constant, projected };
  Kind kind = Kind::constant;
  std::vector<int> token_ids;  // Kind::text
  Vec embedding;               // Kind::constant (D) or Kind::projected input
  std::string projection;      // Kind::projected: linear parameter prefix
};

// A loss-carrying decoder row. In an audio-text pair only the text token is
// scored; the audio token conditions it through the shared mask block.
struct ScoredEvent {
  int prompt_row = 0;
  std::string modality;  // "text" | "audio" | "face" | "audio-text"
  EventTrack track;
};

struct PromptedExample {
  std::string sample_id;
  Mat features;  // T x d_a
  std::vector<PromptToken> prompts;
  std::vector<int> groups;  // block sizes (1 or 2), summing to prompts.size()
  std::vector<ScoredEvent> events;
};

// Structural validation (DatasetError): at least one scored event, group
// sizes consistent with the prompt count, prompt rows in range, and every
// track exactly features.rows() long.
void validate_example(const PromptedExample& ex);

// Full forward pass for one example: per-frame event probabilities, one row
// per scored event (rows align with ex.events).
Tensor prompted_probs_tensor(ParamStore& ps, const ModelConfig& mcfg,
                             const TextEncoderConfig& tcfg,
                             const PromptedExample& ex, bool train_mode,
                             Rng* rng);

// Eq. (2) loss over the scored rows.
Tensor prompted_loss(ParamStore& ps, const ModelConfig& mcfg,
                     const TextEncoderConfig& tcfg, const PromptedExample& ex,
                     bool train_mode, Rng* rng);

// Eval-mode probability tracks, one row per scored event.
Mat prompted_tracks(ParamStore& ps, const ModelConfig& mcfg,
                    const TextEncoderConfig& tcfg, const PromptedExample& ex);

struct MmTsdResult {
  std::vector<TrainLogEntry> log;
  double best_val_loss = 0.0;
  int best_epoch = -1;
};

// Multi-task training: every example carries one prompt per supported
// event; per epoch the train set is visited in a seed-derived order in
// batches of cfg.batch_size, gradients flow only into trainable parameters
// (the model, LoRA adapters, and projection heads — everything frozen by
// the earlier stages stays fixed), and the parameters with the best
// validation loss are restored into `ps` on return. Zero epochs return
// immediately with `ps` untouched.
MmTsdResult train_mm_tsd(ParamStore& ps, const ModelConfig& mcfg,
                         const TextEncoderConfig& tcfg,
                         const std::vector<PromptedExample>& train_set,
                         const std::vector<PromptedExample>& val_set,
                         const TrainConfig& cfg);

// ---- gradient checking -----------------------------------------------------

struct GradProbeConfig {
  int t = 6;        // frames
  int p = 3;        // prompts (grouped 1+2)
  int d_model = 8;  // probe width
  int d_a = 3;
  int heads = 2;
  int ff = 16;
  double h = 1e-5;  // central-difference step
  std::uint64_t seed = 0;
  bool linear_only = false;  // affine + MSE probe (exact-quadratic case)
};

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;   // one per parameter, sorted by name
  double worst = 0.0;                    // max over entries
  double zero_perturbation_diff = 0.0;   // |loss() - loss()|, exactly 0
};

// Central finite differences (step h) against analytic gradients on a
// self-contained probe model. linear_only exercises a single affine layer
// under MSE, where central differences are exact up to roundoff; the full
// probe runs the entire encoder-decoder pipeline under the BCE loss.
GradCheckReport grad_check(const GradProbeConfig& probe);

}  // namespace mmtsd

#endif  // MMTSD_TRAINING_HPP
