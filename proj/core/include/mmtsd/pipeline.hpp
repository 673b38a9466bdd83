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

// End-to-end run orchestration on top of the leaf modules: dataset
// synthesis from a RunConfig, enrollment cutting, per-utterance prompt
// assembly (all supported events per sample), the four training stages,
// split evaluation into EvalRows, and single-prompt inference. The command
// line and the acceptance suite both drive runs exclusively through this
// module, so a run is a pure function of its RunConfig.
//
// Speaker id spaces: the training pool owns ids [0, dataset.speakers); the
// unseen-speaker test pool is generated from seed + test_seed_offset and
// its ids are shifted by +dataset.speakers so the two pools never collide
// in a shared dataset directory.

#ifndef MMTSD_PIPELINE_HPP
#define MMTSD_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmtsd/dataset_io.hpp"
#include "mmtsd/metrics.hpp"
#include "mmtsd/nn.hpp"
#include "mmtsd/report.hpp"
#include "mmtsd/runconfig.hpp"
#include "mmtsd/training.hpp"

namespace mmtsd {

// ---- run context -----------------------------------------------------------

// A parsed config plus everything deterministically derived from it that
// the stages share: both speaker pools and the text corpus. Rebuilding the
// context from the same config always yields bitwise-identical pools.
struct RunContext {
  RunConfig cfg;
  WorldConfig test_world;  // cfg.world with seed + dataset.test_seed_offset
  std::vector<SpeakerProfile> train_pool;  // ids 0 .. speakers-1
  std::vector<SpeakerProfile> test_pool;   // ids speakers .. +test_speakers-1
  TextPromptCorpus corpus;                 // builtin templates @ world seed
};

RunContext make_run_context(const RunConfig& cfg);

// Profile lookup across both pools (LookupError for unknown ids).
const SpeakerProfile& profile_of(const RunContext& ctx, int speaker_id);

// ---- synthesis -------------------------------------------------------------

// All three splits of a run: dataset.utterances samples from the training
// pool — the last round(val_fraction * utterances) of them tagged val —
// followed by dataset.test_utterances samples ("test_*") from the test
// pool. Features are f32-quantized at build time, so saving and reloading
// the result reproduces it bitwise.
std::vector<DatasetSample> synthesize_dataset(const RunContext& ctx);

// Test-pool mixtures whose speakers all share one gender (alternating F/M
// per sample), for the aligner study: gender is uninformative within each
// mixture, so identity prompts must carry the separation. Sample ids are
// "samegender_*" and the split tag is test.
std::vector<DatasetSample> synthesize_same_gender_test(const RunContext& ctx,
                                                       int utterances);

// ---- enrollment ------------------------------------------------------------

// Enrollment features for one speaker: frames where the speaker is active
// alone, cut from a seeded choice among the other samples containing the
// same profile. Falls back to solo frames of `exclude_sample_id` itself,
// then to a freshly rendered 2 s solo segment, whenever no donor offers
// at least 10 solo frames. Returns 10..50 rows; deterministic in `rng`.
Mat cut_enrollment(const RunContext& ctx,
                   const std::vector<DatasetSample>& dataset, int speaker_id,
                   const std::string& exclude_sample_id, Rng& rng);

// ---- prompt assembly -------------------------------------------------------

struct AssemblyOptions {
  Split text_split = Split::train;  // corpus split paraphrases come from
  bool use_aligner = true;   // face prompts through the aligner; otherwise
                             // raw face embeddings through the trainable
                             // "model/faceproj" projection (the no-aligner
                             // baseline)
  bool augment_faces = false;       // augmented face observations
  AugmentConfig audio_aug;          // applied when p_noise or p_rir > 0
  std::uint64_t seed = 0;           // assembly randomness stream
  int force_pair_kind = -1;     // -1 coin, 0 include_enrolled, 1 exclude
  int force_pair_speaker = -1;  // -1 seeded choice, else a speaker of the
                                // sample (LookupError otherwise)
};

// One PromptedExample carrying every supported event of the sample:
//   rows 0..5   text prompts (gender F, gender M, counter non_speech /
//               single / overlap, keynote), singleton blocks
//   next S      enrollment-audio prompts, one per speaker (speaker_id)
//   next S      face prompts, one per speaker (face_id)
//   final two   an audio-text pair — enrollment token plus an include- or
//               exclude-enrolled command (50/50) — scored on the text row
// All randomness (paraphrase draws, enrollment donors, the include/exclude
// coin) derives from (opt.seed, index), so assembly is reproducible.
PromptedExample assemble_example(ParamStore& ps, const RunContext& ctx,
                                 const std::vector<DatasetSample>& dataset,
                                 std::size_t index,
                                 const AssemblyOptions& opt);

// Every sample of `split`, with opt.text_split forced to the matching
// corpus split (train samples get train paraphrases, and so on).
std::vector<PromptedExample> assemble_split(
    ParamStore& ps, const RunContext& ctx,
    const std::vector<DatasetSample>& dataset, Split split,
    AssemblyOptions opt);

// ---- parameters and stages -------------------------------------------------

// Registers every parameter group of a run: the core model plus the
// "model/faceproj" baseline projection, the text encoder, the speaker
// embedder (classifying dataset.speakers identities), the face encoder
// (from the world seed), and the aligner. Initialization randomness comes
// from cfg.train.seed, so two runs of the same config start identically.
void init_run_params(ParamStore& ps, const RunContext& ctx);

// Re-applies the freeze contract after a checkpoint round-trip (loads come
// back fully trainable): text_base, text_cls_head, spk, spk_cls, aligner,
// and face_enc become non-trainable; the model, LoRA adapters, and the
// text projection head stay trainable.
void apply_freeze_contract(ParamStore& ps);

// One stage's outcome: its training log plus named summary statistics.
struct StageResult {
  std::vector<TrainLogEntry> log;
  std::map<std::string, double> stats;
};

// Text-base and speaker-embedder pretraining (stats: "text_val_accuracy",
// "speaker_heldout_accuracy"). Freezes both stand-ins.
StageResult run_pretrain(ParamStore& ps, const RunContext& ctx);

// Same-identity (voice embedding, raw face embedding) pairs from freshly
// rendered 2 s solo segments and face observations, `per_speaker` of each
// per profile, embedded with the frozen encoders.
std::vector<AlignerPair> make_aligner_pairs(
    ParamStore& ps, const RunContext& ctx,
    const std::vector<SpeakerProfile>& pool, int per_speaker,
    std::uint64_t seed);

// Aligner stage: MSE regression onto voice embeddings, training pairs from
// the training pool and held-out pairs from the test pool (stats:
// "heldout_mse_before", "heldout_mse_after"). Freezes the aligner.
StageResult run_align(ParamStore& ps, const RunContext& ctx);

// MM-TSD stage over the dataset's train/val splits (stats:
// "best_val_loss", "best_epoch"). use_aligner selects the face-prompt
// route for both training and the restored best checkpoint.
StageResult run_train(ParamStore& ps, const RunContext& ctx,
                      const std::vector<DatasetSample>& dataset,
                      bool use_aligner);

// ---- evaluation ------------------------------------------------------------

struct EvalOptions {
  Split split = Split::test;       // dataset split to evaluate
  Split text_split = Split::test;  // unseen paraphrases by default
  bool use_aligner = true;
  std::uint64_t seed = 0;          // assembly stream
  MetricOptions metrics;           // binarization + DER settings
};

// Pools every assembled event's probabilities over the split into one
// ScoredFrames per (modality, attribute) and reports AP/AUC/EER/ACC rows,
// plus one (audio, diarization) row whose der cell is the unweighted mean
// of per-sample diarizer-mode DER (every enrollment-audio track binarized
// into a hypothesis segmentation). Metric cells whose pooled labels are
// single-class stay empty.
std::vector<EvalRow> evaluate_model(ParamStore& ps, const RunContext& ctx,
                                    const std::vector<DatasetSample>& dataset,
                                    const EvalOptions& opt);

// Reference segmentation of a sample: run-length encoding of each activity
// row, speakers named by their decimal ids.
Segmentation activity_to_segments(const MatU8& activity,
                                  const std::vector<int>& speaker_ids,
                                  double frame_rate);

// ---- inference -------------------------------------------------------------

// A single prompt specification: text only, enrollment only, face only, or
// an audio-text pair when both text and enrollment are present.
struct InferSpec {
  std::string text;              // empty = no text prompt
  std::string enroll_sample_id;  // donor sample for the enrollment cut
  int enroll_speaker = -1;       // >= 0 enables the enrollment prompt
  int face_speaker = -1;         // >= 0 enables the face prompt
  bool use_aligner = true;
  std::uint64_t seed = 0;
};

struct InferOutput {
  std::vector<double> probabilities;  // length T
  Segmentation segments;              // binarized track
  std::vector<std::uint8_t> truth;    // ground-truth labels when the prompt
                                      // maps onto a known event, else empty
};

// Runs one prompt against one sample. Text is matched against the corpus
// to recover its event key (and with enrollment, the include/exclude
// intent); unmatched free text still infers but returns no truth.
// Exactly one of {text, enrollment, face, text+enrollment} must be
// specified (InputError otherwise; LookupError for unknown ids).
InferOutput infer_track(ParamStore& ps, const RunContext& ctx,
                        const std::vector<DatasetSample>& dataset,
                        const std::string& sample_id, const InferSpec& spec,
                        const MetricOptions& metrics);

// Dataset lookup helper (LookupError when absent).
const DatasetSample& sample_by_id(const std::vector<DatasetSample>& dataset,
                                  const std::string& sample_id);

}  // namespace mmtsd

#endif  // MMTSD_PIPELINE_HPP
