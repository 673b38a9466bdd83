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

// Run configuration: one UTF-8 file of `[section]` headers and `key =
// value` lines drives every command. Sections and keys mirror the config
// structs one to one; every key has the struct default, so an empty file
// is a valid configuration. Unknown sections or keys are rejected with
// their line number — silent typos must not change an experiment.
//
//   [world]    WorldConfig: seed, d_id, d_a, d_face, frame_rate,
//              duration_s, noise_std, face_noise, turn_mean_s, turn_sigma,
//              pause_mean_s, overlap_prob, overlap_mean_s, num_speakers
//   [dataset]  speakers, utterances, val_fraction, test_utterances,
//              test_speakers, test_seed_offset
//   [model]    ModelConfig: d_a, d_model, enc_layers, dec_layers, heads,
//              ff, dropout, use_positions
//   [text]     TextEncoderConfig: width, layers, heads, ff, max_tokens,
//              d_out, lora_rank, lora_alpha, dropout
//   [speaker]  SpeakerEmbedderConfig: d_a, hidden, d_out
//   [face]     FaceEncoderConfig: d_face, d_emb
//   [aligner]  AlignerConfig: d_in, h1, h2, h3, h4, d_out
//   [train]    TrainConfig: lr0, decay, epochs, batch_size, seed,
//              plus stage overrides text_epochs, speaker_epochs, aligner_epochs
//   [metrics]  threshold, median_window, collar_s
//
// `#` begins a comment (whole line or trailing); blank lines are skipped.

#ifndef MMTSD_RUNCONFIG_HPP
#define MMTSD_RUNCONFIG_HPP

#include <cstdint>
#include <string>

#include "mmtsd/promptenc.hpp"
#include "mmtsd/training.hpp"
#include "mmtsd/tsdmodel.hpp"
#include "mmtsd/worldsim.hpp"

namespace mmtsd {

struct MetricOptions {
  double threshold = 0.5;  // binarization threshold (>= convention)
  int median_window = 11;  // odd median-filter width in frames
  double collar_s = 0.0;   // DER collar around reference boundaries
};

struct DatasetSizing {
  int speakers = 200;       // training world pool
  int utterances = 500;     // train + val utterances
  double val_fraction = 0.1;
  int test_utterances = 100;
  int test_speakers = 50;   // fresh pool for the unseen-speaker world
  std::uint64_t test_seed_offset = 1;  // test world seed = world.seed + this
};

// Per-stage epoch overrides (keys of [train]); -1 falls back to
// train.epochs, which always drives the MM-TSD stage itself.
struct StageEpochs {
  int text_epochs = -1;
  int speaker_epochs = -1;
  int aligner_epochs = -1;
};

struct RunConfig {
  WorldConfig world;
  DatasetSizing dataset;
  ModelConfig model;
  TextEncoderConfig text;
  SpeakerEmbedderConfig speaker;
  FaceEncoderConfig face;
  AlignerConfig aligner;
  TrainConfig train;
  StageEpochs stages;
  MetricOptions metrics;

  // Field-level checks plus cross-section consistency: the model, speaker
  // embedder, and world must agree on d_a; the face encoder on d_face; the
  // aligner input on the face embedding width; and every prompt embedding
  // (text d_out, speaker d_out, aligner d_out) on model.d_model. Throws
  // ConfigError.
  void validate() const;
};

// Parses configuration text / a file. Syntax or unknown-name violations
// throw ConfigError with the line number; the result is validated before
// being returned.
RunConfig parse_runconfig(const std::string& text);
RunConfig load_runconfig(const std::string& path);

}  // namespace mmtsd

#endif  // MMTSD_RUNCONFIG_HPP
