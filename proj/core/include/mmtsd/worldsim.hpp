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

#ifndef MMTSD_WORLDSIM_HPP
#define MMTSD_WORLDSIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mmtsd/common.hpp"
#include "mmtsd/rng.hpp"

namespace mmtsd {

// Synthetic multimodal world. Speakers are points in a latent identity
// space; their voice signatures and face parameters are two fixed linear
// views of the same latent vector, so gender, identity, and voice-face
// association are all exactly recoverable (and therefore testable).

enum class Gender { F, M };

const char* to_string(Gender g);

struct SpeakerProfile {
  int speaker_id = 0;
  Vec z;               // latent identity, R^{d_id}
  Gender gender = Gender::F;
  Vec voice_signature; // A_v z + b_gender, R^{d_a}
  Vec face_params;     // A_f z, R^{d_face}
};

struct WorldConfig {
  std::uint64_t seed = 0;
  int d_id = 16;
  int d_a = 32;
  int d_face = 64;
  double frame_rate = 25.0;   // frames / second
  double duration_s = 30.0;   // utterance length
  double noise_std = 0.1;     // speech feature noise sigma
  double face_noise = 0.05;   // face observation noise sigma
  double turn_mean_s = 2.0;   // mean turn length (lognormal)
  double turn_sigma = 0.6;    // lognormal shape
  double pause_mean_s = 0.5;  // mean inter-turn gap (exponential)
  double overlap_prob = 0.52; // chance the next turn starts early; tuned so
                              // the overlapped-speech ratio lands at ~0.098
  double overlap_mean_s = 0.4;
  int num_speakers = 2;

  int frames() const;                 // round(duration_s * frame_rate)
  std::uint64_t content_hash() const; // stable hash for config_ref
  void validate() const;              // throws ConfigError
};

struct ConversationSample {
  std::string sample_id;
  Mat features;                  // T x d_a
  MatU8 activity;                // S x T, row s = speaker_ids[s]
  std::vector<int> speaker_ids;  // length S, ascending
  std::uint64_t config_ref = 0;  // WorldConfig::content_hash()
};

// Event attributes a prompt can target.
enum class Attribute {
  gender,
  counter,
  keynote,
  speaker_id,
  face_id,
  included_id,
  excluded_id,
};

std::string to_string(Attribute a);
Attribute attribute_from_string(const std::string& name);  // LookupError

struct EventTrack {
  Attribute attribute = Attribute::gender;
  std::string value;                // "F"/"M", counter kind, or speaker id
  std::vector<std::uint8_t> labels; // length T
};

// Draws the speaker pool: the world mixing matrices A_v, A_f and the two
// gender offsets are fixed by config.seed; each speaker's latent z is an
// independent standard normal. Deterministic given (seed, n_speakers); the
// first k profiles agree across calls with different n_speakers.
std::vector<SpeakerProfile> make_world(const WorldConfig& config,
                                       int n_speakers);

// Simulates round-robin turn taking with a random next speaker (never the
// same speaker twice in a row), lognormal turn lengths with mean
// turn_mean_s, exponential pauses, and with probability overlap_prob an
// exponential head start for the next turn. Resamples until every speaker
// has at least one active frame; throws SimulationError after 100 attempts.
// Frames are active when their midpoint lies inside a turn interval.
MatU8 simulate_turns(const WorldConfig& config,
                     const std::vector<SpeakerProfile>& speakers, Rng& rng);

// Frame t = sum of active voice signatures + N(0, noise_std^2 I). Silence
// frames are pure noise. Noise is drawn for every frame up front, so the
// noise field does not depend on the activity pattern.
Mat render_speech_frames(const MatU8& activity,
                         const std::vector<SpeakerProfile>& speakers,
                         double noise_std, Rng& rng);

// face_params + N(0, face_noise^2 I); with aug additionally applies random
// coordinate dropout (p = 0.2) and a second additive smoothing noise — the
// feature-vector analogs of blur / grayscale corruption. Deterministic in
// (profile, aug, seed).
Vec render_face_observation(const SpeakerProfile& profile, bool aug,
                            std::uint64_t seed, double face_noise = 0.05);

// Per-frame labels for one (attribute, value):
//   gender:      >= 1 active speaker of that gender ("F" or "M")
//   counter:     "non_speech" / "single" / "overlap" by active count 0/1/>=2
//   keynote:     activity row of the speaker with the most active frames,
//                ties broken by lowest speaker_id (value ignored)
//   speaker_id / face_id / included_id: that speaker's activity row
//   excluded_id: elementwise complement of that row (silence is positive)
// value for identity attributes is the decimal speaker id. Unknown values
// throw LookupError.
EventTrack derive_event_track(const ConversationSample& sample,
                              const std::vector<SpeakerProfile>& profiles,
                              Attribute attribute, const std::string& value);

struct AugmentConfig {
  double p_noise = 0.0;     // chance of additive babble noise
  double p_rir = 0.0;       // chance of channel filtering
  double snr_db_min = 15.0; // babble SNR range (dB)
  double snr_db_max = 25.0;
  double rir_strength = 0.5;    // upper bound on trailing tap magnitude
  std::vector<Vec> noise_pool;  // held-out voice signatures for babble
};

// With probability p_noise adds amplitude-modulated babble (the sum of 3
// random pool signatures) scaled to a uniform SNR in [snr_db_min,
// snr_db_max]; with probability p_rir convolves each channel causally with
// a random decaying 3-tap kernel normalized to unit L1. rir_strength = 0
// draws the identity kernel [1, 0, 0].
Mat augment_frames(const Mat& features, const AugmentConfig& cfg, Rng& rng);

// Assembles one conversation: selects num_speakers distinct profiles from
// the pool, simulates turns, renders features. The RNG stream is seeded by
// hash_combine(config.seed, sample_index), so samples are reproducible
// bit-for-bit regardless of generation order.
ConversationSample make_sample(const WorldConfig& config,
                               const std::vector<SpeakerProfile>& pool,
                               std::uint64_t sample_index);

// Overlapped-speech ratio: frames with >= 2 active speakers over frames
// with >= 1, aggregated across samples. Used to tune overlap_prob.
double overlap_ratio(const std::vector<MatU8>& activities);

}  // namespace mmtsd

#endif  // MMTSD_WORLDSIM_HPP
