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

#include "mmtsd/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace mmtsd {
namespace {

// Strength of the per-gender voice offset relative to the identity part of
// the signature (whose entries are ~N(0, 1)). Large enough that gender is
// an easy linear cue, small enough not to drown identity.
constexpr double kGenderOffsetScale = 0.75;

// Minimum forward progress of the turn cursor, in seconds. An overlap draw
// larger than the current turn would otherwise move the cursor backwards.
constexpr double kMinAdvanceS = 0.01;

std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return hash_combine(h, bits);
}

void mark_midpoint_frames(MatU8& activity, int row, double start_s,
                          double end_s, double frame_rate) {
  const int frames = static_cast<int>(activity.cols());
  const int lo = std::max(0, static_cast<int>(std::floor(start_s * frame_rate)) - 1);
  const int hi = std::min(frames - 1, static_cast<int>(std::ceil(end_s * frame_rate)) + 1);
  for (int t = lo; t <= hi; ++t) {
    const double mid = (t + 0.5) / frame_rate;
    if (mid >= start_s && mid < end_s) activity(row, t) = 1;
  }
}

}  // namespace

const char* to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

int WorldConfig::frames() const {
  return static_cast<int>(std::lround(duration_s * frame_rate));
}

std::uint64_t WorldConfig::content_hash() const {
  std::uint64_t h = hash_combine(0xcbf29ce484222325ull, seed);
  h = hash_combine(h, static_cast<std::uint64_t>(d_id));
  h = hash_combine(h, static_cast<std::uint64_t>(d_a));
  h = hash_combine(h, static_cast<std::uint64_t>(d_face));
  h = hash_double(h, frame_rate);
  h = hash_double(h, duration_s);
  h = hash_double(h, noise_std);
  h = hash_double(h, face_noise);
  h = hash_double(h, turn_mean_s);
  h = hash_double(h, turn_sigma);
  h = hash_double(h, pause_mean_s);
  h = hash_double(h, overlap_prob);
  h = hash_double(h, overlap_mean_s);
  h = hash_combine(h, static_cast<std::uint64_t>(num_speakers));
  return h;
}

void WorldConfig::validate() const {
  if (d_id < 1 || d_a < 1 || d_face < 1)
    throw ConfigError("WorldConfig: dimensions must be >= 1");
  if (frame_rate <= 0) throw ConfigError("WorldConfig: frame_rate must be > 0");
  if (duration_s <= 0 || turn_mean_s <= 0 || pause_mean_s <= 0 ||
      overlap_mean_s <= 0)
    throw ConfigError("WorldConfig: durations must be > 0");
  if (turn_sigma <= 0) throw ConfigError("WorldConfig: turn_sigma must be > 0");
  if (noise_std < 0 || face_noise < 0)
    throw ConfigError("WorldConfig: noise levels must be >= 0");
  if (overlap_prob < 0 || overlap_prob > 1)
    throw ConfigError("WorldConfig: overlap_prob must be in [0, 1]");
  if (num_speakers < 1)
    throw ConfigError("WorldConfig: num_speakers must be >= 1");
}

std::string to_string(Attribute a) {
  switch (a) {
    case Attribute::gender: return "gender";
    case Attribute::counter: return "counter";
    case Attribute::keynote: return "keynote";
    case Attribute::speaker_id: return "speaker_id";
    case Attribute::face_id: return "face_id";
    case Attribute::included_id: return "included_id";
    case Attribute::excluded_id: return "excluded_id";
  }
  throw LookupError("unknown attribute enum value");
}

Attribute attribute_from_string(const std::string& name) {
  if (name == "gender") return Attribute::gender;
  if (name == "counter") return Attribute::counter;
  if (name == "keynote") return Attribute::keynote;
  if (name == "speaker_id") return Attribute::speaker_id;
  if (name == "face_id") return Attribute::face_id;
  if (name == "included_id") return Attribute::included_id;
  if (name == "excluded_id") return Attribute::excluded_id;
  throw LookupError("unknown attribute: " + name);
}

std::vector<SpeakerProfile> make_world(const WorldConfig& config,
                                       int n_speakers) {
  config.validate();
  if (n_speakers < 1) throw ConfigError("make_world: n_speakers must be >= 1");

  // World-level structure is drawn once from a dedicated stream.
  Rng world(hash_combine(config.seed, "world"));
  const double id_scale = 1.0 / std::sqrt(static_cast<double>(config.d_id));
  const Mat a_v = world.normal_mat(config.d_a, config.d_id) * id_scale;
  const Vec b_f = world.normal_vec(config.d_a) * kGenderOffsetScale;
  const Vec b_m = world.normal_vec(config.d_a) * kGenderOffsetScale;
  const Mat a_f = world.normal_mat(config.d_face, config.d_id) * id_scale;

  // Each speaker has its own substream so a prefix of the pool is stable
  // under growing n_speakers.
  std::vector<SpeakerProfile> profiles;
  profiles.reserve(static_cast<std::size_t>(n_speakers));
  for (int i = 0; i < n_speakers; ++i) {
    Rng sr = world.fork(static_cast<std::uint64_t>(i));
    SpeakerProfile p;
    p.speaker_id = i;
    p.z = sr.normal_vec(config.d_id);
    p.gender = p.z(0) >= 0.0 ? Gender::F : Gender::M;
    p.voice_signature = a_v * p.z + (p.gender == Gender::F ? b_f : b_m);
    p.face_params = a_f * p.z;
    profiles.push_back(std::move(p));
  }
  return profiles;
}

MatU8 simulate_turns(const WorldConfig& config,
                     const std::vector<SpeakerProfile>& speakers, Rng& rng) {
  config.validate();
  const int s_count = static_cast<int>(speakers.size());
  if (s_count != config.num_speakers)
    throw InputError("simulate_turns: expected " +
                     std::to_string(config.num_speakers) + " speakers, got " +
                     std::to_string(s_count));
  const int frames = config.frames();
  // Mean of lognormal(mu, sigma) is exp(mu + sigma^2/2); solve for mu so
  // the configured turn_mean_s is the actual mean turn length.
  const double turn_mu =
      std::log(config.turn_mean_s) - 0.5 * config.turn_sigma * config.turn_sigma;

  for (int attempt = 0; attempt < 100; ++attempt) {
    MatU8 activity = MatU8::Zero(s_count, frames);
    double cursor = 0.0;
    int prev = -1;
    while (cursor < config.duration_s) {
      int speaker = 0;
      if (s_count > 1) {
        // Uniform over the others; the same speaker never follows itself.
        if (prev < 0) {
          speaker = static_cast<int>(rng.uniform_int(s_count));
        } else {
          speaker = static_cast<int>(rng.uniform_int(s_count - 1));
          if (speaker >= prev) ++speaker;
        }
      }
      const double turn_len = rng.lognormal(turn_mu, config.turn_sigma);
      const double start = cursor;
      const double end = start + turn_len;
      mark_midpoint_frames(activity, speaker, start,
                           std::min(end, config.duration_s),
                           config.frame_rate);
      double next_start;
      if (rng.uniform() < config.overlap_prob) {
        next_start = end - rng.exponential(config.overlap_mean_s);
      } else {
        next_start = end + rng.exponential(config.pause_mean_s);
      }
      cursor = std::max(next_start, start + kMinAdvanceS);
      prev = speaker;
    }
    bool all_active = true;
    for (int s = 0; s < s_count; ++s) {
      if (activity.row(s).sum() == 0) {
        all_active = false;
        break;
      }
    }
    if (all_active) return activity;
  }
  throw SimulationError(
      "simulate_turns: a speaker had no active frame after 100 attempts");
}

Mat render_speech_frames(const MatU8& activity,
                         const std::vector<SpeakerProfile>& speakers,
                         double noise_std, Rng& rng) {
  const int s_count = static_cast<int>(activity.rows());
  const int frames = static_cast<int>(activity.cols());
  if (static_cast<int>(speakers.size()) != s_count)
    throw InputError("render_speech_frames: activity rows != speaker count");
  if (noise_std < 0)
    throw ConfigError("render_speech_frames: noise_std must be >= 0");
  const int d_a =
      speakers.empty() ? 0 : static_cast<int>(speakers[0].voice_signature.size());
  for (const auto& p : speakers)
    if (p.voice_signature.size() != d_a)
      throw InputError("render_speech_frames: inconsistent signature sizes");

  Mat features = rng.normal_mat(frames, d_a) * noise_std;
  for (int s = 0; s < s_count; ++s) {
    const Vec& sig = speakers[static_cast<std::size_t>(s)].voice_signature;
    for (int t = 0; t < frames; ++t)
      if (activity(s, t)) features.row(t) += sig.transpose();
  }
  return features;
}

Vec render_face_observation(const SpeakerProfile& profile, bool aug,
                            std::uint64_t seed, double face_noise) {
  if (face_noise < 0)
    throw ConfigError("render_face_observation: face_noise must be >= 0");
  Rng rng(hash_combine(hash_combine(seed, "face"),
                       static_cast<std::uint64_t>(profile.speaker_id)));
  const int d = static_cast<int>(profile.face_params.size());
  Vec obs = profile.face_params + rng.normal_vec(d) * face_noise;
  if (aug) {
    // Feature-vector analogs of image corruption: random coordinate
    // dropout, then additive smoothing noise.
    for (int i = 0; i < d; ++i)
      if (rng.uniform() < 0.2) obs(i) = 0.0;
    obs += rng.normal_vec(d) * face_noise;
  }
  return obs;
}

namespace {

// Index of the activity row for a decimal speaker-id value.
int row_for_value(const ConversationSample& sample, const std::string& value) {
  std::size_t used = 0;
  int id = 0;
  try {
    id = std::stoi(value, &used);
  } catch (const std::exception&) {
    throw LookupError("unknown speaker value: '" + value + "'");
  }
  if (used != value.size())
    throw LookupError("unknown speaker value: '" + value + "'");
  for (std::size_t s = 0; s < sample.speaker_ids.size(); ++s)
    if (sample.speaker_ids[s] == id) return static_cast<int>(s);
  throw LookupError("speaker " + value + " is not in sample " +
                    sample.sample_id);
}

const SpeakerProfile& profile_for_id(
    const std::vector<SpeakerProfile>& profiles, int id) {
  for (const auto& p : profiles)
    if (p.speaker_id == id) return p;
  throw LookupError("speaker " + std::to_string(id) + " is not in the pool");
}

}  // namespace

EventTrack derive_event_track(const ConversationSample& sample,
                              const std::vector<SpeakerProfile>& profiles,
                              Attribute attribute, const std::string& value) {
  const int s_count = static_cast<int>(sample.activity.rows());
  const int frames = static_cast<int>(sample.activity.cols());
  EventTrack track;
  track.attribute = attribute;
  track.value = value;
  track.labels.assign(static_cast<std::size_t>(frames), 0);

  switch (attribute) {
    case Attribute::gender: {
      Gender want;
      if (value == "F") want = Gender::F;
      else if (value == "M") want = Gender::M;
      else throw LookupError("unknown gender value: '" + value + "'");
      for (int s = 0; s < s_count; ++s) {
        const auto& p = profile_for_id(profiles, sample.speaker_ids[s]);
        if (p.gender != want) continue;
        for (int t = 0; t < frames; ++t)
          if (sample.activity(s, t)) track.labels[t] = 1;
      }
      break;
    }
    case Attribute::counter: {
      int want;
      if (value == "non_speech") want = 0;
      else if (value == "single") want = 1;
      else if (value == "overlap") want = 2;
      else throw LookupError("unknown counter value: '" + value + "'");
      for (int t = 0; t < frames; ++t) {
        int active = 0;
        for (int s = 0; s < s_count; ++s) active += sample.activity(s, t);
        const int kind = active >= 2 ? 2 : active;
        track.labels[static_cast<std::size_t>(t)] = kind == want ? 1 : 0;
      }
      break;
    }
    case Attribute::keynote: {
      // Most active frames wins; ties broken by lowest speaker_id. Rows are
      // scanned in speaker_id order (ascending), so strict > implements it.
      int best_row = 0;
      long best_total = -1;
      for (int s = 0; s < s_count; ++s) {
        const long total = sample.activity.row(s).cast<long>().sum();
        if (total > best_total) {
          best_total = total;
          best_row = s;
        }
      }
      for (int t = 0; t < frames; ++t)
        track.labels[static_cast<std::size_t>(t)] = sample.activity(best_row, t);
      track.value = std::to_string(sample.speaker_ids[best_row]);
      break;
    }
    case Attribute::speaker_id:
    case Attribute::face_id:
    case Attribute::included_id: {
      const int row = row_for_value(sample, value);
      for (int t = 0; t < frames; ++t)
        track.labels[static_cast<std::size_t>(t)] = sample.activity(row, t);
      break;
    }
    case Attribute::excluded_id: {
      const int row = row_for_value(sample, value);
      for (int t = 0; t < frames; ++t)
        track.labels[static_cast<std::size_t>(t)] =
            sample.activity(row, t) ? 0 : 1;
      break;
    }
  }
  return track;
}

Mat augment_frames(const Mat& features, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.p_noise < 0 || cfg.p_noise > 1 || cfg.p_rir < 0 || cfg.p_rir > 1)
    throw ConfigError("augment_frames: probabilities must be in [0, 1]");
  if (cfg.snr_db_min > cfg.snr_db_max)
    throw ConfigError("augment_frames: snr_db_min > snr_db_max");
  if (cfg.rir_strength < 0 || cfg.rir_strength > 1)
    throw ConfigError("augment_frames: rir_strength must be in [0, 1]");
  if (cfg.p_noise > 0 && cfg.noise_pool.size() < 3)
    throw ConfigError("augment_frames: babble needs a pool of >= 3 signatures");

  Mat out = features;
  const int frames = static_cast<int>(out.rows());
  const int d = static_cast<int>(out.cols());

  if (rng.uniform() < cfg.p_noise && frames > 0) {
    Vec babble = Vec::Zero(d);
    for (int k = 0; k < 3; ++k) {
      const auto& sig = cfg.noise_pool[static_cast<std::size_t>(
          rng.uniform_int(cfg.noise_pool.size()))];
      if (sig.size() != d)
        throw InputError("augment_frames: noise pool dimension mismatch");
      babble += sig;
    }
    // Amplitude-modulated babble, scaled so noise energy / signal energy
    // equals 10^(-snr/10).
    Mat noise(frames, d);
    for (int t = 0; t < frames; ++t)
      noise.row(t) = babble.transpose() * rng.normal();
    const double snr_db = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);
    const double signal_e = out.squaredNorm();
    const double noise_e = noise.squaredNorm();
    if (noise_e > 1e-12 && signal_e > 0) {
      const double scale =
          std::sqrt(signal_e * std::pow(10.0, -snr_db / 10.0) / noise_e);
      out += noise * scale;
    }
  }

  if (rng.uniform() < cfg.p_rir && frames > 0) {
    // Random decaying 3-tap kernel, unit L1. Strength 0 yields [1, 0, 0].
    double k0 = 1.0;
    double k1 = rng.uniform(0.0, cfg.rir_strength);
    double k2 = rng.uniform(0.0, k1 > 0 ? k1 : 0.0);
    const double l1 = k0 + k1 + k2;
    k0 /= l1;
    k1 /= l1;
    k2 /= l1;
    Mat filtered(frames, d);
    for (int t = 0; t < frames; ++t) {
      filtered.row(t) = out.row(t) * k0;
      if (t >= 1) filtered.row(t) += out.row(t - 1) * k1;
      if (t >= 2) filtered.row(t) += out.row(t - 2) * k2;
    }
    out = filtered;
  }
  return out;
}

ConversationSample make_sample(const WorldConfig& config,
                               const std::vector<SpeakerProfile>& pool,
                               std::uint64_t sample_index) {
  config.validate();
  if (static_cast<int>(pool.size()) < config.num_speakers)
    throw InputError("make_sample: pool smaller than num_speakers");

  Rng sample_rng(hash_combine(config.seed, sample_index));
  Rng select_rng = sample_rng.fork("select");
  Rng turns_rng = sample_rng.fork("turns");
  Rng feature_rng = sample_rng.fork("features");

  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  select_rng.shuffle(order);
  order.resize(static_cast<std::size_t>(config.num_speakers));
  std::sort(order.begin(), order.end());

  std::vector<SpeakerProfile> chosen;
  chosen.reserve(order.size());
  for (int idx : order) chosen.push_back(pool[static_cast<std::size_t>(idx)]);

  ConversationSample sample;
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt_%06llu",
                static_cast<unsigned long long>(sample_index));
  sample.sample_id = buf;
  sample.activity = simulate_turns(config, chosen, turns_rng);
  sample.features =
      render_speech_frames(sample.activity, chosen, config.noise_std, feature_rng);
  for (const auto& p : chosen) sample.speaker_ids.push_back(p.speaker_id);
  sample.config_ref = config.content_hash();
  return sample;
}

double overlap_ratio(const std::vector<MatU8>& activities) {
  long speech = 0, overlapped = 0;
  for (const auto& a : activities) {
    for (int t = 0; t < a.cols(); ++t) {
      int active = 0;
      for (int s = 0; s < a.rows(); ++s) active += a(s, t);
      if (active >= 1) ++speech;
      if (active >= 2) ++overlapped;
    }
  }
  if (speech == 0) throw MetricError("overlap_ratio: no speech frames");
  return static_cast<double>(overlapped) / static_cast<double>(speech);
}

}  // namespace mmtsd
