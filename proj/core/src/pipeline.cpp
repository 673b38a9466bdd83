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

#include "mmtsd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "mmtsd/metrics.hpp"
#include "mmtsd/promptenc.hpp"
#include "mmtsd/tsdmodel.hpp"

namespace mmtsd {

namespace {

std::string indexed_id(const char* stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06d", stem, index);
  return buf;
}

bool contains_id(const std::vector<int>& ids, int id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// The activity/profile view of a dataset sample that event derivation
// consumes. Features stay empty: label derivation is a pure function of
// the activity pattern.
ConversationSample track_view(const DatasetSample& ds) {
  ConversationSample cs;
  cs.sample_id = ds.sample_id;
  cs.activity = ds.activity;
  cs.speaker_ids = ds.speaker_ids;
  return cs;
}

// Frames of `ds` where `speaker_id` is active alone, in time order, at
// most max_rows of them. Zero rows when the speaker is absent or never
// solo.
Mat solo_frames(const DatasetSample& ds, int speaker_id, int max_rows) {
  auto it = std::find(ds.speaker_ids.begin(), ds.speaker_ids.end(), speaker_id);
  if (it == ds.speaker_ids.end()) return Mat(0, ds.features.cols());
  const Eigen::Index row = it - ds.speaker_ids.begin();

  std::vector<Eigen::Index> frames;
  for (Eigen::Index t = 0; t < ds.activity.cols(); ++t) {
    if (!ds.activity(row, t)) continue;
    int active = 0;
    for (Eigen::Index s = 0; s < ds.activity.rows(); ++s)
      active += ds.activity(s, t) ? 1 : 0;
    if (active == 1) {
      frames.push_back(t);
      if (static_cast<int>(frames.size()) >= max_rows) break;
    }
  }

  Mat out(static_cast<Eigen::Index>(frames.size()), ds.features.cols());
  for (std::size_t i = 0; i < frames.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = ds.features.row(frames[i]);
  return out;
}

// A freshly rendered 2 s solo segment for profiles that offer no usable
// solo frames anywhere in the dataset.
Mat render_enrollment(const RunContext& ctx, const SpeakerProfile& profile,
                      Rng& rng) {
  const int frames = std::max(
      10, static_cast<int>(std::lround(2.0 * ctx.cfg.world.frame_rate)));
  MatU8 activity = MatU8::Ones(1, frames);
  std::vector<SpeakerProfile> solo{profile};
  Rng render_rng = rng.fork("render");
  return quantize_features_f32(render_speech_frames(
      activity, solo, ctx.cfg.world.noise_std, render_rng));
}

constexpr int kMinEnrollFrames = 10;
constexpr int kMaxEnrollFrames = 50;

// Segments rendered per training-pool speaker for the aligner stage.
constexpr int kAlignerPairsPerSpeaker = 4;

// Maps a corpus event key onto the (attribute, value) pair its track
// scores. Identity keys need the enrolled speaker; without one they have
// no ground truth and map to nothing.
struct TextEventTarget {
  Attribute attribute = Attribute::gender;
  std::string value;
};

std::optional<TextEventTarget> text_event_target(const std::string& event_key,
                                                 int enroll_speaker) {
  if (event_key == "female") return TextEventTarget{Attribute::gender, "F"};
  if (event_key == "male") return TextEventTarget{Attribute::gender, "M"};
  if (event_key == "non_speech" || event_key == "single" ||
      event_key == "overlap")
    return TextEventTarget{Attribute::counter, event_key};
  if (event_key == "keynote")
    return TextEventTarget{Attribute::keynote, std::string()};
  if (enroll_speaker >= 0 && event_key == "include_enrolled")
    return TextEventTarget{Attribute::included_id,
                           std::to_string(enroll_speaker)};
  if (enroll_speaker >= 0 && event_key == "exclude_enrolled")
    return TextEventTarget{Attribute::excluded_id,
                           std::to_string(enroll_speaker)};
  return std::nullopt;
}

}  // namespace

// ---- run context -----------------------------------------------------------

RunContext make_run_context(const RunConfig& cfg) {
  cfg.validate();

  RunContext ctx;
  ctx.cfg = cfg;
  ctx.test_world = cfg.world;
  ctx.test_world.seed = cfg.world.seed + cfg.dataset.test_seed_offset;
  ctx.train_pool = make_world(cfg.world, cfg.dataset.speakers);
  ctx.test_pool = make_world(ctx.test_world, cfg.dataset.test_speakers);
  for (SpeakerProfile& profile : ctx.test_pool)
    profile.speaker_id += cfg.dataset.speakers;
  ctx.corpus = build_text_corpus(builtin_templates(), cfg.world.seed);
  return ctx;
}

const SpeakerProfile& profile_of(const RunContext& ctx, int speaker_id) {
  for (const SpeakerProfile& p : ctx.train_pool)
    if (p.speaker_id == speaker_id) return p;
  for (const SpeakerProfile& p : ctx.test_pool)
    if (p.speaker_id == speaker_id) return p;
  throw LookupError("pipeline: unknown speaker id " +
                    std::to_string(speaker_id));
}

// ---- synthesis -------------------------------------------------------------

namespace {

DatasetSample to_dataset_sample(ConversationSample&& cs, double duration_s,
                                Split split) {
  DatasetSample s;
  s.sample_id = std::move(cs.sample_id);
  s.features = quantize_features_f32(cs.features);
  s.activity = std::move(cs.activity);
  s.speaker_ids = std::move(cs.speaker_ids);
  s.duration_s = duration_s;
  s.split = split;
  return s;
}

}  // namespace

std::vector<DatasetSample> synthesize_dataset(const RunContext& ctx) {
  const DatasetSizing& ds = ctx.cfg.dataset;
  const int n_val =
      static_cast<int>(std::lround(ds.val_fraction * ds.utterances));

  std::vector<DatasetSample> out;
  out.reserve(static_cast<std::size_t>(ds.utterances + ds.test_utterances));

  for (int i = 0; i < ds.utterances; ++i) {
    ConversationSample cs = make_sample(ctx.cfg.world, ctx.train_pool,
                                        static_cast<std::uint64_t>(i));
    const Split split =
        (i >= ds.utterances - n_val) ? Split::val : Split::train;
    out.push_back(
        to_dataset_sample(std::move(cs), ctx.cfg.world.duration_s, split));
  }
  for (int j = 0; j < ds.test_utterances; ++j) {
    ConversationSample cs = make_sample(ctx.test_world, ctx.test_pool,
                                        static_cast<std::uint64_t>(j));
    cs.sample_id = indexed_id("test_", j);
    out.push_back(to_dataset_sample(std::move(cs),
                                    ctx.test_world.duration_s, Split::test));
  }
  return out;
}

std::vector<DatasetSample> synthesize_same_gender_test(const RunContext& ctx,
                                                       int utterances) {
  std::vector<DatasetSample> out;
  out.reserve(static_cast<std::size_t>(std::max(utterances, 0)));

  for (int j = 0; j < utterances; ++j) {
    const Gender gender = (j % 2 == 0) ? Gender::F : Gender::M;
    std::vector<SpeakerProfile> pool;
    for (const SpeakerProfile& p : ctx.test_pool)
      if (p.gender == gender) pool.push_back(p);
    if (static_cast<int>(pool.size()) < ctx.cfg.world.num_speakers)
      throw InputError(std::string("synthesize_same_gender_test: test pool "
                                   "has too few ") +
                       to_string(gender) + " speakers");

    ConversationSample cs =
        make_sample(ctx.test_world, pool,
                    hash_combine(static_cast<std::uint64_t>(j), "same_gender"));
    cs.sample_id = indexed_id("samegender_", j);
    out.push_back(to_dataset_sample(std::move(cs),
                                    ctx.test_world.duration_s, Split::test));
  }
  return out;
}

// ---- enrollment ------------------------------------------------------------

Mat cut_enrollment(const RunContext& ctx,
                   const std::vector<DatasetSample>& dataset, int speaker_id,
                   const std::string& exclude_sample_id, Rng& rng) {
  const SpeakerProfile& profile = profile_of(ctx, speaker_id);

  std::vector<std::size_t> donors;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].sample_id == exclude_sample_id) continue;
    if (contains_id(dataset[i].speaker_ids, speaker_id)) donors.push_back(i);
  }
  rng.shuffle(donors);

  for (std::size_t i : donors) {
    Mat cut = solo_frames(dataset[i], speaker_id, kMaxEnrollFrames);
    if (cut.rows() >= kMinEnrollFrames) return cut;
  }

  // No donor offers enough solo frames; fall back to the sample itself
  // (the prompt then leaks its own frames, which only matters for
  // degenerate datasets) and finally to a fresh render.
  for (const DatasetSample& s : dataset) {
    if (s.sample_id != exclude_sample_id) continue;
    Mat cut = solo_frames(s, speaker_id, kMaxEnrollFrames);
    if (cut.rows() >= kMinEnrollFrames) return cut;
    break;
  }
  return render_enrollment(ctx, profile, rng);
}

// ---- prompt assembly -------------------------------------------------------

PromptedExample assemble_example(ParamStore& ps, const RunContext& ctx,
                                 const std::vector<DatasetSample>& dataset,
                                 std::size_t index,
                                 const AssemblyOptions& opt) {
  if (index >= dataset.size())
    throw InputError("assemble_example: sample index out of range");
  const DatasetSample& ds = dataset[index];
  const ConversationSample cs = track_view(ds);

  std::vector<SpeakerProfile> profiles;
  profiles.reserve(ds.speaker_ids.size());
  for (int id : ds.speaker_ids) profiles.push_back(profile_of(ctx, id));

  const Rng rng =
      Rng(hash_combine(opt.seed, "assemble")).fork(static_cast<std::uint64_t>(index));
  Rng text_rng = rng.fork("text");
  Rng enroll_rng = rng.fork("enroll");
  Rng pair_rng = rng.fork("pair");
  Rng aug_rng = rng.fork("aug");

  const bool augment_audio =
      opt.audio_aug.p_noise > 0.0 || opt.audio_aug.p_rir > 0.0;

  PromptedExample ex;
  ex.sample_id = ds.sample_id;
  ex.features = ds.features;

  auto pick_paraphrase = [&](const std::string& event_key) {
    const auto entries = ctx.corpus.split_entries(opt.text_split, event_key);
    if (entries.empty())
      throw LookupError("assemble_example: corpus split has no '" + event_key +
                        "' paraphrases");
    const CorpusEntry* entry =
        entries[text_rng.uniform_int(entries.size())];
    return ctx.corpus.token_ids(entry->text);
  };

  auto add_text_event = [&](const std::string& event_key, Attribute attribute,
                            const std::string& value) {
    PromptToken token;
    token.kind = PromptToken::Kind::text;
    token.token_ids = pick_paraphrase(event_key);
    ex.prompts.push_back(std::move(token));
    ex.groups.push_back(1);

    ScoredEvent event;
    event.prompt_row = static_cast<int>(ex.prompts.size()) - 1;
    event.modality = "text";
    event.track = derive_event_track(cs, profiles, attribute, value);
    ex.events.push_back(std::move(event));
  };

  add_text_event("female", Attribute::gender, "F");
  add_text_event("male", Attribute::gender, "M");
  add_text_event("non_speech", Attribute::counter, "non_speech");
  add_text_event("single", Attribute::counter, "single");
  add_text_event("overlap", Attribute::counter, "overlap");
  add_text_event("keynote", Attribute::keynote, std::string());

  auto enrollment_embedding = [&](int speaker_id, Rng& stream) {
    Mat cut = cut_enrollment(ctx, dataset, speaker_id, ds.sample_id, stream);
    if (augment_audio) cut = augment_frames(cut, opt.audio_aug, aug_rng);
    return encode_audio_prompt(ps, ctx.cfg.speaker, cut);
  };

  for (int id : ds.speaker_ids) {
    PromptToken token;
    token.kind = PromptToken::Kind::constant;
    token.embedding = enrollment_embedding(id, enroll_rng);
    ex.prompts.push_back(std::move(token));
    ex.groups.push_back(1);

    ScoredEvent event;
    event.prompt_row = static_cast<int>(ex.prompts.size()) - 1;
    event.modality = "audio";
    event.track = derive_event_track(cs, profiles, Attribute::speaker_id,
                                     std::to_string(id));
    ex.events.push_back(std::move(event));
  }

  for (int id : ds.speaker_ids) {
    const SpeakerProfile& profile = profile_of(ctx, id);
    const std::uint64_t face_seed =
        hash_combine(hash_combine(hash_combine(opt.seed, "face"),
                                  static_cast<std::uint64_t>(index)),
                     static_cast<std::uint64_t>(id));
    const Vec observation = render_face_observation(
        profile, opt.augment_faces, face_seed, ctx.cfg.world.face_noise);
    const Vec raw = encode_face(ps, ctx.cfg.face, observation);

    PromptToken token;
    if (opt.use_aligner) {
      token.kind = PromptToken::Kind::constant;
      token.embedding = align_face(ps, ctx.cfg.aligner, raw);
    } else {
      token.kind = PromptToken::Kind::projected;
      token.embedding = raw;
      token.projection = "model/faceproj";
    }
    ex.prompts.push_back(std::move(token));
    ex.groups.push_back(1);

    ScoredEvent event;
    event.prompt_row = static_cast<int>(ex.prompts.size()) - 1;
    event.modality = "face";
    event.track = derive_event_track(cs, profiles, Attribute::face_id,
                                     std::to_string(id));
    ex.events.push_back(std::move(event));
  }

  int pair_speaker = ds.speaker_ids[pair_rng.uniform_int(ds.speaker_ids.size())];
  if (opt.force_pair_speaker >= 0) {
    if (!contains_id(ds.speaker_ids, opt.force_pair_speaker))
      throw LookupError("assemble_example: speaker " +
                        std::to_string(opt.force_pair_speaker) +
                        " is not part of sample '" + ds.sample_id + "'");
    pair_speaker = opt.force_pair_speaker;
  }
  bool exclude = pair_rng.uniform() < 0.5;
  if (opt.force_pair_kind == 0) exclude = false;
  if (opt.force_pair_kind == 1) exclude = true;

  PromptToken audio_token;
  audio_token.kind = PromptToken::Kind::constant;
  audio_token.embedding = enrollment_embedding(pair_speaker, pair_rng);
  ex.prompts.push_back(std::move(audio_token));

  PromptToken command_token;
  command_token.kind = PromptToken::Kind::text;
  command_token.token_ids =
      pick_paraphrase(exclude ? "exclude_enrolled" : "include_enrolled");
  ex.prompts.push_back(std::move(command_token));
  ex.groups.push_back(2);

  ScoredEvent pair_event;
  pair_event.prompt_row = static_cast<int>(ex.prompts.size()) - 1;
  pair_event.modality = "audio-text";
  pair_event.track = derive_event_track(
      cs, profiles,
      exclude ? Attribute::excluded_id : Attribute::included_id,
      std::to_string(pair_speaker));
  ex.events.push_back(std::move(pair_event));

  validate_example(ex);
  return ex;
}

std::vector<PromptedExample> assemble_split(
    ParamStore& ps, const RunContext& ctx,
    const std::vector<DatasetSample>& dataset, Split split,
    AssemblyOptions opt) {
  opt.text_split = split;
  std::vector<PromptedExample> out;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (dataset[i].split == split)
      out.push_back(assemble_example(ps, ctx, dataset, i, opt));
  return out;
}

// ---- parameters and stages -------------------------------------------------

void init_run_params(ParamStore& ps, const RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Rng base(hash_combine(cfg.train.seed, "init"));

  Rng model_rng = base.fork("model");
  init_model(ps, cfg.model, model_rng);
  Rng proj_rng = base.fork("faceproj");
  nn::init_linear(ps, "model/faceproj", cfg.face.d_emb, cfg.model.d_model,
                  proj_rng, true);
  Rng text_rng = base.fork("text");
  init_text_encoder(ps, cfg.text, ctx.corpus.vocab_size(),
                    static_cast<int>(event_keys().size()), text_rng);
  Rng speaker_rng = base.fork("speaker");
  init_speaker_embedder(ps, cfg.speaker, cfg.dataset.speakers, speaker_rng);
  init_face_encoder(ps, cfg.face, cfg.world.seed);
  Rng aligner_rng = base.fork("aligner");
  init_aligner(ps, cfg.aligner, aligner_rng);
}

void apply_freeze_contract(ParamStore& ps) {
  // "spk" covers both spk/ and spk_cls/.
  for (const char* prefix :
       {"text_base", "text_cls_head", "spk", "aligner", "face_enc"})
    ps.set_trainable(prefix, false);
}

StageResult run_pretrain(ParamStore& ps, const RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  StageResult result;

  TrainConfig text_cfg = cfg.train;
  text_cfg.stage = TrainStage::pretrain_text;
  if (cfg.stages.text_epochs >= 0) text_cfg.epochs = cfg.stages.text_epochs;
  PretrainTextResult text =
      pretrain_text_base(ps, cfg.text, ctx.corpus, text_cfg);
  result.log.insert(result.log.end(), text.log.begin(), text.log.end());
  result.stats["text_val_accuracy"] = text.val_accuracy;

  TrainConfig speaker_cfg = cfg.train;
  speaker_cfg.stage = TrainStage::pretrain_speaker;
  if (cfg.stages.speaker_epochs >= 0)
    speaker_cfg.epochs = cfg.stages.speaker_epochs;
  PretrainSpeakerResult speaker = pretrain_speaker_embedder(
      ps, cfg.speaker, cfg.world, ctx.train_pool, speaker_cfg);
  result.log.insert(result.log.end(), speaker.log.begin(), speaker.log.end());
  result.stats["speaker_heldout_accuracy"] = speaker.heldout_accuracy;

  return result;
}

std::vector<AlignerPair> make_aligner_pairs(
    ParamStore& ps, const RunContext& ctx,
    const std::vector<SpeakerProfile>& pool, int per_speaker,
    std::uint64_t seed) {
  if (per_speaker < 1)
    throw InputError("make_aligner_pairs: per_speaker must be >= 1");

  std::vector<AlignerPair> pairs;
  pairs.reserve(pool.size() * static_cast<std::size_t>(per_speaker));
  const Rng base(hash_combine(seed, "aligner_pairs"));

  for (const SpeakerProfile& profile : pool) {
    const Rng speaker_rng =
        base.fork(static_cast<std::uint64_t>(profile.speaker_id));
    for (int k = 0; k < per_speaker; ++k) {
      Rng segment_rng = speaker_rng.fork(static_cast<std::uint64_t>(k));
      const Mat segment = render_enrollment(ctx, profile, segment_rng);

      const std::uint64_t face_seed = hash_combine(
          hash_combine(seed, "face_obs"),
          hash_combine(static_cast<std::uint64_t>(profile.speaker_id),
                       static_cast<std::uint64_t>(k)));
      const Vec observation = render_face_observation(
          profile, false, face_seed, ctx.cfg.world.face_noise);

      AlignerPair pair;
      pair.voice = encode_audio_prompt(ps, ctx.cfg.speaker, segment);
      pair.raw_face = encode_face(ps, ctx.cfg.face, observation);
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

StageResult run_align(ParamStore& ps, const RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;

  TrainConfig aligner_cfg = cfg.train;
  aligner_cfg.stage = TrainStage::aligner;
  if (cfg.stages.aligner_epochs >= 0)
    aligner_cfg.epochs = cfg.stages.aligner_epochs;

  const auto train_pairs =
      make_aligner_pairs(ps, ctx, ctx.train_pool, kAlignerPairsPerSpeaker,
                         hash_combine(cfg.train.seed, "align_train"));
  const auto heldout_pairs = make_aligner_pairs(
      ps, ctx, ctx.test_pool, 1, hash_combine(cfg.train.seed, "align_heldout"));

  AlignerTrainResult aligned =
      train_aligner(ps, cfg.aligner, train_pairs, heldout_pairs, aligner_cfg);

  StageResult result;
  result.log = std::move(aligned.log);
  result.stats["heldout_mse_before"] = aligned.heldout_mse_before;
  result.stats["heldout_mse_after"] = aligned.heldout_mse_after;
  return result;
}

StageResult run_train(ParamStore& ps, const RunContext& ctx,
                      const std::vector<DatasetSample>& dataset,
                      bool use_aligner) {
  apply_freeze_contract(ps);

  AssemblyOptions opt;
  opt.use_aligner = use_aligner;
  opt.seed = ctx.cfg.train.seed;
  const auto train_set = assemble_split(ps, ctx, dataset, Split::train, opt);
  if (train_set.empty())
    throw InputError("run_train: dataset has no train samples");
  const auto val_set = assemble_split(ps, ctx, dataset, Split::val, opt);
  // A dataset without a val split falls back to selecting on train loss.
  const auto& selection_set = val_set.empty() ? train_set : val_set;

  TrainConfig train_cfg = ctx.cfg.train;
  train_cfg.stage = TrainStage::mmtsd;
  MmTsdResult trained = train_mm_tsd(ps, ctx.cfg.model, ctx.cfg.text,
                                     train_set, selection_set, train_cfg);

  StageResult result;
  result.log = std::move(trained.log);
  result.stats["best_val_loss"] = trained.best_val_loss;
  result.stats["best_epoch"] = trained.best_epoch;
  return result;
}

// ---- evaluation ------------------------------------------------------------

std::vector<EvalRow> evaluate_model(ParamStore& ps, const RunContext& ctx,
                                    const std::vector<DatasetSample>& dataset,
                                    const EvalOptions& opt) {
  AssemblyOptions aopt;
  aopt.text_split = opt.text_split;
  aopt.use_aligner = opt.use_aligner;
  aopt.seed = opt.seed;

  std::map<std::pair<std::string, std::string>, ScoredFrames> pooled;
  double der_sum = 0.0;
  int der_count = 0;

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].split != opt.split) continue;
    const PromptedExample ex = assemble_example(ps, ctx, dataset, i, aopt);
    const Mat tracks = prompted_tracks(ps, ctx.cfg.model, ctx.cfg.text, ex);

    for (std::size_t e = 0; e < ex.events.size(); ++e) {
      const ScoredEvent& event = ex.events[e];
      ScoredFrames& frames =
          pooled[{event.modality, to_string(event.track.attribute)}];
      for (Eigen::Index t = 0; t < tracks.cols(); ++t) {
        frames.scores.push_back(tracks(static_cast<Eigen::Index>(e), t));
        frames.labels.push_back(event.track.labels[static_cast<std::size_t>(t)]);
      }
    }

    // Diarizer mode: each enrollment-audio track becomes one hypothesis
    // speaker.
    Segmentation hypothesis;
    for (std::size_t e = 0; e < ex.events.size(); ++e) {
      if (ex.events[e].modality != "audio") continue;
      std::vector<double> probs(static_cast<std::size_t>(tracks.cols()));
      for (Eigen::Index t = 0; t < tracks.cols(); ++t)
        probs[static_cast<std::size_t>(t)] =
            tracks(static_cast<Eigen::Index>(e), t);
      const Segmentation segments = binarize_track(
          probs, opt.metrics.threshold, opt.metrics.median_window,
          ctx.cfg.world.frame_rate, ex.events[e].track.value);
      hypothesis.insert(hypothesis.end(), segments.begin(), segments.end());
    }
    const Segmentation reference = activity_to_segments(
        dataset[i].activity, dataset[i].speaker_ids, ctx.cfg.world.frame_rate);
    if (!reference.empty()) {
      der_sum += der(reference, hypothesis, ctx.cfg.world.frame_rate,
                     opt.metrics.collar_s);
      ++der_count;
    }
  }

  std::vector<EvalRow> rows;
  const std::string split_tag = to_string(opt.split);
  for (const auto& [key, frames] : pooled) {
    EvalRow row;
    row.modality = key.first;
    row.attribute = key.second;
    row.split = split_tag;
    try {
      row.ap = average_precision(frames);
      row.auc = roc_auc(frames);
      row.eer = eer(frames);
    } catch (const MetricError&) {
      // Single-class pools have no ranking metrics; the cells stay empty.
    }
    row.acc = frame_accuracy(frames, opt.metrics.threshold);
    rows.push_back(std::move(row));
  }

  EvalRow diarization;
  diarization.modality = "audio";
  diarization.attribute = "diarization";
  diarization.split = split_tag;
  if (der_count > 0) diarization.der = der_sum / der_count;
  rows.push_back(std::move(diarization));
  return rows;
}

Segmentation activity_to_segments(const MatU8& activity,
                                  const std::vector<int>& speaker_ids,
                                  double frame_rate) {
  if (activity.rows() != static_cast<Eigen::Index>(speaker_ids.size()))
    throw InputError(
        "activity_to_segments: activity rows do not match speaker ids");
  if (frame_rate <= 0.0)
    throw InputError("activity_to_segments: frame_rate must be > 0");

  Segmentation out;
  for (Eigen::Index s = 0; s < activity.rows(); ++s) {
    const std::string speaker =
        std::to_string(speaker_ids[static_cast<std::size_t>(s)]);
    Eigen::Index t = 0;
    while (t < activity.cols()) {
      if (!activity(s, t)) {
        ++t;
        continue;
      }
      const Eigen::Index onset = t;
      while (t < activity.cols() && activity(s, t)) ++t;
      out.push_back({speaker, static_cast<double>(onset) / frame_rate,
                     static_cast<double>(t - onset) / frame_rate});
    }
  }
  return out;
}

// ---- inference -------------------------------------------------------------

InferOutput infer_track(ParamStore& ps, const RunContext& ctx,
                        const std::vector<DatasetSample>& dataset,
                        const std::string& sample_id, const InferSpec& spec,
                        const MetricOptions& metrics) {
  const DatasetSample& ds = sample_by_id(dataset, sample_id);

  const bool has_text = !spec.text.empty();
  const bool has_enroll = spec.enroll_speaker >= 0;
  const bool has_face = spec.face_speaker >= 0;
  if (!has_text && !has_enroll && !has_face)
    throw InputError("infer_track: no prompt specified");
  if (has_face && (has_text || has_enroll))
    throw InputError(
        "infer_track: a face prompt cannot be combined with text or "
        "enrollment");
  if (!spec.enroll_sample_id.empty() && !has_enroll)
    throw InputError("infer_track: enroll_sample_id without enroll_speaker");

  const ConversationSample cs = track_view(ds);
  std::vector<SpeakerProfile> profiles;
  profiles.reserve(ds.speaker_ids.size());
  for (int id : ds.speaker_ids) profiles.push_back(profile_of(ctx, id));

  const std::size_t n_frames = static_cast<std::size_t>(ds.features.rows());

  PromptedExample ex;
  ex.sample_id = ds.sample_id;
  ex.features = ds.features;

  // The scored event needs a track of the right length even when the
  // prompt has no ground truth; placeholder labels never leave this call.
  EventTrack track;
  track.labels.assign(n_frames, 0);
  bool have_truth = false;
  std::string segment_speaker = "spk";
  std::string modality;

  auto derive_identity_truth = [&](Attribute attribute, int speaker_id) {
    if (contains_id(ds.speaker_ids, speaker_id)) {
      track = derive_event_track(cs, profiles, attribute,
                                 std::to_string(speaker_id));
    } else {
      // The prompt names a speaker who never appears: silence for include
      // prompts, the full sample for exclude prompts.
      track.labels.assign(
          n_frames, attribute == Attribute::excluded_id ? 1 : 0);
    }
    have_truth = true;
  };

  if (has_enroll) {
    (void)profile_of(ctx, spec.enroll_speaker);
    Mat cut;
    if (!spec.enroll_sample_id.empty()) {
      const DatasetSample& donor = sample_by_id(dataset, spec.enroll_sample_id);
      cut = solo_frames(donor, spec.enroll_speaker, kMaxEnrollFrames);
      if (cut.rows() < kMinEnrollFrames)
        throw InputError("infer_track: donor '" + spec.enroll_sample_id +
                         "' offers fewer than 10 solo frames of speaker " +
                         std::to_string(spec.enroll_speaker));
    } else {
      Rng enroll_rng(hash_combine(spec.seed, "infer_enroll"));
      cut = cut_enrollment(ctx, dataset, spec.enroll_speaker, ds.sample_id,
                           enroll_rng);
    }
    PromptToken token;
    token.kind = PromptToken::Kind::constant;
    token.embedding = encode_audio_prompt(ps, ctx.cfg.speaker, cut);
    ex.prompts.push_back(std::move(token));
    segment_speaker = std::to_string(spec.enroll_speaker);
  }

  if (has_text) {
    PromptToken token;
    token.kind = PromptToken::Kind::text;
    token.token_ids = ctx.corpus.token_ids(spec.text);
    ex.prompts.push_back(std::move(token));
  }

  if (has_face) {
    const SpeakerProfile& profile = profile_of(ctx, spec.face_speaker);
    const Vec observation =
        render_face_observation(profile, false,
                                hash_combine(spec.seed, "infer_face"),
                                ctx.cfg.world.face_noise);
    const Vec raw = encode_face(ps, ctx.cfg.face, observation);
    PromptToken token;
    if (spec.use_aligner) {
      token.kind = PromptToken::Kind::constant;
      token.embedding = align_face(ps, ctx.cfg.aligner, raw);
    } else {
      token.kind = PromptToken::Kind::projected;
      token.embedding = raw;
      token.projection = "model/faceproj";
    }
    ex.prompts.push_back(std::move(token));
    segment_speaker = std::to_string(spec.face_speaker);
  }

  ex.groups.assign(1, static_cast<int>(ex.prompts.size()));

  // Ground truth: text prompts are matched against the corpus to recover
  // their event key; identity prompts map directly onto activity rows.
  if (has_text) {
    modality = has_enroll ? "audio-text" : "text";
    for (const CorpusEntry& entry : ctx.corpus.entries) {
      if (entry.text != spec.text) continue;
      const auto target = text_event_target(
          entry.event_key, has_enroll ? spec.enroll_speaker : -1);
      if (target.has_value()) {
        if (target->attribute == Attribute::included_id ||
            target->attribute == Attribute::excluded_id) {
          derive_identity_truth(target->attribute, spec.enroll_speaker);
        } else {
          track = derive_event_track(cs, profiles, target->attribute,
                                     target->value);
          have_truth = true;
        }
      }
      break;
    }
  } else if (has_enroll) {
    modality = "audio";
    derive_identity_truth(Attribute::speaker_id, spec.enroll_speaker);
  } else {
    modality = "face";
    derive_identity_truth(Attribute::face_id, spec.face_speaker);
  }

  ScoredEvent event;
  event.prompt_row = static_cast<int>(ex.prompts.size()) - 1;
  event.modality = modality;
  event.track = track;
  ex.events.push_back(std::move(event));
  validate_example(ex);

  const Mat tracks = prompted_tracks(ps, ctx.cfg.model, ctx.cfg.text, ex);

  InferOutput out;
  out.probabilities.resize(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t)
    out.probabilities[t] = tracks(0, static_cast<Eigen::Index>(t));
  out.segments =
      binarize_track(out.probabilities, metrics.threshold,
                     metrics.median_window, ctx.cfg.world.frame_rate,
                     segment_speaker);
  if (have_truth) out.truth = track.labels;
  return out;
}

const DatasetSample& sample_by_id(const std::vector<DatasetSample>& dataset,
                                  const std::string& sample_id) {
  for (const DatasetSample& s : dataset)
    if (s.sample_id == sample_id) return s;
  throw LookupError("pipeline: unknown sample id '" + sample_id + "'");
}

}  // namespace mmtsd
