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

#include "mmtsd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

namespace mmtsd {
namespace {

// Segments rendered per speaker for embedder pretraining; the last
// kHeldoutSegments of each speaker are the held-out evaluation set.
constexpr int kSegmentsPerSpeaker = 10;
constexpr int kHeldoutSegments = 2;
constexpr double kSegmentSeconds = 2.0;

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return order;
}

int argmax_row(const Mat& row) {
  Eigen::Index best;
  row.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

const char* to_string(TrainStage s) {
  switch (s) {
    case TrainStage::pretrain_text: return "pretrain_text";
    case TrainStage::pretrain_speaker: return "pretrain_speaker";
    case TrainStage::aligner: return "aligner";
    case TrainStage::mmtsd: return "mmtsd";
  }
  throw ConfigError("to_string: unknown TrainStage");
}

void TrainConfig::validate() const {
  if (lr0 <= 0.0) throw ConfigError("TrainConfig: lr0 must be positive");
  if (decay <= 0.0 || decay > 1.0)
    throw ConfigError("TrainConfig: decay must be in (0, 1]");
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
}

double lr_schedule(double lr0, double decay, int epoch) {
  if (epoch < 0) throw ConfigError("lr_schedule: epoch must be >= 0");
  return lr0 * std::pow(decay, epoch);
}

void adam_step(ParamStore& ps, AdamState& state, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (auto& [name, p] : ps.all()) {
    if (!p.requires_grad()) continue;
    const Mat& g = p.grad();
    Mat& m = state.m.try_emplace(name, Mat::Zero(g.rows(), g.cols()))
                 .first->second;
    Mat& v = state.v.try_emplace(name, Mat::Zero(g.rows(), g.cols()))
                 .first->second;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    Mat m_hat = m / bc1;
    Mat v_hat = v / bc2;
    p.mutable_value() -=
        lr * (m_hat.array() / (v_hat.array().sqrt() + state.eps)).matrix();
  }
}

std::map<std::string, Mat> snapshot_params(const ParamStore& ps) {
  std::map<std::string, Mat> snap;
  for (const auto& [name, p] : ps.all()) snap.emplace(name, p.value());
  return snap;
}

void restore_params(ParamStore& ps, const std::map<std::string, Mat>& snap) {
  for (const auto& [name, value] : snap) ps.at(name).mutable_value() = value;
}

void save_metrics_csv(const std::string& path,
                      const std::vector<TrainLogEntry>& log) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp);
    out << "epoch,stage,split,loss,lr\n";
    char buf[64];
    for (const auto& e : log) {
      out << e.epoch << ',' << to_string(e.stage) << ',' << to_string(e.split);
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", e.loss, e.lr);
      out << buf;
    }
    if (!out) throw FormatError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("cannot rename " + tmp + " to " + path);
}

// ---- speaker embedder pretraining ------------------------------------------

PretrainSpeakerResult pretrain_speaker_embedder(
    ParamStore& ps, const SpeakerEmbedderConfig& ecfg, const WorldConfig& wcfg,
    const std::vector<SpeakerProfile>& speakers, const TrainConfig& cfg) {
  cfg.validate();
  if (speakers.size() < 50)
    throw ConfigError("pretrain_speaker_embedder: need >= 50 speakers, got " +
                      std::to_string(speakers.size()));
  if (!ps.has("spk/l1/w") || !ps.has("spk_cls/w"))
    throw ConfigError("pretrain_speaker_embedder: embedder not initialized");
  if (ps.at("spk_cls/w").rows() != static_cast<Eigen::Index>(speakers.size()))
    throw ConfigError(
        "pretrain_speaker_embedder: classifier sized for a different "
        "speaker count");

  const int seg_len =
      std::max(10, static_cast<int>(kSegmentSeconds * wcfg.frame_rate));
  const Rng base(hash_combine(cfg.seed, "spk_pretrain"));

  // Rendered single-speaker segments, forked per (speaker, segment) so the
  // corpus is independent of iteration order.
  std::vector<Mat> train_segs, held_segs;
  std::vector<int> train_labels, held_labels;
  const MatU8 always_on = MatU8::Constant(1, seg_len, 1);
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    for (int k = 0; k < kSegmentsPerSpeaker; ++k) {
      Rng seg_rng = base.fork(i).fork(static_cast<std::uint64_t>(k));
      Mat seg = render_speech_frames(always_on, {speakers[i]}, wcfg.noise_std,
                                     seg_rng);
      if (k < kSegmentsPerSpeaker - kHeldoutSegments) {
        train_segs.push_back(std::move(seg));
        train_labels.push_back(static_cast<int>(i));
      } else {
        held_segs.push_back(std::move(seg));
        held_labels.push_back(static_cast<int>(i));
      }
    }
  }

  auto split_loss = [&](const std::vector<Mat>& segs,
                        const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < segs.size(); ++i)
      total += softmax_ce(speaker_logits(ps, ecfg, segs[i]), {labels[i]})
                   .scalar();
    return total / static_cast<double>(segs.size());
  };

  PretrainSpeakerResult result;
  AdamState adam;
  Rng order_rng = base.fork("order");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.lr0, cfg.decay, epoch);
    Rng epoch_rng = order_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(train_segs.size(), epoch_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ps.zero_grads();
      std::vector<Tensor> logits;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        logits.push_back(speaker_logits(ps, ecfg, train_segs[order[i]]));
        labels.push_back(train_labels[order[i]]);
      }
      Tensor loss = softmax_ce(concat_rows(logits), labels);
      backward(loss);
      adam_step(ps, adam, lr);
      epoch_loss += loss.scalar() * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.log.push_back(
        {epoch, TrainStage::pretrain_speaker, Split::train, epoch_loss, lr});
    result.log.push_back({epoch, TrainStage::pretrain_speaker, Split::val,
                          split_loss(held_segs, held_labels), lr});
  }

  int correct = 0;
  for (std::size_t i = 0; i < held_segs.size(); ++i)
    if (argmax_row(speaker_logits(ps, ecfg, held_segs[i]).value()) ==
        held_labels[i])
      ++correct;
  result.heldout_accuracy =
      static_cast<double>(correct) / static_cast<double>(held_segs.size());

  ps.set_trainable("spk", false);  // freezes spk/ and spk_cls/
  return result;
}

// ---- text base pretraining --------------------------------------------------

PretrainTextResult pretrain_text_base(ParamStore& ps,
                                      const TextEncoderConfig& tcfg,
                                      const TextPromptCorpus& corpus,
                                      const TrainConfig& cfg) {
  cfg.validate();
  if (!ps.has("text_base/embed") || !ps.has("text_cls_head/w"))
    throw ConfigError("pretrain_text_base: text encoder not initialized");

  std::map<std::string, int> event_index;
  for (std::size_t i = 0; i < event_keys().size(); ++i)
    event_index[event_keys()[i]] = static_cast<int>(i);

  auto prepare = [&](Split split) {
    std::vector<std::pair<std::vector<int>, int>> set;
    for (const CorpusEntry* e : corpus.split_entries(split))
      set.emplace_back(corpus.token_ids(e->text), event_index.at(e->event_key));
    return set;
  };
  const auto train_set = prepare(Split::train);
  const auto val_set = prepare(Split::val);
  if (train_set.empty())
    throw ConfigError("pretrain_text_base: empty train split");

  auto split_loss = [&](const std::vector<std::pair<std::vector<int>, int>>&
                            set) {
    double total = 0.0;
    for (const auto& [ids, label] : set)
      total += softmax_ce(text_event_logits(ps, tcfg, ids), {label}).scalar();
    return total / static_cast<double>(set.size());
  };

  PretrainTextResult result;
  AdamState adam;
  const Rng base(hash_combine(cfg.seed, "text_pretrain"));
  Rng order_rng = base.fork("order");
  Rng dropout_rng = base.fork("dropout");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.lr0, cfg.decay, epoch);
    Rng epoch_rng = order_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(train_set.size(), epoch_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ps.zero_grads();
      std::vector<Tensor> logits;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        logits.push_back(text_event_logits(ps, tcfg, train_set[order[i]].first,
                                           /*train_mode=*/true, &dropout_rng));
        labels.push_back(train_set[order[i]].second);
      }
      Tensor loss = softmax_ce(concat_rows(logits), labels);
      backward(loss);
      adam_step(ps, adam, lr);
      epoch_loss += loss.scalar() * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.log.push_back(
        {epoch, TrainStage::pretrain_text, Split::train, epoch_loss, lr});
    result.log.push_back({epoch, TrainStage::pretrain_text, Split::val,
                          split_loss(val_set), lr});
  }

  int correct = 0;
  for (const auto& [ids, label] : val_set)
    if (argmax_row(text_event_logits(ps, tcfg, ids).value()) == label)
      ++correct;
  result.val_accuracy = val_set.empty()
                            ? 0.0
                            : static_cast<double>(correct) /
                                  static_cast<double>(val_set.size());

  ps.set_trainable("text_base", false);
  ps.set_trainable("text_cls_head", false);
  return result;
}

// ---- voice-face aligner stage ----------------------------------------------

namespace {

// Stacks a pair subset into (faces, voices) design matrices.
std::pair<Mat, Mat> stack_pairs(const std::vector<AlignerPair>& pairs,
                                const std::vector<std::size_t>& idx,
                                std::size_t start, std::size_t end) {
  const Eigen::Index d_face = pairs[idx[start]].raw_face.size();
  const Eigen::Index d_voice = pairs[idx[start]].voice.size();
  Mat faces(static_cast<Eigen::Index>(end - start), d_face);
  Mat voices(static_cast<Eigen::Index>(end - start), d_voice);
  for (std::size_t i = start; i < end; ++i) {
    faces.row(static_cast<Eigen::Index>(i - start)) =
        pairs[idx[i]].raw_face.transpose();
    voices.row(static_cast<Eigen::Index>(i - start)) =
        pairs[idx[i]].voice.transpose();
  }
  return {std::move(faces), std::move(voices)};
}

}  // namespace

AlignerTrainResult train_aligner(ParamStore& ps, const AlignerConfig& acfg,
                                 const std::vector<AlignerPair>& train_pairs,
                                 const std::vector<AlignerPair>& heldout_pairs,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (train_pairs.empty())
    throw InputError("train_aligner: no training pairs");
  if (!ps.has("aligner/l1/w"))
    throw ConfigError("train_aligner: aligner not initialized");

  // Held-out metrics fall back to the training pairs when no held-out set
  // is provided.
  const std::vector<AlignerPair>& held =
      heldout_pairs.empty() ? train_pairs : heldout_pairs;

  auto set_mse = [&](const std::vector<AlignerPair>& pairs) {
    std::vector<std::size_t> all(pairs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto [faces, voices] = stack_pairs(pairs, all, 0, pairs.size());
    return mse_mean(align_face_tensor(ps, acfg, Tensor::constant(faces)),
                    voices)
        .scalar();
  };

  AlignerTrainResult result;
  result.heldout_mse_before = set_mse(held);

  AdamState adam;
  const Rng base(hash_combine(cfg.seed, "aligner"));
  Rng order_rng = base.fork("order");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.lr0, cfg.decay, epoch);
    Rng epoch_rng = order_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(train_pairs.size(), epoch_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ps.zero_grads();
      auto [faces, voices] = stack_pairs(train_pairs, order, start, end);
      Tensor loss = mse_mean(
          align_face_tensor(ps, acfg, Tensor::constant(faces)), voices);
      backward(loss);
      adam_step(ps, adam, lr);
      epoch_loss += loss.scalar() * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.log.push_back(
        {epoch, TrainStage::aligner, Split::train, epoch_loss, lr});
    result.log.push_back(
        {epoch, TrainStage::aligner, Split::val, set_mse(held), lr});
  }

  result.heldout_mse_after = set_mse(held);
  ps.set_trainable("aligner", false);
  return result;
}

// ---- MM-TSD stage -----------------------------------------------------------

void validate_example(const PromptedExample& ex) {
  if (ex.features.rows() < 1)
    throw DatasetError("example " + ex.sample_id + ": no frames");
  if (ex.prompts.empty())
    throw DatasetError("example " + ex.sample_id + ": no prompts");
  if (ex.events.empty())
    throw DatasetError("example " + ex.sample_id + ": no scored events");

  int group_total = 0;
  for (int g : ex.groups) {
    if (g != 1 && g != 2)
      throw DatasetError("example " + ex.sample_id +
                         ": group sizes must be 1 or 2");
    group_total += g;
  }
  if (group_total != static_cast<int>(ex.prompts.size()))
    throw DatasetError("example " + ex.sample_id +
                       ": groups do not cover the prompt tokens");

  for (const PromptToken& p : ex.prompts) {
    if (p.kind == PromptToken::Kind::text && p.token_ids.empty())
      throw DatasetError("example " + ex.sample_id + ": empty text prompt");
    if (p.kind != PromptToken::Kind::text && p.embedding.size() == 0)
      throw DatasetError("example " + ex.sample_id + ": empty embedding");
    if (p.kind == PromptToken::Kind::projected && p.projection.empty())
      throw DatasetError("example " + ex.sample_id +
                         ": projected prompt without a projection prefix");
  }
  for (const ScoredEvent& e : ex.events) {
    if (e.prompt_row < 0 ||
        e.prompt_row >= static_cast<int>(ex.prompts.size()))
      throw DatasetError("example " + ex.sample_id +
                         ": scored row out of range");
    if (e.track.labels.size() !=
        static_cast<std::size_t>(ex.features.rows()))
      throw DatasetError("example " + ex.sample_id + ": track for " +
                         to_string(e.track.attribute) + "=" + e.track.value +
                         " has " + std::to_string(e.track.labels.size()) +
                         " frames, features have " +
                         std::to_string(ex.features.rows()));
  }
}

Tensor prompted_probs_tensor(ParamStore& ps, const ModelConfig& mcfg,
                             const TextEncoderConfig& tcfg,
                             const PromptedExample& ex, bool train_mode,
                             Rng* rng) {
  validate_example(ex);

  std::vector<Tensor> rows;
  rows.reserve(ex.prompts.size());
  for (const PromptToken& p : ex.prompts) {
    switch (p.kind) {
      case PromptToken::Kind::text:
        rows.push_back(encode_text_tensor(ps, tcfg, p.token_ids,
                                          /*use_lora=*/true, train_mode, rng));
        break;
      case PromptToken::Kind::constant:
        rows.push_back(Tensor::constant(p.embedding.transpose()));
        break;
      case PromptToken::Kind::projected:
        rows.push_back(nn::linear(ps, p.projection,
                                  Tensor::constant(p.embedding.transpose())));
        break;
    }
  }
  Tensor prompts = concat_rows(rows);

  Tensor f_enc = encode_speech(ps, mcfg, ex.features, train_mode, rng);
  Tensor f_dec = decode_prompts(ps, mcfg, prompts, f_enc,
                                build_decoder_mask(ex.groups), train_mode, rng);
  Tensor pred = predict_tracks(f_dec, f_enc);

  std::vector<int> scored;
  scored.reserve(ex.events.size());
  for (const ScoredEvent& e : ex.events) scored.push_back(e.prompt_row);
  return gather_rows(pred, scored);
}

Tensor prompted_loss(ParamStore& ps, const ModelConfig& mcfg,
                     const TextEncoderConfig& tcfg, const PromptedExample& ex,
                     bool train_mode, Rng* rng) {
  Tensor probs = prompted_probs_tensor(ps, mcfg, tcfg, ex, train_mode, rng);
  Mat targets(static_cast<Eigen::Index>(ex.events.size()),
              ex.features.rows());
  for (std::size_t i = 0; i < ex.events.size(); ++i)
    for (Eigen::Index t = 0; t < ex.features.rows(); ++t)
      targets(static_cast<Eigen::Index>(i), t) =
          ex.events[i].track.labels[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
  return bce_mean(probs, targets);
}

Mat prompted_tracks(ParamStore& ps, const ModelConfig& mcfg,
                    const TextEncoderConfig& tcfg,
                    const PromptedExample& ex) {
  return prompted_probs_tensor(ps, mcfg, tcfg, ex, /*train_mode=*/false,
                               nullptr)
      .value();
}

MmTsdResult train_mm_tsd(ParamStore& ps, const ModelConfig& mcfg,
                         const TextEncoderConfig& tcfg,
                         const std::vector<PromptedExample>& train_set,
                         const std::vector<PromptedExample>& val_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DatasetError("train_mm_tsd: empty train set");
  for (const auto& ex : train_set) validate_example(ex);
  for (const auto& ex : val_set) validate_example(ex);

  MmTsdResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  if (cfg.epochs == 0) return result;

  auto eval_set_loss = [&](const std::vector<PromptedExample>& set) {
    double total = 0.0;
    for (const auto& ex : set)
      total += prompted_loss(ps, mcfg, tcfg, ex, /*train_mode=*/false, nullptr)
                   .scalar();
    return total / static_cast<double>(set.size());
  };

  AdamState adam;
  const Rng base(hash_combine(cfg.seed, "mmtsd"));
  Rng order_rng = base.fork("order");
  Rng dropout_rng = base.fork("dropout");
  std::map<std::string, Mat> best;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.lr0, cfg.decay, epoch);
    Rng epoch_rng = order_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(train_set.size(), epoch_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ps.zero_grads();
      const double inv = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Tensor loss = prompted_loss(ps, mcfg, tcfg, train_set[order[i]],
                                    /*train_mode=*/true, &dropout_rng);
        backward(scale(loss, inv));
        batch_loss += loss.scalar();
      }
      adam_step(ps, adam, lr);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(order.size());
    result.log.push_back({epoch, TrainStage::mmtsd, Split::train, epoch_loss,
                          lr});

    // Validation drives checkpoint selection; with no val set the train
    // loss stands in.
    double selection = epoch_loss;
    if (!val_set.empty()) {
      selection = eval_set_loss(val_set);
      result.log.push_back(
          {epoch, TrainStage::mmtsd, Split::val, selection, lr});
    }
    if (selection < result.best_val_loss) {
      result.best_val_loss = selection;
      result.best_epoch = epoch;
      best = snapshot_params(ps);
    }
  }

  restore_params(ps, best);
  return result;
}

// ---- gradient checking -------------------------------------------------------

GradCheckReport grad_check(const GradProbeConfig& probe) {
  Rng rng(hash_combine(probe.seed, "grad_check"));
  ParamStore ps;
  std::function<Tensor()> make_loss;

  if (probe.linear_only) {
    // Affine map under MSE: the loss is quadratic in the parameters, so
    // central differences are exact up to floating-point roundoff.
    nn::init_linear(ps, "probe", probe.d_a, probe.d_model, rng);
    Mat x = rng.normal_mat(probe.t, probe.d_a);
    Mat target = rng.normal_mat(probe.t, probe.d_model);
    make_loss = [&ps, x, target] {
      return mse_mean(nn::linear(ps, "probe", Tensor::constant(x)), target);
    };
  } else {
    ModelConfig mcfg;
    mcfg.d_a = probe.d_a;
    mcfg.d_model = probe.d_model;
    mcfg.enc_layers = 1;
    mcfg.dec_layers = 1;
    mcfg.heads = probe.heads;
    mcfg.ff = probe.ff;
    init_model(ps, mcfg, rng);

    Mat features = rng.normal_mat(probe.t, probe.d_a);
    Mat prompts = rng.normal_mat(probe.p, probe.d_model);
    std::vector<int> groups;
    for (int left = probe.p; left > 0;) {
      const int g = left >= 2 ? 2 : 1;
      groups.push_back(g);
      left -= g;
    }
    MatU8 mask = build_decoder_mask(groups);
    Mat targets(probe.p, probe.t);
    for (Eigen::Index i = 0; i < targets.size(); ++i)
      targets(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;

    make_loss = [&ps, mcfg, features, prompts, mask, targets] {
      Tensor f_enc = encode_speech(ps, mcfg, features);
      Tensor f_dec = decode_prompts(ps, mcfg, Tensor::constant(prompts),
                                    f_enc, mask);
      return bce_mean(predict_tracks(f_dec, f_enc), targets);
    };
  }

  GradCheckReport report;
  report.zero_perturbation_diff =
      std::abs(make_loss().scalar() - make_loss().scalar());

  ps.zero_grads();
  backward(make_loss());
  for (auto& [name, p] : ps.all()) {
    if (!p.requires_grad()) continue;
    const Mat analytic = p.grad();
    Mat& value = p.mutable_value();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = value(i);
      value(i) = orig + probe.h;
      const double fp = make_loss().scalar();
      value(i) = orig - probe.h;
      const double fm = make_loss().scalar();
      value(i) = orig;
      const double numeric = (fp - fm) / (2.0 * probe.h);
      // The 1e-4 floor absorbs central-difference roundoff on
      // exactly-zero gradients (e.g. key biases under softmax shift
      // invariance).
      const double denom =
          std::max({std::abs(analytic(i)), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
    report.entries.push_back({name, worst});
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace mmtsd
