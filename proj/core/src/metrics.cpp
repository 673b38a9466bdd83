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

#include "mmtsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace mmtsd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const ScoredFrames& sf, bool need_both_classes) {
  if (sf.scores.size() != sf.labels.size())
    throw MetricError("scored frames: score/label length mismatch");
  if (sf.scores.empty()) throw MetricError("scored frames: empty input");
  int pos = 0, neg = 0;
  for (int l : sf.labels) {
    if (l != 0 && l != 1) throw MetricError("scored frames: labels must be 0/1");
    (l == 1 ? pos : neg)++;
  }
  if (need_both_classes && (pos == 0 || neg == 0))
    throw MetricError("metric undefined: needs at least one positive and one negative");
}

std::vector<std::size_t> order_by_score_desc(const std::vector<double>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

// Jonker-style O(n^3) Hungarian algorithm on a square min-cost matrix;
// returns for each row its assigned column.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Rasterized view of a segmentation: speaker list (sorted for determinism)
// and per-speaker frame activity using the frame-midpoint convention.
struct Raster {
  std::vector<std::string> speakers;
  std::vector<std::vector<char>> active;  // [speaker][frame]
};

Raster rasterize(const Segmentation& seg, double frame_rate,
                 Eigen::Index frames) {
  std::set<std::string> names;
  for (const auto& s : seg) names.insert(s.speaker);
  Raster r;
  r.speakers.assign(names.begin(), names.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < r.speakers.size(); ++i) index[r.speakers[i]] = i;
  r.active.assign(r.speakers.size(),
                  std::vector<char>(static_cast<std::size_t>(frames), 0));
  for (const auto& s : seg) {
    auto& row = r.active[index[s.speaker]];
    for (Eigen::Index t = 0; t < frames; ++t) {
      const double mid = (static_cast<double>(t) + 0.5) / frame_rate;
      if (mid >= s.onset_s && mid < s.onset_s + s.duration_s)
        row[static_cast<std::size_t>(t)] = 1;
    }
  }
  return r;
}

}  // namespace

double average_precision(const ScoredFrames& sf) {
  validate(sf, /*need_both_classes=*/true);
  const auto idx = order_by_score_desc(sf.scores);
  const std::size_t n = idx.size();
  double total_pos = 0.0;
  for (int l : sf.labels) total_pos += l;

  double ap = 0.0, tp = 0.0, fp = 0.0, prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    // group of tied scores: the threshold admits all of them at once
    std::size_t j = i;
    while (j < n && sf.scores[idx[j]] == sf.scores[idx[i]]) {
      (sf.labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double roc_auc(const ScoredFrames& sf) {
  validate(sf, /*need_both_classes=*/true);
  const std::size_t n = sf.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return sf.scores[a] < sf.scores[b];
  });

  // average ranks over tie groups (1-based ascending), then Mann-Whitney
  double rank_sum_pos = 0.0, pos = 0.0, neg = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && sf.scores[idx[j]] == sf.scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (sf.labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  for (int l : sf.labels) (l == 1 ? pos : neg) += 1.0;
  return (rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double eer(const ScoredFrames& sf) {
  validate(sf, /*need_both_classes=*/true);
  const auto idx = order_by_score_desc(sf.scores);
  double pos = 0.0, neg = 0.0;
  for (int l : sf.labels) (l == 1 ? pos : neg) += 1.0;

  // sweep: threshold +inf (accept nothing), then each unique score
  // descending; decision is score >= threshold.
  double far0 = 0.0, frr0 = 1.0;  // the +inf point
  double acc_pos = 0.0, acc_neg = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && sf.scores[idx[j]] == sf.scores[idx[i]]) {
      (sf.labels[idx[j]] == 1 ? acc_pos : acc_neg) += 1.0;
      ++j;
    }
    const double far1 = acc_neg / neg;
    const double frr1 = (pos - acc_pos) / pos;
    if (far1 >= frr1) {
      if (far1 == frr1) return far1;
      // linear interpolation between the bracketing sweep points
      const double denom = (far1 - far0) - (frr1 - frr0);
      const double t = (frr0 - far0) / denom;
      return far0 + t * (far1 - far0);
    }
    far0 = far1;
    frr0 = frr1;
    i = j;
  }
  // FAR reaches 1 and FRR reaches 0 at the last sweep point, so the branch
  // above always returns; this line is unreachable on valid input.
  throw MetricError("eer: sweep found no crossing");
}

double frame_accuracy(const ScoredFrames& sf, double threshold) {
  validate(sf, /*need_both_classes=*/false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < sf.scores.size(); ++i) {
    const int decision = sf.scores[i] >= threshold ? 1 : 0;
    if (decision == sf.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(sf.scores.size());
}

Segmentation binarize_track(const std::vector<double>& probs, double threshold,
                            int median_window, double frame_rate,
                            const std::string& speaker) {
  if (median_window < 1 || median_window % 2 == 0)
    throw ConfigError("binarize_track: median window must be odd and >= 1");
  if (frame_rate <= 0.0)
    throw ConfigError("binarize_track: frame rate must be positive");
  const int t_count = static_cast<int>(probs.size());
  const int half = median_window / 2;

  std::vector<char> on(static_cast<std::size_t>(t_count), 0);
  std::vector<double> window;
  for (int t = 0; t < t_count; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(t_count - 1, t + half);
    window.assign(probs.begin() + lo, probs.begin() + hi + 1);
    std::sort(window.begin(), window.end());
    // lower median keeps clipped edge windows (even size) deterministic
    const double med = window[(window.size() - 1) / 2];
    on[static_cast<std::size_t>(t)] = med >= threshold ? 1 : 0;
  }

  Segmentation seg;
  int t = 0;
  while (t < t_count) {
    if (!on[static_cast<std::size_t>(t)]) {
      ++t;
      continue;
    }
    int start = t;
    while (t < t_count && on[static_cast<std::size_t>(t)]) ++t;
    seg.push_back({speaker, static_cast<double>(start) / frame_rate,
                   static_cast<double>(t - start) / frame_rate});
  }
  return seg;
}

double der(const Segmentation& ref, const Segmentation& hyp, double frame_rate,
           double collar_s) {
  if (frame_rate <= 0.0) throw ConfigError("der: frame rate must be positive");
  double max_end = 0.0;
  for (const auto& s : ref) max_end = std::max(max_end, s.onset_s + s.duration_s);
  for (const auto& s : hyp) max_end = std::max(max_end, s.onset_s + s.duration_s);
  const auto frames =
      static_cast<Eigen::Index>(std::ceil(max_end * frame_rate - 1e-9));
  if (frames <= 0) throw MetricError("der: reference contains no speech");

  const Raster r = rasterize(ref, frame_rate, frames);
  const Raster h = rasterize(hyp, frame_rate, frames);
  const std::size_t sr = r.speakers.size(), sh = h.speakers.size();

  // frames whose midpoint falls within the collar of a reference boundary
  // are excluded from scoring
  std::vector<char> scored(static_cast<std::size_t>(frames), 1);
  if (collar_s > 0.0) {
    for (Eigen::Index t = 0; t < frames; ++t) {
      const double mid = (static_cast<double>(t) + 0.5) / frame_rate;
      for (const auto& s : ref) {
        if (std::abs(mid - s.onset_s) < collar_s ||
            std::abs(mid - (s.onset_s + s.duration_s)) < collar_s) {
          scored[static_cast<std::size_t>(t)] = 0;
          break;
        }
      }
    }
  }

  // overlap counts over scored frames drive the optimal speaker mapping
  const std::size_t k = std::max(sr, sh);
  double ref_speech = 0.0;
  std::vector<int> map_r_to_h(sr, -1);
  if (k > 0) {
    std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < sr; ++a)
      for (std::size_t b = 0; b < sh; ++b) {
        double overlap = 0.0;
        for (Eigen::Index t = 0; t < frames; ++t)
          if (scored[static_cast<std::size_t>(t)] &&
              r.active[a][static_cast<std::size_t>(t)] &&
              h.active[b][static_cast<std::size_t>(t)])
            overlap += 1.0;
        cost[a][b] = -overlap;  // Hungarian minimizes
      }
    const auto assign = hungarian_min(cost);
    for (std::size_t a = 0; a < sr; ++a)
      if (assign[a] >= 0 && static_cast<std::size_t>(assign[a]) < sh)
        map_r_to_h[a] = assign[a];
  }

  double err = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    if (!scored[static_cast<std::size_t>(t)]) continue;
    int n_ref = 0, n_hyp = 0, n_correct = 0;
    for (std::size_t a = 0; a < sr; ++a) {
      if (!r.active[a][static_cast<std::size_t>(t)]) continue;
      ++n_ref;
      const int b = map_r_to_h[a];
      if (b >= 0 && h.active[static_cast<std::size_t>(b)]
                            [static_cast<std::size_t>(t)])
        ++n_correct;
    }
    for (std::size_t b = 0; b < sh; ++b)
      if (h.active[b][static_cast<std::size_t>(t)]) ++n_hyp;

    const int miss = std::max(0, n_ref - n_hyp);
    const int fa = std::max(0, n_hyp - n_ref);
    const int confusion = std::min(n_ref, n_hyp) - n_correct;
    err += miss + fa + confusion;
    ref_speech += n_ref;
  }
  if (ref_speech == 0.0) throw MetricError("der: reference contains no speech");
  return err / ref_speech;
}

}  // namespace mmtsd
