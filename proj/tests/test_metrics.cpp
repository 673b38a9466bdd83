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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "mmtsd/metrics.hpp"
#include "mmtsd/rng.hpp"

using namespace mmtsd;

namespace {

// ---- independent oracles ------------------------------------------------
// These deliberately avoid the production code paths: full-pass counting
// instead of sorted cumulative sums, pairwise comparison instead of rank
// sums, a dense threshold sweep instead of the unique-score sweep, and
// explicit permutation enumeration instead of the Hungarian algorithm.

// Brute-force PR curve: for every unique threshold (descending), count TP/FP
// with a full pass, then apply the step-wise sum.
double ap_oracle(const ScoredFrames& sf) {
  std::set<double, std::greater<double>> thresholds(sf.scores.begin(),
                                                    sf.scores.end());
  double total_pos = 0;
  for (int l : sf.labels) total_pos += l;
  double ap = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < sf.scores.size(); ++i) {
      if (sf.scores[i] >= th) (sf.labels[i] == 1 ? tp : fp) += 1;
    }
    double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

// O(N^2) pairwise Mann-Whitney comparison.
double auc_oracle(const ScoredFrames& sf) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < sf.scores.size(); ++i) {
    if (sf.labels[i] != 1) continue;
    for (std::size_t j = 0; j < sf.scores.size(); ++j) {
      if (sf.labels[j] != 0) continue;
      pairs += 1.0;
      if (sf.scores[i] > sf.scores[j]) wins += 1.0;
      else if (sf.scores[i] == sf.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

void far_frr_at(const ScoredFrames& sf, double th, double* far, double* frr) {
  double fa = 0, fr = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < sf.scores.size(); ++i) {
    const bool accept = sf.scores[i] >= th;
    if (sf.labels[i] == 1) {
      pos += 1;
      if (!accept) fr += 1;
    } else {
      neg += 1;
      if (accept) fa += 1;
    }
  }
  *far = fa / neg;
  *frr = fr / pos;
}

// Dense 1e5-point threshold sweep with interpolation at the crossing.
double eer_dense_oracle(const ScoredFrames& sf, int points = 100000) {
  const double hi =
      *std::max_element(sf.scores.begin(), sf.scores.end()) + 1.0;
  const double lo =
      *std::min_element(sf.scores.begin(), sf.scores.end()) - 1.0;
  double far0, frr0;
  far_frr_at(sf, hi, &far0, &frr0);  // accepts nothing
  for (int k = 1; k <= points; ++k) {
    const double th = hi - (hi - lo) * static_cast<double>(k) / points;
    double far1, frr1;
    far_frr_at(sf, th, &far1, &frr1);
    if (far1 >= frr1) {
      if (far1 == frr1) return far1;
      const double t = (frr0 - far0) / ((far1 - far0) - (frr1 - frr0));
      return far0 + t * (far1 - far0);
    }
    far0 = far1;
    frr0 = frr1;
  }
  return 1.0;
}

// Cheap independent EER oracle: materialize the whole FAR/FRR arrays over
// unique thresholds first, then scan for the crossing.
double eer_array_oracle(const ScoredFrames& sf) {
  std::set<double, std::greater<double>> uniq(sf.scores.begin(),
                                              sf.scores.end());
  std::vector<double> fars{0.0}, frrs{1.0};
  for (double th : uniq) {
    double f, r;
    far_frr_at(sf, th, &f, &r);
    fars.push_back(f);
    frrs.push_back(r);
  }
  for (std::size_t k = 1; k < fars.size(); ++k) {
    if (fars[k] >= frrs[k]) {
      if (fars[k] == frrs[k]) return fars[k];
      const double t = (frrs[k - 1] - fars[k - 1]) /
                       ((fars[k] - fars[k - 1]) - (frrs[k] - frrs[k - 1]));
      return fars[k - 1] + t * (fars[k] - fars[k - 1]);
    }
  }
  return 1.0;
}

// DER by explicit enumeration of every injective ref->hyp speaker mapping,
// taking the minimum error. Feasible for <= 4 speakers.
double der_bruteforce(const std::vector<std::vector<char>>& ref,
                      const std::vector<std::vector<char>>& hyp) {
  const std::size_t sr = ref.size(), sh = hyp.size();
  const std::size_t frames = ref.empty() ? hyp[0].size() : ref[0].size();
  const std::size_t k = std::max(sr, sh);
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  do {
    double err = 0.0, speech = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      int n_ref = 0, n_hyp = 0, n_correct = 0;
      for (std::size_t a = 0; a < sr; ++a) {
        if (!ref[a][t]) continue;
        ++n_ref;
        const int b = perm[a];
        if (static_cast<std::size_t>(b) < sh && hyp[b][t]) ++n_correct;
      }
      for (std::size_t b = 0; b < sh; ++b)
        if (hyp[b][t]) ++n_hyp;
      err += std::max(0, n_ref - n_hyp) + std::max(0, n_hyp - n_ref) +
             (std::min(n_ref, n_hyp) - n_correct);
      speech += n_ref;
    }
    best = std::min(best, err / speech);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// frame activity -> Segmentation at the given frame rate
Segmentation activity_to_seg(const std::vector<std::vector<char>>& activity,
                             double frame_rate) {
  Segmentation seg;
  for (std::size_t s = 0; s < activity.size(); ++s) {
    std::size_t t = 0;
    const auto& row = activity[s];
    while (t < row.size()) {
      if (!row[t]) {
        ++t;
        continue;
      }
      std::size_t start = t;
      while (t < row.size() && row[t]) ++t;
      seg.push_back({"spk" + std::to_string(s),
                     static_cast<double>(start) / frame_rate,
                     static_cast<double>(t - start) / frame_rate});
    }
  }
  return seg;
}

ScoredFrames random_frames(Rng& rng, int n) {
  ScoredFrames sf;
  bool has_pos = false, has_neg = false;
  while (!has_pos || !has_neg) {
    sf.scores.clear();
    sf.labels.clear();
    has_pos = has_neg = false;
    for (int i = 0; i < n; ++i) {
      sf.scores.push_back(rng.uniform());
      const int l = rng.uniform() < 0.5 ? 0 : 1;
      sf.labels.push_back(l);
      (l ? has_pos : has_neg) = true;
    }
  }
  return sf;
}

}  // namespace

TEST_CASE("average precision: hand case and basic laws") {
  // threshold sweep: at 0.9 P=1,R=1/2; at 0.8 P=1/2; at 0.7 P=2/3,R=1;
  // AP = (1/2)(1) + 0 + (1/2)(2/3) = 5/6
  ScoredFrames sf{{0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}};
  CHECK(average_precision(sf) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(average_precision(sf) == doctest::Approx(0.8333).epsilon(1e-3));

  ScoredFrames perfect{{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}};
  CHECK(average_precision(perfect) == 1.0);

  // all scores tied: single threshold, precision = base rate
  ScoredFrames tied{{0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1}};
  CHECK(average_precision(tied) == doctest::Approx(0.5));

  CHECK_THROWS_AS(average_precision({{0.1, 0.2}, {1, 1}}), MetricError);
  CHECK_THROWS_AS(average_precision({{0.1, 0.2}, {0, 0}}), MetricError);
  CHECK_THROWS_AS(average_precision({{0.1}, {0, 1}}), MetricError);
  CHECK_THROWS_AS(average_precision({{0.1, 0.2}, {0, 2}}), MetricError);
}

TEST_CASE("average precision equals the brute-force PR oracle exhaustively") {
  Rng rng(301);
  for (int n = 2; n <= 8; ++n) {
    for (int pattern = 1; pattern < (1 << n) - 1; ++pattern) {
      for (int draw = 0; draw < 3; ++draw) {
        ScoredFrames sf;
        for (int i = 0; i < n; ++i) {
          sf.labels.push_back((pattern >> i) & 1);
          // quantized scores make ties common
          sf.scores.push_back(std::floor(rng.uniform() * 4.0) / 4.0);
        }
        REQUIRE(average_precision(sf) ==
                doctest::Approx(ap_oracle(sf)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("roc_auc: laws and the pairwise oracle") {
  ScoredFrames perfect{{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}};
  CHECK(roc_auc(perfect) == 1.0);

  ScoredFrames tied{{0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1}};
  CHECK(roc_auc(tied) == 0.5);

  Rng rng(302);
  for (int trial = 0; trial < 50; ++trial) {
    ScoredFrames sf = random_frames(rng, 12);
    if (trial % 2 == 0)  // force ties half the time
      for (auto& s : sf.scores) s = std::floor(s * 5.0) / 5.0;
    CHECK(roc_auc(sf) == doctest::Approx(auc_oracle(sf)).epsilon(1e-12));

    // complement law (only exact without ties)
    bool has_tie = false;
    std::set<double> seen;
    for (double s : sf.scores) has_tie |= !seen.insert(s).second;
    if (!has_tie) {
      ScoredFrames neg = sf;
      for (auto& s : neg.scores) s = -s;
      CHECK(roc_auc(neg) == doctest::Approx(1.0 - roc_auc(sf)).epsilon(1e-12));
    }
  }
}

TEST_CASE("order invariance under strictly increasing transforms") {
  Rng rng(303);
  ScoredFrames sf = random_frames(rng, 10);
  ScoredFrames warped = sf;
  for (auto& s : warped.scores) s = std::exp(3.0 * s) - 0.5;
  CHECK(average_precision(sf) == average_precision(warped));
  CHECK(roc_auc(sf) == roc_auc(warped));
  CHECK(eer(sf) == doctest::Approx(eer(warped)).epsilon(1e-12));
}

TEST_CASE("eer: hand cases") {
  ScoredFrames perfect{{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}};
  CHECK(eer(perfect) == 0.0);

  // fully inverted ranking -> total confusion
  ScoredFrames inverted{{0.9, 0.1}, {0, 1}};
  CHECK(eer(inverted) == 1.0);

  // all scores equal: interpolate between (0,1) and (1,0) -> 0.5
  ScoredFrames flat{{0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}};
  CHECK(eer(flat) == doctest::Approx(0.5));

  CHECK_THROWS_AS(eer({{0.1, 0.2}, {1, 1}}), MetricError);
}

TEST_CASE("eer matches the dense-sweep and array-sweep oracles") {
  Rng rng(304);
  // dense sweep (1e5 points) on a well-separated N=20 case
  ScoredFrames sf = random_frames(rng, 20);
  std::vector<double> sorted = sf.scores;
  std::sort(sorted.begin(), sorted.end());
  double min_gap = 1.0;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    min_gap = std::min(min_gap, sorted[i] - sorted[i - 1]);
  REQUIRE(min_gap > 3.0 * (sorted.back() - sorted.front() + 2.0) / 100000.0);
  CHECK(eer(sf) == doctest::Approx(eer_dense_oracle(sf)).epsilon(1e-9));

  // cheap array oracle across many random cases, ties included
  for (int trial = 0; trial < 100; ++trial) {
    ScoredFrames f = random_frames(rng, 3 + static_cast<int>(rng.uniform_int(10)));
    if (trial % 3 == 0)
      for (auto& s : f.scores) s = std::floor(s * 4.0) / 4.0;
    CHECK(eer(f) == doctest::Approx(eer_array_oracle(f)).epsilon(1e-12));
  }
}

TEST_CASE("frame_accuracy counts the >= decision rule") {
  ScoredFrames exact{{1.0, 0.0, 1.0}, {1, 0, 1}};
  CHECK(frame_accuracy(exact) == 1.0);

  // score exactly at the threshold decides positive
  ScoredFrames boundary{{0.5, 0.5}, {1, 1}};
  CHECK(frame_accuracy(boundary) == 1.0);
  ScoredFrames boundary0{{0.5, 0.5}, {0, 0}};
  CHECK(frame_accuracy(boundary0) == 0.0);

  Rng rng(305);
  ScoredFrames sf = random_frames(rng, 50);
  int correct = 0;
  for (int i = 0; i < 50; ++i)
    correct += ((sf.scores[i] >= 0.5 ? 1 : 0) == sf.labels[i]) ? 1 : 0;
  CHECK(frame_accuracy(sf) == doctest::Approx(correct / 50.0));
}

TEST_CASE("binarize_track: filtering, thresholding, segment merging") {
  // the dip is median-filtered away -> one segment over frames 0..4
  Segmentation s1 = binarize_track({0.9, 0.9, 0.1, 0.9, 0.9}, 0.5, 3, 25.0);
  REQUIRE(s1.size() == 1);
  CHECK(s1[0].onset_s == doctest::Approx(0.0));
  CHECK(s1[0].duration_s == doctest::Approx(5.0 / 25.0));

  // window 1: direct thresholding, two segments of 0.04 s
  Segmentation s2 = binarize_track({0.9, 0.1, 0.9}, 0.5, 1, 25.0);
  REQUIRE(s2.size() == 2);
  CHECK(s2[0].onset_s == doctest::Approx(0.00));
  CHECK(s2[0].duration_s == doctest::Approx(0.04));
  CHECK(s2[1].onset_s == doctest::Approx(0.08));
  CHECK(s2[1].duration_s == doctest::Approx(0.04));

  CHECK(binarize_track({0.1, 0.2, 0.3}, 0.5, 3, 25.0).empty());
  CHECK(binarize_track({}, 0.5, 3, 25.0).empty());
  CHECK_THROWS_AS(binarize_track({0.9}, 0.5, 4, 25.0), ConfigError);
  CHECK_THROWS_AS(binarize_track({0.9}, 0.5, -1, 25.0), ConfigError);

  // threshold uses >=
  Segmentation s3 = binarize_track({0.5, 0.5}, 0.5, 1, 25.0);
  REQUIRE(s3.size() == 1);
  CHECK(s3[0].duration_s == doctest::Approx(0.08));
}

TEST_CASE("der: identity, permutation invariance, hand cases") {
  Segmentation ref = {{"A", 0.0, 1.0}, {"B", 1.0, 1.0}};
  CHECK(der(ref, ref, 10.0) == 0.0);

  Segmentation renamed = {{"X", 0.0, 1.0}, {"Y", 1.0, 1.0}};
  CHECK(der(ref, renamed, 10.0) == 0.0);
  Segmentation swapped = {{"B", 0.0, 1.0}, {"A", 1.0, 1.0}};
  CHECK(der(ref, swapped, 10.0) == 0.0);

  // empty hypothesis: every reference frame is a miss
  CHECK(der(ref, {}, 10.0) == 1.0);

  // pure false alarm: hyp doubles the speech
  Segmentation hyp_fa = {{"A", 0.0, 1.0}, {"B", 1.0, 1.0}, {"C", 0.0, 2.0}};
  CHECK(der(ref, hyp_fa, 10.0) == doctest::Approx(1.0));

  // single hyp speaker covering two ref speakers: half is confusion
  Segmentation hyp_one = {{"X", 0.0, 2.0}};
  CHECK(der(ref, hyp_one, 10.0) == doctest::Approx(0.5));

  CHECK_THROWS_AS(der({}, {{"A", 0.0, 1.0}}, 10.0), MetricError);

  // collar: with 0.25 s around ref boundaries the trimmed tail is forgiven
  Segmentation r1 = {{"A", 0.0, 1.0}};
  Segmentation h1 = {{"A", 0.0, 0.9}};
  CHECK(der(r1, h1, 10.0, 0.0) == doctest::Approx(0.1));
  CHECK(der(r1, h1, 10.0, 0.25) == 0.0);
}

TEST_CASE("der equals brute-force mapping enumeration on random cases") {
  Rng rng(306);
  const double fr = 25.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int frames = 40;
    const int sr = 1 + static_cast<int>(rng.uniform_int(4));
    const int sh = 1 + static_cast<int>(rng.uniform_int(4));

    std::vector<std::vector<char>> ra, ha;
    bool any_ref = false;
    for (int s = 0; s < sr; ++s) {
      std::vector<char> row(frames, 0);
      for (int t = 0; t < frames; ++t) {
        row[t] = rng.uniform() < 0.4 ? 1 : 0;
        any_ref |= row[t];
      }
      ra.push_back(row);
    }
    if (!any_ref) ra[0][0] = 1;
    for (int s = 0; s < sh; ++s) {
      std::vector<char> row(frames, 0);
      for (int t = 0; t < frames; ++t) row[t] = rng.uniform() < 0.4 ? 1 : 0;
      ha.push_back(row);
    }

    const double got = der(activity_to_seg(ra, fr), activity_to_seg(ha, fr), fr);
    const double want = der_bruteforce(ra, ha);
    REQUIRE(got == doctest::Approx(want).epsilon(1e-12));
  }
}
