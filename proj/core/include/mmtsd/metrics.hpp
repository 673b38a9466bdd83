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

// Frame-level scoring (AP, ROC-AUC, EER, accuracy), track binarization, and
// frame-based diarization error rate with an optimal speaker mapping.

#ifndef MMTSD_METRICS_HPP
#define MMTSD_METRICS_HPP

#include <string>
#include <vector>

#include "mmtsd/common.hpp"

namespace mmtsd {

struct ScoredFrames {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1
};

struct Segment {
  std::string speaker;
  double onset_s = 0.0;
  double duration_s = 0.0;
};

using Segmentation = std::vector<Segment>;

// Area under the precision-recall curve, step-wise sum over descending
// unique score thresholds (ties grouped). Throws MetricError when labels
// are all-positive or all-negative.
double average_precision(const ScoredFrames& sf);

// Mann-Whitney statistic P(score+ > score-) + 0.5 P(tie), via rank sums.
double roc_auc(const ScoredFrames& sf);

// Equal error rate: sweep over unique scores (decision: score >= threshold),
// linear interpolation between the two sweep points bracketing FAR = FRR.
double eer(const ScoredFrames& sf);

// Fraction of frames where (score >= threshold) equals the label.
double frame_accuracy(const ScoredFrames& sf, double threshold = 0.5);

// Median-filter (odd window, clipped at the edges, lower median), threshold
// at >=, and merge adjacent positive frames into segments.
Segmentation binarize_track(const std::vector<double>& probs,
                            double threshold = 0.5, int median_window = 11,
                            double frame_rate = 25.0,
                            const std::string& speaker = "spk");

// Frame-based diarization error rate: rasterize both segmentations at
// frame_rate, drop frames within collar_s of any reference boundary, map
// hypothesis speakers to reference speakers by optimal assignment over the
// overlap-count matrix, then
//   DER = (miss + false alarm + confusion) / total reference speech frames
// with overlap regions counted once per concurrent reference speaker.
// Throws MetricError when the reference contains no speech frames.
double der(const Segmentation& ref, const Segmentation& hyp,
           double frame_rate, double collar_s = 0.0);

}  // namespace mmtsd

#endif  // MMTSD_METRICS_HPP
