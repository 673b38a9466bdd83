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

// On-disk dataset layout. A dataset directory holds one manifest
// (`manifest.tsv`) plus two flat binary files per sample:
//
//   <sample_id>.feat   magic "MMDS1", u32 rows, u32 cols (little endian),
//                      then rows*cols little-endian 32-bit floats, row-major
//   <sample_id>.act    same header, then rows*cols bytes, each 0 or 1
//
// The manifest is tab-separated UTF-8 with a fixed header line:
//
//   sample_id  features  activity  speakers  duration_s  split
//
// where `speakers` is a comma-joined ascending id list and paths are
// relative to the directory. Features are stored in single precision:
// quantize_features_f32 applies the same rounding in memory, so a quantized
// sample round-trips through save/load bitwise. All writes go to a temp
// path followed by an atomic rename.

#ifndef MMTSD_DATASET_IO_HPP
#define MMTSD_DATASET_IO_HPP

#include <string>
#include <vector>

#include "mmtsd/common.hpp"
#include "mmtsd/corpus.hpp"

namespace mmtsd {

struct DatasetSample {
  std::string sample_id;
  Mat features;                  // T x d_a, f32-representable values
  MatU8 activity;                // S x T, entries 0/1
  std::vector<int> speaker_ids;  // length S, ascending
  double duration_s = 0.0;
  Split split = Split::train;
};

// Rounds every entry to the nearest single-precision value. The world
// simulator renders in double precision; datasets quantize once at build
// time so that in-memory training data equals what load_dataset returns.
Mat quantize_features_f32(const Mat& features);

// Shape and value constraints (InputError): non-empty features, activity
// with one row per speaker id and one column per frame, ascending speaker
// ids, activity entries in {0,1}, positive duration, non-empty sample_id
// without tab/newline/path separators.
void validate_sample(const DatasetSample& sample);

// Writes manifest.tsv plus per-sample .feat/.act files into dir (created
// if missing, including parents). Sample ids must be unique (InputError).
// Existing files of the same names are overwritten atomically.
void save_dataset(const std::vector<DatasetSample>& samples,
                  const std::string& dir);

// Reads manifest.tsv and every referenced file. Manifest records, headers,
// magics, shapes, and cross-file consistency (activity S x T matching the
// speaker list and feature frames) are all checked; violations throw
// FormatError naming the offending file (and line for manifest errors).
std::vector<DatasetSample> load_dataset(const std::string& dir);

// Single-matrix codecs used by save/load; exposed for targeted tests.
void write_matrix_f32(const std::string& path, const Mat& m);
Mat read_matrix_f32(const std::string& path);
void write_matrix_u8(const std::string& path, const MatU8& m);
MatU8 read_matrix_u8(const std::string& path);

}  // namespace mmtsd

#endif  // MMTSD_DATASET_IO_HPP
