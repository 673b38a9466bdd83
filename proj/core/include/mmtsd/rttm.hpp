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

// RTTM interchange for segmentations. The writer emits exactly
//
//   SPEAKER <file_id> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>
//
// with onset/duration printed to 3 decimals (1 ms quantization); the
// reader parses exactly this shape, skips lines whose first token is not
// SPEAKER, and reports malformed SPEAKER lines with their line number.

#ifndef MMTSD_RTTM_HPP
#define MMTSD_RTTM_HPP

#include <string>

#include "mmtsd/metrics.hpp"

namespace mmtsd {

// The serialized lines (one per segment, input order preserved).
// file_id and speaker labels must be non-empty and whitespace-free;
// durations must be positive (InputError).
std::string format_rttm(const Segmentation& seg, const std::string& file_id);

// format_rttm to a file via temp + atomic rename (FormatError on I/O).
void write_rttm(const Segmentation& seg, const std::string& file_id,
                const std::string& path);

// Parses a file written by write_rttm (or any RTTM restricted to that
// shape). Lines with a different first token are ignored; a SPEAKER line
// with the wrong field count or unparsable numbers throws FormatError
// naming the path and line number.
Segmentation read_rttm(const std::string& path);

}  // namespace mmtsd

#endif  // MMTSD_RTTM_HPP
