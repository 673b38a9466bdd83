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

// Evaluation result tables. `eval` writes one CSV per run with the fixed
// header
//
//   modality,attribute,split,ap,auc,eer,acc,der
//
// one row per (modality, attribute, split) cell; metric cells that do not
// apply stay empty (e.g. der for framewise rows, ap for the diarizer row).
// `report` merges any number of such CSVs into one tab-separated table
// sorted by key, refusing duplicate keys and mismatched headers.

#ifndef MMTSD_REPORT_HPP
#define MMTSD_REPORT_HPP

#include <optional>
#include <string>
#include <vector>

#include "mmtsd/common.hpp"

namespace mmtsd {

struct EvalRow {
  std::string modality;   // "text" | "audio" | "face" | "audio-text" | ...
  std::string attribute;  // "gender" | "counter" | ... | "diarization"
  std::string split;      // "train" | "val" | "test"
  std::optional<double> ap;
  std::optional<double> auc;
  std::optional<double> eer;
  std::optional<double> acc;
  std::optional<double> der;
};

// Key fields must be non-empty and free of commas/tabs/newlines
// (InputError). Values print with 6 significant digits.
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

// Strict reader for the fixed header and 8-field rows; numeric cells must
// parse or be empty. Violations throw FormatError naming path and line.
std::vector<EvalRow> read_eval_csv(const std::string& path);

// Merges eval CSVs into one tab-separated table (header + rows sorted by
// key). A (modality, attribute, split) key appearing in two files is a
// FormatError naming both files; so is a header mismatch.
std::string merge_eval_reports(const std::vector<std::string>& csv_paths);

// merge_eval_reports to a file via temp + atomic rename.
void emit_report(const std::vector<std::string>& csv_paths,
                 const std::string& out_path);

}  // namespace mmtsd

#endif  // MMTSD_REPORT_HPP
