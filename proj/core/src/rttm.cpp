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

#include "mmtsd/rttm.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace mmtsd {
namespace {

bool has_whitespace(const std::string& s) {
  return s.find_first_of(" \t\r\n") != std::string::npos;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

double parse_seconds(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": bad time value '" + tok + "'");
  }
}

}  // namespace

std::string format_rttm(const Segmentation& seg, const std::string& file_id) {
  if (file_id.empty() || has_whitespace(file_id))
    throw InputError("rttm file_id must be non-empty without whitespace");
  std::ostringstream out;
  char num[32];
  for (const Segment& s : seg) {
    if (s.speaker.empty() || has_whitespace(s.speaker))
      throw InputError(
          "rttm speaker labels must be non-empty without whitespace");
    if (!(s.duration_s > 0.0))
      throw InputError("rttm segment durations must be positive");
    out << "SPEAKER " << file_id << " 1";
    std::snprintf(num, sizeof num, " %.3f %.3f", s.onset_s, s.duration_s);
    out << num << " <NA> <NA> " << s.speaker << " <NA> <NA>\n";
  }
  return out.str();
}

void write_rttm(const Segmentation& seg, const std::string& file_id,
                const std::string& path) {
  const std::string body = format_rttm(seg, file_id);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp);
    out << body;
    if (!out) throw FormatError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("cannot rename " + tmp + " to " + path);
}

Segmentation read_rttm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);

  Segmentation seg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = tokens_of(line);
    if (toks.empty() || toks[0] != "SPEAKER") continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (toks.size() != 10)
      throw FormatError(where + ": SPEAKER line has " +
                        std::to_string(toks.size()) +
                        " fields, expected 10");
    Segment s;
    s.onset_s = parse_seconds(toks[3], where);
    s.duration_s = parse_seconds(toks[4], where);
    if (!(s.duration_s > 0.0))
      throw FormatError(where + ": non-positive duration");
    s.speaker = toks[7];
    seg.push_back(std::move(s));
  }
  return seg;
}

}  // namespace mmtsd
