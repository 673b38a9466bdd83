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

#include "mmtsd/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace mmtsd {
namespace {

constexpr char kHeader[] = "modality,attribute,split,ap,auc,eer,acc,der";

std::string format_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

std::optional<double> parse_cell(const std::string& s,
                                 const std::string& where) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": bad metric value '" + s + "'");
  }
}

void check_key_field(const std::string& s, const std::string& name) {
  if (s.empty())
    throw InputError("eval row with empty " + name);
  if (s.find_first_of(",\t\r\n") != std::string::npos)
    throw InputError("eval row " + name + " '" + s +
                     "' contains a separator character");
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void atomic_write_text(const std::string& path, const std::string& body) {
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

}  // namespace

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const EvalRow& r : rows) {
    check_key_field(r.modality, "modality");
    check_key_field(r.attribute, "attribute");
    check_key_field(r.split, "split");
    out << r.modality << ',' << r.attribute << ',' << r.split << ','
        << format_cell(r.ap) << ',' << format_cell(r.auc) << ','
        << format_cell(r.eer) << ',' << format_cell(r.acc) << ','
        << format_cell(r.der) << '\n';
  }
  atomic_write_text(path, out.str());
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw FormatError(path + ": bad or missing eval CSV header");

  std::vector<EvalRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto cells = split_commas(line);
    if (cells.size() != 8)
      throw FormatError(where + ": expected 8 fields, got " +
                        std::to_string(cells.size()));
    EvalRow r;
    r.modality = cells[0];
    r.attribute = cells[1];
    r.split = cells[2];
    if (r.modality.empty() || r.attribute.empty() || r.split.empty())
      throw FormatError(where + ": empty key field");
    r.ap = parse_cell(cells[3], where);
    r.auc = parse_cell(cells[4], where);
    r.eer = parse_cell(cells[5], where);
    r.acc = parse_cell(cells[6], where);
    r.der = parse_cell(cells[7], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string merge_eval_reports(const std::vector<std::string>& csv_paths) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<EvalRow, std::string>> merged;  // row + source file

  for (const std::string& path : csv_paths) {
    for (EvalRow& r : read_eval_csv(path)) {
      Key key{r.modality, r.attribute, r.split};
      const auto [it, inserted] =
          merged.try_emplace(std::move(key), std::move(r), path);
      if (!inserted)
        throw FormatError("duplicate key (" + it->second.first.modality +
                          ", " + it->second.first.attribute + ", " +
                          it->second.first.split + ") in " +
                          it->second.second + " and " + path);
    }
  }

  std::ostringstream out;
  out << "modality\tattribute\tsplit\tap\tauc\teer\tacc\tder\n";
  for (const auto& [key, entry] : merged) {
    const EvalRow& r = entry.first;
    out << r.modality << '\t' << r.attribute << '\t' << r.split << '\t'
        << format_cell(r.ap) << '\t' << format_cell(r.auc) << '\t'
        << format_cell(r.eer) << '\t' << format_cell(r.acc) << '\t'
        << format_cell(r.der) << '\n';
  }
  return out.str();
}

void emit_report(const std::vector<std::string>& csv_paths,
                 const std::string& out_path) {
  atomic_write_text(out_path, merge_eval_reports(csv_paths));
}

}  // namespace mmtsd
