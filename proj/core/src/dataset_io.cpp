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

#include "mmtsd/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mmtsd {
namespace {

constexpr char kMagic[] = "MMDS1";            // 5 bytes on disk
constexpr std::size_t kMagicLen = 5;
constexpr char kManifestHeader[] =
    "sample_id\tfeatures\tactivity\tspeakers\tduration_s\tsplit";

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t* v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  *v = static_cast<std::uint32_t>(b[0]) |
       (static_cast<std::uint32_t>(b[1]) << 8) |
       (static_cast<std::uint32_t>(b[2]) << 16) |
       (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

bool get_f32(std::istream& in, float* f) {
  std::uint32_t bits;
  if (!get_u32(in, &bits)) return false;
  std::memcpy(f, &bits, 4);
  return true;
}

// Opens `path + ".tmp"`, streams `body`, then renames over `path`.
template <typename Body>
void atomic_write(const std::string& path, Body&& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp);
    body(out);
    if (!out) throw FormatError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("cannot rename " + tmp + " to " + path);
}

// Reads and checks the magic + dims header; throws FormatError naming path.
void read_header(std::istream& in, const std::string& path,
                 std::uint32_t* rows, std::uint32_t* cols) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) ||
      std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw FormatError("bad dataset magic in " + path);
  if (!get_u32(in, rows) || !get_u32(in, cols))
    throw FormatError("truncated header in " + path);
}

Split parse_split(const std::string& s, const std::string& where) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError(where + ": unknown split tag '" + s + "'");
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

Mat quantize_features_f32(const Mat& features) {
  Mat q(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.size(); ++i)
    q(i) = static_cast<double>(static_cast<float>(features(i)));
  return q;
}

void validate_sample(const DatasetSample& sample) {
  const std::string who = "sample '" + sample.sample_id + "'";
  if (sample.sample_id.empty())
    throw InputError("dataset sample with empty sample_id");
  if (sample.sample_id.find_first_of("\t\n/\\") != std::string::npos)
    throw InputError(who + ": sample_id contains tab, newline, or separator");
  if (sample.features.rows() < 1 || sample.features.cols() < 1)
    throw InputError(who + ": empty feature matrix");
  if (sample.activity.rows() !=
      static_cast<Eigen::Index>(sample.speaker_ids.size()))
    throw InputError(who + ": activity rows do not match speaker ids");
  if (sample.activity.cols() != sample.features.rows())
    throw InputError(who + ": activity columns do not match feature frames");
  if (!std::is_sorted(sample.speaker_ids.begin(), sample.speaker_ids.end()) ||
      std::adjacent_find(sample.speaker_ids.begin(),
                         sample.speaker_ids.end()) != sample.speaker_ids.end())
    throw InputError(who + ": speaker ids must be strictly ascending");
  for (Eigen::Index i = 0; i < sample.activity.size(); ++i)
    if (sample.activity(i) > 1)
      throw InputError(who + ": activity entries must be 0 or 1");
  if (!(sample.duration_s > 0.0))
    throw InputError(who + ": duration must be positive");
}

void write_matrix_f32(const std::string& path, const Mat& m) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kMagic, kMagicLen);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        put_f32(out, static_cast<float>(m(r, c)));
  });
}

Mat read_matrix_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::uint32_t rows = 0, cols = 0;
  read_header(in, path, &rows, &cols);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      float f;
      if (!get_f32(in, &f))
        throw FormatError("truncated feature payload in " + path);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<double>(f);
    }
  if (in.get() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes in " + path);
  return m;
}

void write_matrix_u8(const std::string& path, const MatU8& m) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kMagic, kMagicLen);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        out.put(static_cast<char>(m(r, c)));
  });
}

MatU8 read_matrix_u8(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::uint32_t rows = 0, cols = 0;
  read_header(in, path, &rows, &cols);
  MatU8 m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      const int byte = in.get();
      if (byte == std::ifstream::traits_type::eof())
        throw FormatError("truncated activity payload in " + path);
      if (byte != 0 && byte != 1)
        throw FormatError("activity entry outside {0,1} in " + path);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<std::uint8_t>(byte);
    }
  if (in.get() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes in " + path);
  return m;
}

void save_dataset(const std::vector<DatasetSample>& samples,
                  const std::string& dir) {
  std::set<std::string> ids;
  for (const DatasetSample& s : samples) {
    validate_sample(s);
    if (!ids.insert(s.sample_id).second)
      throw InputError("duplicate sample_id '" + s.sample_id + "'");
  }
  std::filesystem::create_directories(dir);

  std::ostringstream manifest;
  manifest << kManifestHeader << '\n';
  char buf[32];
  for (const DatasetSample& s : samples) {
    const std::string feat = s.sample_id + ".feat";
    const std::string act = s.sample_id + ".act";
    write_matrix_f32(dir + "/" + feat, s.features);
    write_matrix_u8(dir + "/" + act, s.activity);

    std::string speakers;
    for (std::size_t i = 0; i < s.speaker_ids.size(); ++i) {
      if (i) speakers += ',';
      speakers += std::to_string(s.speaker_ids[i]);
    }
    std::snprintf(buf, sizeof buf, "%.17g", s.duration_s);
    manifest << s.sample_id << '\t' << feat << '\t' << act << '\t' << speakers
             << '\t' << buf << '\t' << to_string(s.split) << '\n';
  }
  atomic_write(dir + "/manifest.tsv",
               [&](std::ostream& out) { out << manifest.str(); });
}

std::vector<DatasetSample> load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.tsv";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open " + manifest_path);

  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw FormatError(manifest_path + ": bad or missing manifest header");

  std::vector<DatasetSample> samples;
  std::set<std::string> ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where =
        manifest_path + ":" + std::to_string(line_no);
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 6)
      throw FormatError(where + ": expected 6 tab-separated fields, got " +
                        std::to_string(fields.size()));

    DatasetSample s;
    s.sample_id = fields[0];
    if (!ids.insert(s.sample_id).second)
      throw FormatError(where + ": duplicate sample_id '" + s.sample_id +
                        "'");
    s.features = read_matrix_f32(dir + "/" + fields[1]);
    s.activity = read_matrix_u8(dir + "/" + fields[2]);
    for (const std::string& tok : split_fields(fields[3], ',')) {
      try {
        std::size_t used = 0;
        const int id = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        s.speaker_ids.push_back(id);
      } catch (const std::exception&) {
        throw FormatError(where + ": bad speaker id '" + tok + "'");
      }
    }
    try {
      std::size_t used = 0;
      s.duration_s = std::stod(fields[4], &used);
      if (used != fields[4].size()) throw std::invalid_argument(fields[4]);
    } catch (const std::exception&) {
      throw FormatError(where + ": bad duration '" + fields[4] + "'");
    }
    s.split = parse_split(fields[5], where);

    try {
      validate_sample(s);
    } catch (const InputError& e) {
      throw FormatError(where + ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace mmtsd
