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

#include "mmtsd/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace mmtsd {
namespace {

constexpr char kMagic[6] = {'M', 'M', 'T', 'S', 'D', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
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

bool get_f64(std::istream& in, double* v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(v, &bits, sizeof bits);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const CheckpointHeader& header) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, header.version);
    put_u32(out, header.d_model);
    put_u32(out, header.enc_layers);
    put_u32(out, header.dec_layers);
    for (const auto& [name, tensor] : ps.all()) {
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u32(out, 2);  // all parameters are matrices
      put_u32(out, static_cast<std::uint32_t>(tensor.rows()));
      put_u32(out, static_cast<std::uint32_t>(tensor.cols()));
      const Mat& v = tensor.value();
      for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) put_f64(out, v(r, c));
    }
    if (!out) throw FormatError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("cannot rename " + tmp + " to " + path);
}

CheckpointHeader load_checkpoint(const std::string& path, ParamStore& ps) {
  if (ps.size() != 0)
    throw ConfigError("load_checkpoint: target store must be empty");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);

  char magic[6];
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError("bad checkpoint magic in " + path);

  CheckpointHeader header;
  if (!get_u32(in, &header.version) || !get_u32(in, &header.d_model) ||
      !get_u32(in, &header.enc_layers) || !get_u32(in, &header.dec_layers))
    throw FormatError("truncated checkpoint header in " + path);
  if (header.version != 1)
    throw FormatError("unsupported checkpoint version in " + path);

  std::uint32_t name_len;
  while (get_u32(in, &name_len)) {
    if (name_len == 0 || name_len > 4096)
      throw FormatError("implausible name length in " + path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw FormatError("truncated block name in " + path);
    std::uint32_t rank, rows, cols;
    if (!get_u32(in, &rank) || rank != 2 || !get_u32(in, &rows) ||
        !get_u32(in, &cols))
      throw FormatError("bad block shape for '" + name + "' in " + path);
    Mat v(rows, cols);
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c)
        if (!get_f64(in, &v(r, c)))
          throw FormatError("truncated values for '" + name + "' in " + path);
    ps.add(name, std::move(v));
  }
  return header;
}

}  // namespace mmtsd
