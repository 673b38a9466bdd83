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

// Flat binary checkpoint format ("MMTSD1"):
//   magic "MMTSD1" (6 bytes)
//   version, d_model, enc_layers, dec_layers  (little-endian uint32 each)
//   parameter blocks until EOF, each:
//     name_len (uint32), name bytes,
//     rank (uint32), dims (uint32 x rank),
//     values (little-endian IEEE-754 doubles, row-major)
// Blocks are written in sorted name order; writes go to a temp file and are
// renamed into place so a crash never leaves a torn checkpoint behind.

#ifndef MMTSD_CHECKPOINT_HPP
#define MMTSD_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "mmtsd/nn.hpp"

namespace mmtsd {

struct CheckpointHeader {
  std::uint32_t version = 1;
  std::uint32_t d_model = 0;
  std::uint32_t enc_layers = 0;
  std::uint32_t dec_layers = 0;
};

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const CheckpointHeader& header);

// Loads into an empty store (ConfigError if not empty); every parameter is
// registered trainable — callers re-apply their freeze policy. Corruption,
// truncation, or a bad magic throw FormatError naming the path.
CheckpointHeader load_checkpoint(const std::string& path, ParamStore& ps);

}  // namespace mmtsd

#endif  // MMTSD_CHECKPOINT_HPP
