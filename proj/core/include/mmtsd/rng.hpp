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

#ifndef MMTSD_RNG_HPP
#define MMTSD_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

#include "mmtsd/common.hpp"

namespace mmtsd {

// splitmix64 step; the mixing primitive behind stream derivation.
std::uint64_t mix64(std::uint64_t x);

// Order-sensitive combine of a seed with a stream tag / index.
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v);
std::uint64_t hash_combine(std::uint64_t seed, std::string_view tag);

// Deterministic generator (xoshiro256** core seeded via splitmix64).
// All sampling is implemented here so streams are bit-stable across
// platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent substream, e.g. rng.fork("turns") or rng.fork(sample_index).
  Rng fork(std::uint64_t index) const;
  Rng fork(std::string_view tag) const;

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n)
  double normal();                       // N(0, 1), Box-Muller pair cache
  double lognormal(double mu, double sigma);
  double exponential(double mean);
  Vec normal_vec(int n);
  Mat normal_mat(int rows, int cols);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
  std::uint64_t seed_;  // retained for fork()
};

}  // namespace mmtsd

#endif  // MMTSD_RNG_HPP
