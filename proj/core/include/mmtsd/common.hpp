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

#ifndef MMTSD_COMMON_HPP
#define MMTSD_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mmtsd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatF = Eigen::MatrixXf;
using MatU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid dimensions, hyperparameters, or option values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad runtime inputs (empty text, too-short enrollment, shape mismatch).
class InputError : public Error {
 public:
  using Error::Error;
};

// Turn-taking resampling budget exhausted.
class SimulationError : public Error {
 public:
  using Error::Error;
};

// Paraphrase corpus cannot satisfy its contract.
class CorpusError : public Error {
 public:
  using Error::Error;
};

// Unknown speaker or attribute value.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given labels (e.g. single-class AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Corrupt or mis-shaped files; message names the offending path.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset missing required tracks or records.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

// FNV-1a over raw bytes; used for parameter freeze checks.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace mmtsd

#endif  // MMTSD_COMMON_HPP
