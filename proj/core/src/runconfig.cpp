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

#include "mmtsd/runconfig.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mmtsd {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int to_int(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an unsigned integer, got '" + v +
                      "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

// One assignment: raw value text plus a "path:line" tag for messages.
using Setter =
    std::function<void(RunConfig&, const std::string&, const std::string&)>;
using KeyTable = std::map<std::string, std::map<std::string, Setter>>;

#define MMTSD_KEY_INT(section, field) \
  {#field, [](RunConfig& c, const std::string& v, const std::string& w) { \
     c.section.field = to_int(v, w); \
   }}
#define MMTSD_KEY_DOUBLE(section, field) \
  {#field, [](RunConfig& c, const std::string& v, const std::string& w) { \
     c.section.field = to_double(v, w); \
   }}
#define MMTSD_KEY_U64(section, field) \
  {#field, [](RunConfig& c, const std::string& v, const std::string& w) { \
     c.section.field = to_u64(v, w); \
   }}
#define MMTSD_KEY_BOOL(section, field) \
  {#field, [](RunConfig& c, const std::string& v, const std::string& w) { \
     c.section.field = to_bool(v, w); \
   }}

const KeyTable& key_table() {
  static const KeyTable table = {
      {"world",
       {
           MMTSD_KEY_U64(world, seed),
           MMTSD_KEY_INT(world, d_id),
           MMTSD_KEY_INT(world, d_a),
           MMTSD_KEY_INT(world, d_face),
           MMTSD_KEY_DOUBLE(world, frame_rate),
           MMTSD_KEY_DOUBLE(world, duration_s),
           MMTSD_KEY_DOUBLE(world, noise_std),
           MMTSD_KEY_DOUBLE(world, face_noise),
           MMTSD_KEY_DOUBLE(world, turn_mean_s),
           MMTSD_KEY_DOUBLE(world, turn_sigma),
           MMTSD_KEY_DOUBLE(world, pause_mean_s),
           MMTSD_KEY_DOUBLE(world, overlap_prob),
           MMTSD_KEY_DOUBLE(world, overlap_mean_s),
           MMTSD_KEY_INT(world, num_speakers),
       }},
      {"dataset",
       {
           MMTSD_KEY_INT(dataset, speakers),
           MMTSD_KEY_INT(dataset, utterances),
           MMTSD_KEY_DOUBLE(dataset, val_fraction),
           MMTSD_KEY_INT(dataset, test_utterances),
           MMTSD_KEY_INT(dataset, test_speakers),
           MMTSD_KEY_U64(dataset, test_seed_offset),
       }},
      {"model",
       {
           MMTSD_KEY_INT(model, d_a),
           MMTSD_KEY_INT(model, d_model),
           MMTSD_KEY_INT(model, enc_layers),
           MMTSD_KEY_INT(model, dec_layers),
           MMTSD_KEY_INT(model, heads),
           MMTSD_KEY_INT(model, ff),
           MMTSD_KEY_DOUBLE(model, dropout),
           MMTSD_KEY_BOOL(model, use_positions),
       }},
      {"text",
       {
           MMTSD_KEY_INT(text, width),
           MMTSD_KEY_INT(text, layers),
           MMTSD_KEY_INT(text, heads),
           MMTSD_KEY_INT(text, ff),
           MMTSD_KEY_INT(text, max_tokens),
           MMTSD_KEY_INT(text, d_out),
           MMTSD_KEY_INT(text, lora_rank),
           MMTSD_KEY_DOUBLE(text, lora_alpha),
           MMTSD_KEY_DOUBLE(text, dropout),
       }},
      {"speaker",
       {
           MMTSD_KEY_INT(speaker, d_a),
           MMTSD_KEY_INT(speaker, hidden),
           MMTSD_KEY_INT(speaker, d_out),
       }},
      {"face",
       {
           MMTSD_KEY_INT(face, d_face),
           MMTSD_KEY_INT(face, d_emb),
       }},
      {"aligner",
       {
           MMTSD_KEY_INT(aligner, d_in),
           MMTSD_KEY_INT(aligner, h1),
           MMTSD_KEY_INT(aligner, h2),
           MMTSD_KEY_INT(aligner, h3),
           MMTSD_KEY_INT(aligner, h4),
           MMTSD_KEY_INT(aligner, d_out),
       }},
      {"train",
       {
           MMTSD_KEY_DOUBLE(train, lr0),
           MMTSD_KEY_DOUBLE(train, decay),
           MMTSD_KEY_INT(train, epochs),
           MMTSD_KEY_INT(train, batch_size),
           MMTSD_KEY_U64(train, seed),
           MMTSD_KEY_INT(stages, text_epochs),
           MMTSD_KEY_INT(stages, speaker_epochs),
           MMTSD_KEY_INT(stages, aligner_epochs),
       }},
      {"metrics",
       {
           MMTSD_KEY_DOUBLE(metrics, threshold),
           MMTSD_KEY_INT(metrics, median_window),
           MMTSD_KEY_DOUBLE(metrics, collar_s),
       }},
  };
  return table;
}

#undef MMTSD_KEY_INT
#undef MMTSD_KEY_DOUBLE
#undef MMTSD_KEY_U64
#undef MMTSD_KEY_BOOL

}  // namespace

void RunConfig::validate() const {
  world.validate();
  train.validate();

  if (dataset.speakers < 2)
    throw ConfigError("dataset.speakers must be >= 2");
  if (dataset.utterances < 1)
    throw ConfigError("dataset.utterances must be >= 1");
  if (dataset.val_fraction < 0.0 || dataset.val_fraction >= 1.0)
    throw ConfigError("dataset.val_fraction must be in [0, 1)");
  if (dataset.test_utterances < 0)
    throw ConfigError("dataset.test_utterances must be >= 0");
  if (dataset.test_speakers < 2)
    throw ConfigError("dataset.test_speakers must be >= 2");

  if (stages.text_epochs < -1 || stages.speaker_epochs < -1 ||
      stages.aligner_epochs < -1)
    throw ConfigError("stage epoch overrides must be >= -1");

  if (metrics.threshold <= 0.0 || metrics.threshold >= 1.0)
    throw ConfigError("metrics.threshold must be in (0, 1)");
  if (metrics.median_window < 1 || metrics.median_window % 2 == 0)
    throw ConfigError("metrics.median_window must be odd and >= 1");
  if (metrics.collar_s < 0.0)
    throw ConfigError("metrics.collar_s must be >= 0");

  if (model.d_a != world.d_a)
    throw ConfigError("model.d_a must equal world.d_a");
  if (speaker.d_a != world.d_a)
    throw ConfigError("speaker.d_a must equal world.d_a");
  if (face.d_face != world.d_face)
    throw ConfigError("face.d_face must equal world.d_face");
  if (aligner.d_in != face.d_emb)
    throw ConfigError("aligner.d_in must equal face.d_emb");
  if (text.d_out != model.d_model)
    throw ConfigError("text.d_out must equal model.d_model");
  if (speaker.d_out != model.d_model)
    throw ConfigError("speaker.d_out must equal model.d_model");
  if (aligner.d_out != model.d_model)
    throw ConfigError("aligner.d_out must equal model.d_model");
}

RunConfig parse_runconfig(const std::string& text) {
  RunConfig cfg;
  const KeyTable& table = key_table();
  const std::map<std::string, Setter>* section = nullptr;
  std::string section_name;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": unterminated section header");
      section_name = trim(line.substr(1, line.size() - 2));
      const auto it = table.find(section_name);
      if (it == table.end())
        throw ConfigError(where + ": unknown section [" + section_name + "]");
      section = &it->second;
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(where + ": expected 'key = value'");
    if (section == nullptr)
      throw ConfigError(where + ": key '" + key + "' before any section");

    const auto it = section->find(key);
    if (it == section->end())
      throw ConfigError(where + ": unknown key '" + key + "' in section [" +
                        section_name + "]");
    it->second(cfg, value, where);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_runconfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream body;
  body << in.rdbuf();
  try {
    return parse_runconfig(body.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace mmtsd
