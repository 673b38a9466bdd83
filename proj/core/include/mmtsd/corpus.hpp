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

#ifndef MMTSD_CORPUS_HPP
#define MMTSD_CORPUS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmtsd/common.hpp"

namespace mmtsd {

// Static paraphrase corpus for the eight supported prompt events. Each
// event ships with >= 20 handwritten command paraphrases; a seeded build
// splits them 80/10/10 into train/val/test and derives the vocabulary from
// the train split only (plus a single OOV bucket).

enum class Split { train, val, test };

const char* to_string(Split s);

// The eight event keys, in canonical (sorted) order.
const std::vector<std::string>& event_keys();

struct CorpusEntry {
  std::string event_key;
  std::string text;
  Split split = Split::train;
};

struct TextPromptCorpus {
  std::vector<CorpusEntry> entries;
  std::map<std::string, int> vocabulary;  // token -> index (train tokens)

  // The OOV bucket is one virtual id past the named vocabulary.
  int oov_index() const { return static_cast<int>(vocabulary.size()); }
  int vocab_size() const { return static_cast<int>(vocabulary.size()) + 1; }

  // Entries of one split, optionally restricted to one event key.
  std::vector<const CorpusEntry*> split_entries(
      Split split, const std::string& event_key = std::string()) const;

  // Token ids for a text under this vocabulary (unknowns -> OOV bucket).
  std::vector<int> token_ids(const std::string& text) const;
};

// lowercase -> non-alphanumeric to spaces -> whitespace split.
std::vector<std::string> tokenize(const std::string& text);

// The shipped paraphrase templates: event_key -> >= 20 distinct commands.
const std::map<std::string, std::vector<std::string>>& builtin_templates();

// Deterministic seeded 80/10/10 split per event; vocabulary from train
// tokens only. Events with fewer than 20 distinct paraphrases throw
// CorpusError.
TextPromptCorpus build_text_corpus(
    const std::map<std::string, std::vector<std::string>>& templates,
    std::uint64_t seed);

// Template file: UTF-8, one `event_key<TAB>text` record per line.
void save_templates(const std::map<std::string, std::vector<std::string>>& t,
                    const std::string& path);
std::map<std::string, std::vector<std::string>> load_templates(
    const std::string& path);

// Vocabulary file: one token per line; index = line number.
void save_vocabulary(const std::map<std::string, int>& vocab,
                     const std::string& path);
std::map<std::string, int> load_vocabulary(const std::string& path);

}  // namespace mmtsd

#endif  // MMTSD_CORPUS_HPP
