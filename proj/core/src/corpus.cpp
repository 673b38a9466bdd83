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

#include "mmtsd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "mmtsd/rng.hpp"

namespace mmtsd {

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const std::vector<std::string>& event_keys() {
  static const std::vector<std::string> keys = {
      "exclude_enrolled", "female", "include_enrolled", "keynote",
      "male",             "non_speech", "overlap",       "single"};
  return keys;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

const std::map<std::string, std::vector<std::string>>& builtin_templates() {
  static const std::map<std::string, std::vector<std::string>> templates = {
      {"female",
       {
           "find the female speech",
           "mark frames where a woman is talking",
           "detect female voices",
           "when is a woman speaking",
           "highlight the regions with female speakers",
           "locate all female speech segments",
           "show me when women talk",
           "report female speaker activity",
           "pick out the parts where a female voice is active",
           "identify every moment a woman speaks",
           "where do female voices occur",
           "give me the female talking regions",
           "spot the woman speaking in the mix",
           "track the female voice",
           "find spans where women are audible",
           "tell me when a female speaker is active",
           "extract the female voice activity",
           "when do women speak in this recording",
           "flag female speech frames",
           "report the segments spoken by women",
           "find all the women talking",
           "which frames contain a female voice",
           "select the female portions of the audio",
           "detect when a woman talks",
           "label the female speaker regions",
           "when does a woman talk",
           "locate the female speaker activity",
           "show the spans where a woman is audible",
           "identify the female speech regions",
           "extract every span where a woman talks",
           "mark all female speech",
           "detect the women speaking",
           "report when a female voice occurs",
           "flag every frame with a woman talking",
           "select the frames where a female speaks",
           "which regions contain women talking",
           "give me all spans of female speech",
           "highlight when a female speaker talks",
           "tell me where women are speaking",
           "find the frames with an active female voice",
       }},
      {"male",
       {
           "find the male speech",
           "mark frames where a man is talking",
           "detect male voices",
           "when is a man speaking",
           "highlight the regions with male speakers",
           "locate all male speech segments",
           "show me when men talk",
           "report male speaker activity",
           "pick out the parts where a male voice is active",
           "identify every moment a man speaks",
           "where do male voices occur",
           "give me the male talking regions",
           "spot the man speaking in the mix",
           "track the male voice",
           "find spans where men are audible",
           "tell me when a male speaker is active",
           "extract the male voice activity",
           "when do men speak in this recording",
           "flag male speech frames",
           "report the segments spoken by men",
           "find all the men talking",
           "which frames contain a male voice",
           "select the male portions of the audio",
           "detect when a man talks",
           "label the male speaker regions",
           "when does a man talk",
           "locate the male speaker activity",
           "show the spans where a man is audible",
           "identify the male speech regions",
           "extract every span where a man talks",
           "mark all male speech",
           "detect the men speaking",
           "report when a male voice occurs",
           "flag every frame with a man talking",
           "select the frames where a male speaks",
           "which regions contain men talking",
           "give me all spans of male speech",
           "highlight when a male speaker talks",
           "tell me where men are speaking",
           "find the frames with an active male voice",
       }},
      {"non_speech",
       {
           "find the silence",
           "mark frames where nobody is talking",
           "detect regions with no speech",
           "when is nobody speaking",
           "highlight the silent parts",
           "locate all non speech segments",
           "show me when no one talks",
           "report the quiet regions",
           "pick out the parts with no voice at all",
           "identify every moment of silence",
           "where does no speech occur",
           "give me the regions with zero speakers",
           "spot the gaps between speech",
           "track the silent frames",
           "find spans where no voice is audible",
           "tell me when the audio is quiet",
           "extract the non speech activity",
           "when is there no talking in this recording",
           "flag the frames without speech",
           "report the segments where everyone is quiet",
           "find all the pauses with no voices",
           "which frames contain no speech at all",
           "select the silent portions of the audio",
           "detect when nobody talks",
           "label the no speech regions",
           "when does silence occur",
           "locate the quiet spans",
           "show the spans where nobody is audible",
           "identify the regions with no speech at all",
           "extract every span where no one talks",
           "mark all silent frames",
           "detect the silent regions",
           "report when nobody speaks",
           "flag every frame with no voice",
           "select the frames where no one is talking",
           "which regions contain silence",
           "give me all spans of silence",
           "highlight when everything is quiet",
           "tell me where nobody is speaking",
           "find the frames with no active voice",
       }},
      {"single",
       {
           "find frames where exactly one person talks",
           "mark the single speaker regions",
           "detect speech from only one voice",
           "when is a single person speaking",
           "highlight the parts with just one talker",
           "locate all single speaker segments",
           "show me when one speaker talks alone",
           "report the one speaker activity",
           "pick out the parts where a lone voice is active",
           "identify every moment with exactly one voice",
           "where does solo speech occur",
           "give me the regions with one active speaker",
           "spot the moments when only one person speaks",
           "track the lone speaker frames",
           "find spans where a single voice is audible",
           "tell me when just one talker is active",
           "extract the single speaker speech",
           "when does one person speak alone in this recording",
           "flag the frames with exactly one speaker",
           "report the segments spoken by a single voice",
           "find all the solo talking",
           "which frames contain exactly one voice",
           "select the one speaker portions of the audio",
           "detect when only one person talks",
           "label the single voice regions",
           "when does exactly one person talk",
           "locate the solo speech spans",
           "show the spans where only one voice is audible",
           "identify the single speaker regions",
           "extract every span where one person talks alone",
           "mark all solo speech",
           "detect the lone voice speaking",
           "report when a single voice occurs",
           "flag every frame with just one speaker",
           "select the frames where exactly one person speaks",
           "which regions contain a lone talker",
           "give me all spans of solo talking",
           "highlight when a single person is speaking",
           "tell me where only one voice is active",
           "find the frames with one speaker only",
       }},
      {"overlap",
       {
           "find the overlapping speech",
           "mark frames where several people talk at once",
           "detect overlapped voices",
           "when are two or more people speaking together",
           "highlight the regions where speakers overlap",
           "locate all overlapped speech segments",
           "show me when multiple speakers talk simultaneously",
           "report the overlapping speaker activity",
           "pick out the parts where voices collide",
           "identify every moment of simultaneous speech",
           "where does overlapped talk occur",
           "give me the regions with more than one active speaker",
           "spot the moments when people talk over each other",
           "track the overlapping voices",
           "find spans where at least two voices are audible",
           "tell me when multiple talkers are active at the same time",
           "extract the overlapped speech activity",
           "when do speakers overlap in this recording",
           "flag the frames with two or more speakers",
           "report the segments where voices overlap",
           "find all the crosstalk",
           "which frames contain more than one voice",
           "select the overlapping portions of the audio",
           "detect when several people talk at the same time",
           "label the overlapped speech regions",
           "when do voices overlap",
           "locate the crosstalk spans",
           "show the spans where several voices are audible together",
           "identify the overlapped speech regions",
           "extract every span where people talk simultaneously",
           "mark all overlapping speech",
           "detect the simultaneous voices",
           "report when overlapped speech occurs",
           "flag every frame with multiple speakers",
           "select the frames where two or more people speak",
           "which regions contain crosstalk",
           "give me all spans of simultaneous talking",
           "highlight when several people are speaking together",
           "tell me where multiple voices are active",
           "find the frames with overlapping voices",
       }},
      {"keynote",
       {
           "find the keynote speaker",
           "mark the speech of the person who talks the most",
           "detect the dominant speaker",
           "when is the main speaker talking",
           "highlight the regions of the longest talking person",
           "locate the segments of the primary speaker",
           "show me when the dominant voice is active",
           "report the keynote speaker activity",
           "pick out the parts spoken by the most active talker",
           "identify the speech of the person with the longest speaking time",
           "where does the main speaker talk the most",
           "give me the regions of the most dominant speaker",
           "spot the keynote speech",
           "track the speaker with the longest total speaking time",
           "find spans where the primary speaker is audible",
           "tell me when the dominant talker is active",
           "extract the dominant voice activity",
           "when does the main speaker talk in this recording",
           "flag the frames of the longest speaking person",
           "report the segments of the most active speaker",
           "find the person who speaks the most and mark their speech",
           "which frames belong to the dominant talker",
           "select the keynote portions of the audio",
           "detect when the primary voice talks",
           "label the main speaker regions",
           "when does the keynote speaker talk",
           "locate the dominant speaker spans",
           "show the spans where the main voice is audible",
           "identify the primary speaker regions",
           "extract every span where the dominant person talks",
           "mark all speech of the main talker",
           "detect the keynote voice",
           "report when the primary speaker talks",
           "flag every frame of the most active voice",
           "select the frames where the dominant speaker talks",
           "which regions contain the main speaker",
           "give me all spans of the keynote voice",
           "highlight when the longest speaking person talks",
           "tell me where the primary voice is active",
           "find the frames of the speaker who talks the longest",
       }},
      {"include_enrolled",
       {
           "find this speaker",
           "mark frames where the enrolled person is talking",
           "detect the speech of the given voice",
           "when is the enrolled speaker talking",
           "highlight the regions of this person",
           "locate all segments of the target speaker",
           "show me when this voice is active",
           "report the enrolled speaker activity",
           "pick out the parts spoken by the provided voice",
           "identify every moment the target person speaks",
           "where does this speaker talk",
           "give me the regions of the enrolled voice",
           "spot the target speaker talking",
           "track the given speaker",
           "find spans where the enrolled voice is audible",
           "tell me when the target talker is active",
           "extract the speech of this person",
           "when does the enrolled person speak in this recording",
           "flag the frames of the given speaker",
           "report the segments spoken by the target voice",
           "find all the speech from this person",
           "which frames contain the enrolled voice",
           "select the portions spoken by the target person",
           "detect when the given person talks",
           "label the target speaker regions",
           "when does the target speaker talk",
           "locate the enrolled speaker spans",
           "show the spans where the given voice is audible",
           "identify the regions of the target voice",
           "extract every span where the enrolled person talks",
           "mark all speech of this speaker",
           "detect the enrolled voice talking",
           "report when the given speaker talks",
           "flag every frame of the target voice",
           "select the frames where the enrolled speaker talks",
           "which regions contain this voice",
           "give me all spans of the target speaker",
           "highlight when the given person is speaking",
           "tell me where this voice is active",
           "report the activity of this voice",
       }},
      {"exclude_enrolled",
       {
           "find everything except this speaker",
           "mark frames where the enrolled person is not talking",
           "detect the regions without the given voice",
           "when is the enrolled speaker not talking",
           "highlight the regions without this person",
           "locate all segments outside the target speaker",
           "show me when this voice is not active",
           "report the activity of all voices except this one",
           "pick out the parts not spoken by the provided voice",
           "identify every moment outside the speech of the target person",
           "where does this speaker not talk",
           "give me the regions without the enrolled voice",
           "spot the speech outside the enrolled voice",
           "track everyone except the given speaker",
           "find spans where the enrolled voice is not audible",
           "flag the frames of everyone except the enrolled person",
           "extract the audio without the speech of this person",
           "select the portions without the target person",
           "give me the talk outside the given speaker",
           "report the segments not spoken by the target voice",
           "find all the moments without this person",
           "which frames do not contain the enrolled voice",
           "label all speech except the target speaker",
           "detect when the given person does not talk",
           "label the regions outside the target speaker",
           "when does the target speaker not talk",
           "locate the spans without the enrolled speaker",
           "show the spans where the given voice is not audible",
           "identify the regions outside the target voice",
           "extract every span where the enrolled person is not talking",
           "mark all speech except this speaker",
           "detect everything except the enrolled voice",
           "report when the given speaker is not talking",
           "flag every frame without the target voice",
           "select the frames where the enrolled speaker is not talking",
           "which regions do not contain this voice",
           "give me all spans without the target speaker",
           "highlight when the given person is not speaking",
           "tell me where this voice is not active",
           "track the speech of everyone except this person",
       }},
  };
  return templates;
}

TextPromptCorpus build_text_corpus(
    const std::map<std::string, std::vector<std::string>>& templates,
    std::uint64_t seed) {
  TextPromptCorpus corpus;
  Rng rng(hash_combine(seed, "corpus"));

  for (const auto& [event_key, texts] : templates) {
    std::set<std::string> distinct(texts.begin(), texts.end());
    if (distinct.size() < 20)
      throw CorpusError("event '" + event_key + "' has only " +
                        std::to_string(distinct.size()) +
                        " distinct paraphrases (need >= 20)");

    std::vector<std::string> shuffled(distinct.begin(), distinct.end());
    Rng event_rng = rng.fork(event_key);
    event_rng.shuffle(shuffled);

    const int n = static_cast<int>(shuffled.size());
    const int n_val = static_cast<int>(std::lround(0.1 * n));
    const int n_test = static_cast<int>(std::lround(0.1 * n));
    const int n_train = n - n_val - n_test;
    for (int i = 0; i < n; ++i) {
      Split split = Split::train;
      if (i >= n_train + n_val) split = Split::test;
      else if (i >= n_train) split = Split::val;
      corpus.entries.push_back({event_key, shuffled[static_cast<std::size_t>(i)], split});
    }
  }

  // Vocabulary from train-split tokens only, alphabetical index order.
  std::set<std::string> train_tokens;
  for (const auto& e : corpus.entries)
    if (e.split == Split::train)
      for (const auto& tok : tokenize(e.text)) train_tokens.insert(tok);
  int index = 0;
  for (const auto& tok : train_tokens) corpus.vocabulary[tok] = index++;
  return corpus;
}

std::vector<const CorpusEntry*> TextPromptCorpus::split_entries(
    Split split, const std::string& event_key) const {
  std::vector<const CorpusEntry*> out;
  for (const auto& e : entries)
    if (e.split == split && (event_key.empty() || e.event_key == event_key))
      out.push_back(&e);
  return out;
}

std::vector<int> TextPromptCorpus::token_ids(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) {
    auto it = vocabulary.find(tok);
    ids.push_back(it == vocabulary.end() ? oov_index() : it->second);
  }
  return ids;
}

void save_templates(const std::map<std::string, std::vector<std::string>>& t,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  for (const auto& [event_key, texts] : t)
    for (const auto& text : texts) out << event_key << '\t' << text << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

std::map<std::string, std::vector<std::string>> load_templates(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::map<std::string, std::vector<std::string>> templates;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected `event_key<TAB>text`");
    templates[line.substr(0, tab)].push_back(line.substr(tab + 1));
  }
  return templates;
}

void save_vocabulary(const std::map<std::string, int>& vocab,
                     const std::string& path) {
  std::vector<std::string> by_index(vocab.size());
  for (const auto& [tok, idx] : vocab) {
    if (idx < 0 || idx >= static_cast<int>(vocab.size()))
      throw FormatError("vocabulary indices are not dense at: " + tok);
    by_index[static_cast<std::size_t>(idx)] = tok;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  for (const auto& tok : by_index) out << tok << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

std::map<std::string, int> load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::map<std::string, int> vocab;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!vocab.emplace(line, index).second)
      throw FormatError(path + ": duplicate token '" + line + "'");
    ++index;
  }
  return vocab;
}

}  // namespace mmtsd
