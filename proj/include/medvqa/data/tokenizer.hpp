// Copyright 2026 The medvqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEDVQA_DATA_TOKENIZER_HPP_
#define MEDVQA_DATA_TOKENIZER_HPP_

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "medvqa/core/error.hpp"

namespace medvqa::data {

/// Fixed-width token id sequence; padding id 0 occupies positions >= length.
struct TokenSequence {
  std::vector<std::size_t> ids;
  std::size_t length = 0;  // count of non-padding tokens
};

inline constexpr std::size_t kPadTokenId = 0;
inline constexpr std::size_t kDefaultContextWindow = 76;

/// Byte-pair-encoding tokenizer over lowercased words. The vocabulary asset
/// is a JSON file: {"vocab": {symbol -> id >= 1}, "merges": ["a b", ...]}.
/// Word-final symbols carry a "</w>" suffix; id 0 is reserved for padding.
class BpeTokenizer {
 public:
  static BpeTokenizer from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw Error(ErrorKind::VocabularyMissing,
                  "tokenizer asset not found: " + path.string());
    }
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::VocabularyMissing,
                  "tokenizer asset unreadable: " + std::string(e.what()));
    }
    BpeTokenizer tok;
    for (const auto& [symbol, id] : doc.at("vocab").items()) {
      const std::size_t v = id.get<std::size_t>();
      if (v == kPadTokenId) {
        throw Error(ErrorKind::VocabularyMissing,
                    "token id 0 is reserved for padding");
      }
      tok.vocab_[symbol] = v;
      tok.max_id_ = std::max(tok.max_id_, v);
    }
    if (doc.contains("merges")) {
      std::size_t rank = 0;
      for (const auto& merge : doc.at("merges")) {
        const std::string m = merge.get<std::string>();
        const std::size_t sp = m.find(' ');
        if (sp == std::string::npos) continue;
        tok.merges_[{m.substr(0, sp), m.substr(sp + 1)}] = rank++;
      }
    }
    if (tok.vocab_.empty()) {
      throw Error(ErrorKind::VocabularyMissing, "tokenizer vocabulary empty");
    }
    return tok;
  }

  /// Trims to the context window, zero-pads shorter sequences.
  TokenSequence encode(const std::string& caption,
                       std::size_t context_window = kDefaultContextWindow) const {
    TokenSequence seq;
    seq.ids.assign(context_window, kPadTokenId);
    std::size_t pos = 0;
    for (const std::string& word : split_words(caption)) {
      for (const std::string& symbol : bpe(word)) {
        if (pos >= context_window) break;
        seq.ids[pos++] = symbol_id(symbol);
      }
      if (pos >= context_window) break;
    }
    seq.length = pos;
    return seq;
  }

  /// One past the largest valid token id.
  std::size_t id_range() const { return max_id_ + 1; }

  static std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string word;
    for (char ch : text) {
      const unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        word += static_cast<char>(std::tolower(c));
      } else if (!word.empty()) {
        words.push_back(word);
        word.clear();
      }
    }
    if (!word.empty()) words.push_back(word);
    return words;
  }

 private:
  std::size_t symbol_id(const std::string& symbol) const {
    auto it = vocab_.find(symbol);
    if (it != vocab_.end()) return it->second;
    auto unk = vocab_.find("<unk>");
    return unk != vocab_.end() ? unk->second : max_id_;
  }

  std::vector<std::string> bpe(const std::string& word) const {
    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < word.size(); ++i) {
      symbols.emplace_back(1, word[i]);
    }
    if (!symbols.empty()) symbols.back() += "</w>";

    while (symbols.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = merges_.find({symbols[i], symbols[i + 1]});
        if (it != merges_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_pos = i;
        }
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) break;
      symbols[best_pos] += symbols[best_pos + 1];
      symbols.erase(symbols.begin() +
                    static_cast<std::ptrdiff_t>(best_pos + 1));
    }
    return symbols;
  }

  std::unordered_map<std::string, std::size_t> vocab_;
  std::map<std::pair<std::string, std::string>, std::size_t> merges_;
  std::size_t max_id_ = 1;
};

}  // namespace medvqa::data

#endif  // MEDVQA_DATA_TOKENIZER_HPP_
