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

#ifndef MEDVQA_VQA_QUESTION_ENCODER_HPP_
#define MEDVQA_VQA_QUESTION_ENCODER_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "medvqa/core/autograd.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/data/tokenizer.hpp"
#include "medvqa/nn/module.hpp"

namespace medvqa::vqa {

/// Pretrained word-embedding table loaded from a text asset: one line per
/// word, the word followed by whitespace-separated reals.
class WordEmbeddings {
 public:
  static WordEmbeddings from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw Error(ErrorKind::EmbeddingAssetMissing,
                  "word embedding asset not found: " + path.string());
    }
    WordEmbeddings emb;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string word;
      ss >> word;
      std::vector<double> vec;
      double v;
      while (ss >> v) vec.push_back(v);
      if (word.empty() || vec.empty()) continue;
      if (emb.dim_ == 0) emb.dim_ = vec.size();
      if (vec.size() != emb.dim_) {
        throw Error(ErrorKind::EmbeddingAssetMissing,
                    "inconsistent embedding width in " + path.string());
      }
      emb.table_.emplace(word, std::move(vec));
    }
    if (emb.table_.empty()) {
      throw Error(ErrorKind::EmbeddingAssetMissing,
                  "empty word embedding asset: " + path.string());
    }
    return emb;
  }

  /// A table with a single deterministic fallback; used for tests.
  static WordEmbeddings synthetic(std::size_t dim,
                                  const std::vector<std::string>& words,
                                  std::uint64_t seed) {
    WordEmbeddings emb;
    emb.dim_ = dim;
    Rng rng(seed);
    for (const auto& w : words) {
      std::vector<double> vec(dim);
      for (auto& v : vec) v = rng.gaussian();
      emb.table_.emplace(w, std::move(vec));
    }
    return emb;
  }

  std::size_t dim() const { return dim_; }

  const std::vector<double>* lookup(const std::string& word) const {
    auto it = table_.find(word);
    return it == table_.end() ? nullptr : &it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

struct QuestionEncoding {
  ag::Var hidden;  // [1, H], the recurrent final state over real tokens
  std::size_t token_count = 0;
};

/// GloVe-style lookup followed by an LSTM; out-of-vocabulary words map to one
/// deterministic fallback vector (drawn once from seed 0 and persisted with
/// the model). Padding beyond the real tokens never reaches the recurrence.
class QuestionEncoder {
 public:
  QuestionEncoder() = default;
  QuestionEncoder(nn::ParamStore& store, const WordEmbeddings& embeddings,
                  std::size_t hidden_size, std::size_t max_tokens, Rng& rng)
      : embeddings_(&embeddings),
        max_tokens_(max_tokens),
        lstm_(store, "question.lstm", embeddings.dim(), hidden_size, rng) {
    oov_fallback_.assign(embeddings.dim(), 0.0);
    Rng fallback_rng(0);
    for (auto& v : oov_fallback_) v = fallback_rng.gaussian();
  }

  QuestionEncoding encode(const std::string& question) const {
    std::vector<std::string> words = data::BpeTokenizer::split_words(question);
    if (words.size() > max_tokens_) words.resize(max_tokens_);

    auto state = lstm_.initial_state();
    for (const auto& word : words) {
      const std::vector<double>* vec = embeddings_->lookup(word);
      Tensor x({1, embeddings_->dim()},
               vec ? *vec : oov_fallback_);
      state = lstm_.step(ag::constant(std::move(x)), state);
    }
    return {state.h, words.size()};
  }

  std::size_t hidden_size() const { return lstm_.hidden_size(); }
  std::size_t max_tokens() const { return max_tokens_; }
  const std::vector<double>& oov_fallback() const { return oov_fallback_; }
  void set_oov_fallback(std::vector<double> v) { oov_fallback_ = std::move(v); }

 private:
  const WordEmbeddings* embeddings_ = nullptr;
  std::size_t max_tokens_ = 12;
  nn::LstmCell lstm_;
  std::vector<double> oov_fallback_;
};

}  // namespace medvqa::vqa

#endif  // MEDVQA_VQA_QUESTION_ENCODER_HPP_
