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

#ifndef MEDVQA_DATA_RECORDS_HPP_
#define MEDVQA_DATA_RECORDS_HPP_

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "medvqa/core/error.hpp"

namespace medvqa::data {

/// One contrastive-pretraining sample.
struct ImageCaptionRecord {
  std::string image_id;
  std::string image_path;
  std::string caption;
};

enum class AnswerType { open, closed };

inline const char* answer_type_name(AnswerType t) {
  return t == AnswerType::open ? "open" : "closed";
}

/// One VQA sample.
struct VqaRecord {
  std::string image_id;
  std::string image_path;
  std::string question;
  std::string answer;
  AnswerType answer_type = AnswerType::open;
  std::string question_type;
  std::optional<std::string> language;
};

enum class SplitName { train, validation, test };

struct DatasetSplit {
  SplitName name = SplitName::train;
  std::vector<VqaRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Canonical answer form used for vocabulary keys and accuracy matching:
/// lowercase, trimmed, internal whitespace runs collapsed, trailing periods
/// stripped.
inline std::string normalize_answer(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  while (!out.empty() && out.back() == '.') out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

/// Infers answer type when the dataset omits it: yes/no answers are closed.
inline AnswerType infer_answer_type(const std::string& answer) {
  const std::string n = normalize_answer(answer);
  return (n == "yes" || n == "no") ? AnswerType::closed : AnswerType::open;
}

/// Bijection between normalized training answers and contiguous class
/// indices, assigned in first-occurrence order.
class AnswerVocabulary {
 public:
  static AnswerVocabulary build(const DatasetSplit& train) {
    if (train.empty()) {
      throw Error(ErrorKind::EmptySplit,
                  "cannot build answer vocabulary from an empty split");
    }
    AnswerVocabulary vocab;
    for (const auto& rec : train.records) {
      vocab.add(normalize_answer(rec.answer));
    }
    return vocab;
  }

  std::size_t add(const std::string& normalized) {
    auto it = answer_to_index_.find(normalized);
    if (it != answer_to_index_.end()) return it->second;
    const std::size_t idx = index_to_answer_.size();
    answer_to_index_.emplace(normalized, idx);
    index_to_answer_.push_back(normalized);
    return idx;
  }

  std::optional<std::size_t> index_of(const std::string& normalized) const {
    auto it = answer_to_index_.find(normalized);
    if (it == answer_to_index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& answer_of(std::size_t index) const {
    return index_to_answer_.at(index);
  }

  std::size_t size() const { return index_to_answer_.size(); }
  bool empty() const { return index_to_answer_.empty(); }

  const std::vector<std::string>& answers() const { return index_to_answer_; }

 private:
  std::unordered_map<std::string, std::size_t> answer_to_index_;
  std::vector<std::string> index_to_answer_;
};

struct QuestionTypeHistogram {
  // counts for the retained types, with a deterministic display order:
  // descending count, ties lexicographic by type name.
  std::vector<std::pair<std::string, std::size_t>> counts;
  std::size_t total = 0;  // sum over retained counts
};

/// Counts for the top_k most frequent question types in a split.
inline QuestionTypeHistogram question_type_histogram(const DatasetSplit& split,
                                                     std::size_t top_k) {
  std::map<std::string, std::size_t> all;
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    const auto& rec = split.records[i];
    if (rec.question_type.empty()) {
      throw Error(ErrorKind::MissingLabels,
                  "record " + std::to_string(i) + " lacks a question_type");
    }
    ++all[rec.question_type];
  }
  std::vector<std::pair<std::string, std::size_t>> sorted(all.begin(),
                                                          all.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (sorted.size() > top_k) sorted.resize(top_k);

  QuestionTypeHistogram hist;
  hist.counts = std::move(sorted);
  for (const auto& [type, count] : hist.counts) hist.total += count;
  return hist;
}

struct OverlapReport {
  double test_images_in_train = 0.0;  // fraction of distinct test image ids
  bool disjoint = true;
};

/// Fraction of distinct test image ids also present among train image ids.
inline OverlapReport verify_split_images(const DatasetSplit& train,
                                         const DatasetSplit& test) {
  std::set<std::string> train_ids;
  for (const auto& rec : train.records) train_ids.insert(rec.image_id);
  std::set<std::string> test_ids;
  for (const auto& rec : test.records) test_ids.insert(rec.image_id);

  OverlapReport report;
  if (test_ids.empty()) return report;  // fraction 0, disjoint by convention
  std::size_t contained = 0;
  for (const auto& id : test_ids) {
    if (train_ids.count(id)) ++contained;
  }
  report.test_images_in_train =
      static_cast<double>(contained) / static_cast<double>(test_ids.size());
  report.disjoint = contained == 0;
  return report;
}

}  // namespace medvqa::data

#endif  // MEDVQA_DATA_RECORDS_HPP_
