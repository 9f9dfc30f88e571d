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

#ifndef MEDVQA_DATA_VQA_DATASET_HPP_
#define MEDVQA_DATA_VQA_DATASET_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medvqa/core/error.hpp"
#include "medvqa/data/records.hpp"

namespace medvqa::data {

enum class Dialect { rad, slake };

inline Dialect parse_dialect(const std::string& name) {
  if (name == "rad") return Dialect::rad;
  if (name == "slake") return Dialect::slake;
  throw Error(ErrorKind::UnknownDialect, "unknown dataset dialect: " + name);
}

inline const char* dialect_name(Dialect d) {
  return d == Dialect::rad ? "rad" : "slake";
}

namespace detail {

inline std::string json_as_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();  // numeric answers appear in the QA files
}

inline const nlohmann::json* find_field(const nlohmann::json& rec,
                                        std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = rec.find(name);
    if (it != rec.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

inline std::vector<VqaRecord> load_qa_file(const std::filesystem::path& file,
                                           Dialect dialect,
                                           const std::filesystem::path& image_dir) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorKind::MissingFile, "QA file not found: " + file.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation,
                file.string() + ": " + std::string(e.what()));
  }
  if (!doc.is_array()) {
    throw Error(ErrorKind::SchemaViolation,
                file.string() + ": expected a JSON array of records");
  }

  std::vector<VqaRecord> records;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& raw = doc[i];
    const auto violation = [&](const std::string& what) {
      return Error(ErrorKind::SchemaViolation,
                   file.string() + ": record " + std::to_string(i) + " " + what);
    };

    if (dialect == Dialect::slake) {
      const auto* lang = find_field(raw, {"q_lang"});
      const std::string tag =
          lang ? json_as_string(*lang) : std::string("en");
      if (tag != "en") continue;  // only the English subset is used
    }

    const auto* image = find_field(raw, {"image_name", "img_name"});
    if (!image) throw violation("is missing the image name field");
    const auto* question = find_field(raw, {"question"});
    if (!question) throw violation("is missing the 'question' field");
    const auto* answer = find_field(raw, {"answer"});
    if (!answer) throw violation("is missing the 'answer' field");

    VqaRecord rec;
    rec.image_id = json_as_string(*image);
    rec.image_path = (image_dir / rec.image_id).string();
    rec.question = json_as_string(*question);
    if (rec.question.empty()) throw violation("has an empty question");
    rec.answer = json_as_string(*answer);

    if (const auto* at = find_field(raw, {"answer_type"})) {
      std::string t = json_as_string(*at);
      for (char& c : t) c = static_cast<char>(std::tolower(
          static_cast<unsigned char>(c)));
      if (t == "open") rec.answer_type = AnswerType::open;
      else if (t == "closed") rec.answer_type = AnswerType::closed;
      else rec.answer_type = infer_answer_type(rec.answer);
    } else {
      rec.answer_type = infer_answer_type(rec.answer);
    }

    if (const auto* qt = find_field(raw, {"question_type", "content_type"})) {
      rec.question_type = json_as_string(*qt);
    }
    if (dialect == Dialect::slake) rec.language = "en";
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace detail

struct VqaDataset {
  DatasetSplit train;
  DatasetSplit test;
  std::filesystem::path image_dir;
};

/// Loads a VQA dataset from disk. Expected layout per dialect:
///   rad:   root/trainset.json, root/testset.json, root/images/
///   slake: root/train.json, root/test.json, root/imgs/
/// For slake, only records tagged q_lang == "en" are retained.
inline VqaDataset load_vqa_dataset(const std::filesystem::path& root,
                                   Dialect dialect) {
  VqaDataset ds;
  std::filesystem::path train_file, test_file;
  if (dialect == Dialect::rad) {
    train_file = root / "trainset.json";
    test_file = root / "testset.json";
    ds.image_dir = root / "images";
  } else {
    train_file = root / "train.json";
    test_file = root / "test.json";
    ds.image_dir = root / "imgs";
  }
  ds.train.name = SplitName::train;
  ds.train.records = detail::load_qa_file(train_file, dialect, ds.image_dir);
  ds.test.name = SplitName::test;
  ds.test.records = detail::load_qa_file(test_file, dialect, ds.image_dir);
  return ds;
}

inline VqaDataset load_vqa_dataset(const std::filesystem::path& root,
                                   const std::string& dialect) {
  return load_vqa_dataset(root, parse_dialect(dialect));
}

}  // namespace medvqa::data

#endif  // MEDVQA_DATA_VQA_DATASET_HPP_
