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

#ifndef MEDVQA_DATA_CAPTION_CORPUS_HPP_
#define MEDVQA_DATA_CAPTION_CORPUS_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "medvqa/core/error.hpp"
#include "medvqa/data/records.hpp"

namespace medvqa::data {

struct CaptionCorpus {
  std::vector<ImageCaptionRecord> records;
  // one line per skipped row, naming the offending image_id
  std::vector<std::string> diagnostics;
};

/// Loads a caption corpus manifest: UTF-8 TSV, one record per line, columns
/// (image_id, image relative path, caption), no header. Paths resolve
/// relative to the manifest's directory. Rows whose image file is absent are
/// reported in `diagnostics` and excluded from `records`.
inline CaptionCorpus load_image_caption_corpus(
    const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::MissingFile,
                "manifest not found: " + manifest_path.string());
  }
  const std::filesystem::path base = manifest_path.parent_path();

  CaptionCorpus corpus;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const std::size_t tab1 = line.find('\t');
    const std::size_t tab2 =
        tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw Error(ErrorKind::MalformedRow,
                  "row " + std::to_string(row) + " of " +
                      manifest_path.string() + " does not have 3 columns");
    }

    ImageCaptionRecord rec;
    rec.image_id = line.substr(0, tab1);
    const std::string rel = line.substr(tab1 + 1, tab2 - tab1 - 1);
    rec.caption = line.substr(tab2 + 1);
    rec.image_path = (base / rel).string();

    // strip surrounding whitespace from the caption for the non-empty check
    std::string stripped = rec.caption;
    while (!stripped.empty() &&
           std::isspace(static_cast<unsigned char>(stripped.front()))) {
      stripped.erase(stripped.begin());
    }
    while (!stripped.empty() &&
           std::isspace(static_cast<unsigned char>(stripped.back()))) {
      stripped.pop_back();
    }
    if (stripped.empty()) {
      throw Error(ErrorKind::MalformedRow,
                  "row " + std::to_string(row) + " of " +
                      manifest_path.string() + " has an empty caption");
    }

    if (!std::filesystem::exists(rec.image_path)) {
      corpus.diagnostics.push_back("row " + std::to_string(row) +
                                   ": missing image file for image_id '" +
                                   rec.image_id + "' (" + rec.image_path + ")");
      continue;
    }
    corpus.records.push_back(std::move(rec));
  }

  if (corpus.records.empty()) {
    throw Error(ErrorKind::EmptyCorpus,
                "no valid rows in manifest: " + manifest_path.string());
  }
  return corpus;
}

}  // namespace medvqa::data

#endif  // MEDVQA_DATA_CAPTION_CORPUS_HPP_
