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

#ifndef MEDVQA_TESTS_FIXTURES_HPP_
#define MEDVQA_TESTS_FIXTURES_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medvqa/clip/backbone.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/io/csv.hpp"
#include "medvqa/vqa/model.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh scratch directory under the system temp root, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::size_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("medvqa_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Writes a square grayscale PGM whose pixels are a deterministic function of
/// the seed.
inline fs::path write_pgm(const fs::path& path, std::size_t size,
                          std::uint64_t seed) {
  medvqa::Rng rng(seed);
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << size << " " << size << "\n255\n";
  for (std::size_t i = 0; i < size * size; ++i) {
    out.put(static_cast<char>(rng.index(256)));
  }
  return path;
}

/// Writes a constant-valued grayscale PGM.
inline fs::path write_constant_pgm(const fs::path& path, std::size_t size,
                                   unsigned char value) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << size << " " << size << "\n255\n";
  for (std::size_t i = 0; i < size * size; ++i) {
    out.put(static_cast<char>(value));
  }
  return path;
}

/// TSV caption manifest plus the referenced images.
inline fs::path write_caption_manifest(
    const fs::path& dir, const std::vector<std::pair<std::string, std::string>>&
                             id_caption_pairs,
    std::size_t image_size = 16) {
  std::string text;
  std::uint64_t seed = 1;
  for (const auto& [id, caption] : id_caption_pairs) {
    const std::string file = id + ".pgm";
    write_pgm(dir / file, image_size, seed++);
    text += id + "\t" + file + "\t" + caption + "\n";
  }
  const fs::path manifest = dir / "manifest.tsv";
  medvqa::io::write_text_file(manifest.string(), text);
  return manifest;
}

/// Minimal BPE tokenizer asset covering lowercase letters and a few words.
inline fs::path write_tokenizer_asset(const fs::path& path) {
  nlohmann::json vocab;
  int id = 1;
  vocab["<unk>"] = id++;
  for (char c = 'a'; c <= 'z'; ++c) {
    vocab[std::string(1, c)] = id++;
    vocab[std::string(1, c) + "</w>"] = id++;
  }
  for (char c = '0'; c <= '9'; ++c) {
    vocab[std::string(1, c)] = id++;
    vocab[std::string(1, c) + "</w>"] = id++;
  }
  for (const std::string word :
       {"the</w>", "lung</w>", "chest</w>", "scan</w>", "image</w>", "is</w>",
        "of</w>", "a</w>"}) {
    vocab[word] = id++;
  }
  nlohmann::json merges = nlohmann::json::array();
  merges.push_back("t he</w>");
  merges.push_back("h e</w>");
  merges.push_back("i s</w>");
  merges.push_back("o f</w>");
  nlohmann::json asset = {{"vocab", vocab}, {"merges", merges}};
  medvqa::io::write_text_file(path.string(), asset.dump());
  return path;
}

/// Word-embedding asset (one word per line) over a fixed clinical-ish
/// vocabulary, deterministic values.
inline fs::path write_embedding_asset(const fs::path& path, std::size_t dim) {
  const std::vector<std::string> words = {
      "is",   "there", "a",     "the",  "what",  "organ", "lung",
      "yes",  "no",    "chest", "scan", "shown", "mass",  "fracture",
      "left", "right", "image", "in",   "this",  "visible"};
  medvqa::Rng rng(7);
  std::string text;
  for (const auto& w : words) {
    text += w;
    for (std::size_t d = 0; d < dim; ++d) {
      text += " " + std::to_string(rng.gaussian());
    }
    text += "\n";
  }
  medvqa::io::write_text_file(path.string(), text);
  return path;
}

struct QaEntry {
  std::string image;        // file name written under the image directory
  std::string question;
  std::string answer;
  std::string answer_type;  // may be empty to exercise inference
  std::string question_type;
  std::string q_lang;       // slake only
};

/// Writes a VQA dataset root in either dialect, creating the images.
inline fs::path write_vqa_root(const fs::path& dir, const std::string& dialect,
                               const std::vector<QaEntry>& train,
                               const std::vector<QaEntry>& test,
                               std::size_t image_size = 16) {
  const bool rad = dialect == "rad";
  const fs::path image_dir = dir / (rad ? "images" : "imgs");
  fs::create_directories(image_dir);
  std::uint64_t seed = 11;
  auto to_json = [&](const std::vector<QaEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
      if (!fs::exists(image_dir / e.image)) {
        write_pgm(image_dir / e.image, image_size, seed++);
      }
      nlohmann::json rec = {{rad ? "image_name" : "img_name", e.image},
                            {"question", e.question},
                            {"answer", e.answer}};
      if (!e.answer_type.empty()) rec["answer_type"] = e.answer_type;
      rec[rad ? "question_type" : "content_type"] = e.question_type;
      if (!rad && !e.q_lang.empty()) rec["q_lang"] = e.q_lang;
      arr.push_back(rec);
    }
    return arr;
  };
  medvqa::io::write_text_file(
      (dir / (rad ? "trainset.json" : "train.json")).string(),
      to_json(train).dump(2));
  medvqa::io::write_text_file(
      (dir / (rad ? "testset.json" : "test.json")).string(),
      to_json(test).dump(2));
  return dir;
}

/// Desk-sized dual-encoder architecture used throughout the tests.
inline medvqa::clip::BackboneConfig tiny_backbone(bool vit = false) {
  medvqa::clip::BackboneConfig c;
  c.kind = vit ? medvqa::clip::Backbone::vit_b32 : medvqa::clip::Backbone::rn50;
  c.resolution = 16;
  c.embed_dim = 8;
  c.conv_width1 = 2;
  c.conv_width2 = 3;
  c.grid_channels = 4;
  c.patch_size = 8;
  c.vit_width = 6;
  c.vit_mlp_dim = 8;
  c.text_vocab_size = 160;
  c.text_width = 6;
  c.context_window = 76;
  return c;
}

inline medvqa::vqa::CdaeConfig tiny_cdae() {
  medvqa::vqa::CdaeConfig c;
  c.input_size = 16;
  c.channels1 = 2;
  c.channels2 = 3;
  c.channels3 = 2;
  c.pool = 2;
  return c;  // latent_dim 8
}

inline medvqa::vqa::VqaModelConfig tiny_vqa_config() {
  medvqa::vqa::VqaModelConfig c;
  c.cdae = tiny_cdae();
  c.ban.glimpses = 2;
  c.ban.joint_dim = 6;
  c.ban.fused_dim = 8;
  c.question_hidden = 6;
  c.max_tokens = 12;
  c.classifier_hidden = 8;
  return c;
}

}  // namespace fixtures

#endif  // MEDVQA_TESTS_FIXTURES_HPP_
