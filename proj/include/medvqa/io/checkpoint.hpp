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

#ifndef MEDVQA_IO_CHECKPOINT_HPP_
#define MEDVQA_IO_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medvqa/core/error.hpp"
#include "medvqa/core/tensor.hpp"
#include "medvqa/nn/module.hpp"

namespace medvqa::io {

/// Self-describing checkpoint container: a format tag, a JSON header carrying
/// the model kind and a config echo, and named shaped double arrays.
///
/// Layout: magic "MVQACKP1" | u64 header length | header JSON | raw doubles.
struct Checkpoint {
  static constexpr char kMagic[9] = "MVQACKP1";
  static constexpr int kFormatVersion = 1;

  nlohmann::json meta;  // {"kind": ..., "config": {...}, ...}
  std::vector<std::pair<std::string, Tensor>> tensors;

  void set_from(const nn::ParamStore& store) {
    tensors.clear();
    for (const auto& [name, var] : store.params()) {
      tensors.emplace_back(name, var->value);
    }
  }

  /// Copies tensors into an existing parameter store; names and shapes must
  /// match exactly.
  void load_into(nn::ParamStore& store) const {
    const auto& params = store.params();
    if (params.size() != tensors.size()) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "parameter count mismatch: checkpoint has " +
                      std::to_string(tensors.size()) + ", model has " +
                      std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& [name, var] = params[i];
      const auto& [ck_name, ck_tensor] = tensors[i];
      if (name != ck_name) {
        throw Error(ErrorKind::CorruptCheckpoint,
                    "parameter name mismatch at index " + std::to_string(i) +
                        ": expected '" + name + "', found '" + ck_name + "'");
      }
      if (var->value.shape() != ck_tensor.shape()) {
        throw Error(ErrorKind::CorruptCheckpoint,
                    "tensor shape mismatch for '" + name + "'");
      }
      var->value = ck_tensor;
    }
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header = meta;
    header["format"] = kMagic;
    header["format_version"] = kFormatVersion;
    auto& index = header["tensors"] = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
      index.push_back({{"name", name}, {"shape", tensor.shape()}});
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw Error(ErrorKind::CheckpointWriteFailure,
                  "cannot open for write: " + path.string());
    }
    out.write(kMagic, 8);
    const std::uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(),
              static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : tensors) {
      out.write(reinterpret_cast<const char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) {
      throw Error(ErrorKind::CheckpointWriteFailure,
                  "write failed: " + path.string());
    }
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw Error(ErrorKind::WeightsMissing,
                  "checkpoint not found: " + path.string());
    }
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "bad magic in " + path.string());
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len == 0 || len > (1ull << 30)) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "bad header length in " + path.string());
    }
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    if (!in) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "truncated header in " + path.string());
    }
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  std::string("header parse error: ") + e.what());
    }
    if (header.value("format_version", -1) != kFormatVersion) {
      throw Error(ErrorKind::CorruptCheckpoint, "unsupported format version");
    }

    Checkpoint ck;
    for (const auto& entry : header.at("tensors")) {
      Tensor::Shape shape = entry.at("shape").get<Tensor::Shape>();
      Tensor tensor(shape);
      in.read(reinterpret_cast<char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
      if (!in) {
        throw Error(ErrorKind::CorruptCheckpoint,
                    "truncated tensor data in " + path.string());
      }
      ck.tensors.emplace_back(entry.at("name").get<std::string>(),
                              std::move(tensor));
    }
    header.erase("tensors");
    header.erase("format");
    header.erase("format_version");
    ck.meta = std::move(header);
    return ck;
  }
};

}  // namespace medvqa::io

#endif  // MEDVQA_IO_CHECKPOINT_HPP_
