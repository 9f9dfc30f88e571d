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

#ifndef MEDVQA_CLI_CONFIG_HPP_
#define MEDVQA_CLI_CONFIG_HPP_

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "medvqa/clip/pretrain.hpp"
#include "medvqa/harness/experiment.hpp"
#include "medvqa/io/csv.hpp"

namespace medvqa::cli {

/// Leaf value types of the configuration schema: 'u' unsigned integer,
/// 'd' real, 'b' boolean, 's' string. Unknown keys are rejected before any
/// work starts.
inline const std::map<std::string, char>& config_schema() {
  static const std::map<std::string, char> schema = {
      {"data.root", 's'},
      {"data.dialect", 's'},
      {"data.caption_manifest", 's'},
      {"data.val_caption_manifest", 's'},
      {"pretrain.epochs", 'u'},
      {"pretrain.batch_size", 'u'},
      {"pretrain.learning_rate", 'd'},
      {"pretrain.backbone", 's'},
      {"pretrain.context_window", 'u'},
      {"pretrain.seed", 'u'},
      {"pretrain.logit_scale_init", 'd'},
      {"pretrain.backbone_config.kind", 's'},
      {"pretrain.backbone_config.resolution", 'u'},
      {"pretrain.backbone_config.embed_dim", 'u'},
      {"pretrain.backbone_config.conv_width1", 'u'},
      {"pretrain.backbone_config.conv_width2", 'u'},
      {"pretrain.backbone_config.grid_channels", 'u'},
      {"pretrain.backbone_config.patch_size", 'u'},
      {"pretrain.backbone_config.vit_width", 'u'},
      {"pretrain.backbone_config.vit_mlp_dim", 'u'},
      {"pretrain.backbone_config.text_vocab_size", 'u'},
      {"pretrain.backbone_config.text_width", 'u'},
      {"pretrain.backbone_config.context_window", 'u'},
      {"vqa.profile", 's'},
      {"vqa.epochs", 'u'},
      {"vqa.batch_size", 'u'},
      {"vqa.learning_rate", 'd'},
      {"vqa.backbone", 's'},
      {"vqa.checkpoint_in", 's'},
      {"vqa.repetitions", 'u'},
      {"vqa.seed_base", 'u'},
      {"vqa.deterministic", 'b'},
      {"vqa.model.question_hidden", 'u'},
      {"vqa.model.max_tokens", 'u'},
      {"vqa.model.classifier_hidden", 'u'},
      {"vqa.model.cdae.input_size", 'u'},
      {"vqa.model.cdae.channels1", 'u'},
      {"vqa.model.cdae.channels2", 'u'},
      {"vqa.model.cdae.channels3", 'u'},
      {"vqa.model.cdae.pool", 'u'},
      {"vqa.model.cdae.noise_sigma", 'd'},
      {"vqa.model.ban.glimpses", 'u'},
      {"vqa.model.ban.joint_dim", 'u'},
      {"vqa.model.ban.fused_dim", 'u'},
      {"assets.tokenizer", 's'},
      {"assets.embeddings", 's'},
      {"assets.weights", 's'},
  };
  return schema;
}

namespace detail {

inline void check_leaf_type(const std::string& key, char type,
                            const nlohmann::json& v) {
  const bool ok = (type == 'u' && v.is_number_integer() &&
                   (!v.is_number_integer() || v.get<long long>() >= 0)) ||
                  (type == 'u' && v.is_number_unsigned()) ||
                  (type == 'd' && v.is_number()) ||
                  (type == 'b' && v.is_boolean()) ||
                  (type == 's' && v.is_string());
  if (!ok) {
    throw Error(ErrorKind::ConfigError,
                "config key '" + key + "' has the wrong type");
  }
}

inline void validate_tree(const nlohmann::json& node,
                          const std::string& prefix) {
  if (!node.is_object()) {
    throw Error(ErrorKind::ConfigError,
                "config section '" + prefix + "' must be an object");
  }
  for (const auto& [name, value] : node.items()) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (value.is_object()) {
      validate_tree(value, key);
      continue;
    }
    auto it = config_schema().find(key);
    if (it == config_schema().end()) {
      throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
    }
    check_leaf_type(key, it->second, value);
  }
}

inline nlohmann::json parse_override_value(const std::string& key, char type,
                                           const std::string& text) {
  try {
    std::size_t used = 0;
    switch (type) {
      case 'u': {
        if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
        unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      case 'd': {
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      case 'b':
        if (text == "true") return true;
        if (text == "false") return false;
        throw std::invalid_argument(text);
      default:
        return text;
    }
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError,
                "invalid value '" + text + "' for config key '" + key + "'");
  }
}

}  // namespace detail

/// Applies one `key=value` override with dotted-key addressing; the key must
/// exist in the schema and the value must parse as the schema type.
inline void apply_override(nlohmann::json& config, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::ConfigError,
                "override must look like key=value, got '" + spec + "'");
  }
  const std::string key = spec.substr(0, eq);
  auto it = config_schema().find(key);
  if (it == config_schema().end()) {
    throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
  }
  nlohmann::json value =
      detail::parse_override_value(key, it->second, spec.substr(eq + 1));
  nlohmann::json* node = &config;
  std::size_t start = 0;
  for (auto dot = key.find('.'); dot != std::string::npos;
       start = dot + 1, dot = key.find('.', start)) {
    node = &(*node)[key.substr(start, dot - start)];
  }
  (*node)[key.substr(start)] = std::move(value);
}

/// Fully resolved configuration for one CLI invocation.
struct RootConfig {
  nlohmann::json raw;

  std::string data_root;
  data::Dialect dialect = data::Dialect::rad;
  std::string caption_manifest;
  std::string val_caption_manifest;

  clip::PretrainConfig pretrain;
  std::optional<clip::BackboneConfig> pretrain_backbone_config;

  harness::ExperimentConfig vqa;

  std::string tokenizer_asset;
  std::string embeddings_asset;
  std::string weights_asset;

  clip::BackboneConfig resolved_backbone() const {
    if (pretrain_backbone_config) return *pretrain_backbone_config;
    clip::BackboneConfig c = clip::BackboneConfig::preset(pretrain.backbone);
    c.context_window = pretrain.context_window;
    return c;
  }

  nlohmann::json resolved_json() const {
    return {{"data",
             {{"root", data_root},
              {"dialect", data::dialect_name(dialect)},
              {"caption_manifest", caption_manifest},
              {"val_caption_manifest", val_caption_manifest}}},
            {"pretrain",
             {{"epochs", pretrain.epochs},
              {"batch_size", pretrain.batch_size},
              {"learning_rate", pretrain.learning_rate},
              {"backbone", clip::backbone_name(pretrain.backbone)},
              {"context_window", pretrain.context_window},
              {"logit_scale_init", pretrain.logit_scale_init},
              {"seed", pretrain.seed},
              {"backbone_config", resolved_backbone().to_json()}}},
            {"vqa", vqa.resolved_json()},
            {"assets",
             {{"tokenizer", tokenizer_asset},
              {"embeddings", embeddings_asset},
              {"weights", weights_asset}}}};
  }
};

namespace detail {

/// Relative asset paths resolve under MEDVQA_ASSET_DIR when it is set.
inline std::string resolve_asset(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  if (const char* root = std::getenv("MEDVQA_ASSET_DIR")) {
    return (std::filesystem::path(root) / path).string();
  }
  return path;
}

template <typename T>
T section_value(const nlohmann::json& section, const char* name, T fallback) {
  if (!section.contains(name)) return fallback;
  return section.at(name).get<T>();
}

}  // namespace detail

/// Validates the JSON tree against the schema and resolves every section,
/// including mevf/qcr profile defaults.
inline RootConfig parse_root_config(nlohmann::json j) {
  detail::validate_tree(j, "");
  RootConfig c;

  const nlohmann::json data = j.value("data", nlohmann::json::object());
  c.data_root = detail::section_value<std::string>(data, "root", "");
  if (data.contains("dialect")) {
    try {
      c.dialect = data::parse_dialect(data.at("dialect").get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError,
                  "invalid value for config key 'data.dialect'");
    }
  }
  c.caption_manifest =
      detail::section_value<std::string>(data, "caption_manifest", "");
  c.val_caption_manifest =
      detail::section_value<std::string>(data, "val_caption_manifest", "");

  const nlohmann::json pre = j.value("pretrain", nlohmann::json::object());
  c.pretrain.epochs =
      detail::section_value<std::size_t>(pre, "epochs", c.pretrain.epochs);
  c.pretrain.batch_size = detail::section_value<std::size_t>(
      pre, "batch_size", c.pretrain.batch_size);
  c.pretrain.learning_rate = detail::section_value<double>(
      pre, "learning_rate", c.pretrain.learning_rate);
  if (pre.contains("backbone")) {
    try {
      c.pretrain.backbone =
          clip::parse_backbone(pre.at("backbone").get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError,
                  "invalid value for config key 'pretrain.backbone'");
    }
  }
  c.pretrain.context_window = detail::section_value<std::size_t>(
      pre, "context_window", c.pretrain.context_window);
  c.pretrain.seed =
      detail::section_value<std::uint64_t>(pre, "seed", c.pretrain.seed);
  c.pretrain.logit_scale_init = detail::section_value<double>(
      pre, "logit_scale_init", c.pretrain.logit_scale_init);
  if (pre.contains("backbone_config")) {
    nlohmann::json bc = clip::BackboneConfig::preset(c.pretrain.backbone)
                            .to_json();
    bc.update(pre.at("backbone_config"));
    c.pretrain_backbone_config = clip::BackboneConfig::from_json(bc);
  }
  c.pretrain.validate();

  const nlohmann::json vqa = j.value("vqa", nlohmann::json::object());
  if (vqa.contains("profile")) {
    c.vqa.profile =
        harness::parse_profile(vqa.at("profile").get<std::string>());
  }
  if (vqa.contains("epochs")) {
    c.vqa.epochs = vqa.at("epochs").get<std::size_t>();
  }
  if (vqa.contains("batch_size")) {
    c.vqa.batch_size = vqa.at("batch_size").get<std::size_t>();
  }
  if (vqa.contains("learning_rate")) {
    c.vqa.learning_rate = vqa.at("learning_rate").get<double>();
  }
  if (vqa.contains("backbone")) {
    try {
      c.vqa.backbone =
          clip::parse_backbone(vqa.at("backbone").get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError,
                  "invalid value for config key 'vqa.backbone'");
    }
  }
  c.vqa.checkpoint_in =
      detail::section_value<std::string>(vqa, "checkpoint_in", "");
  c.vqa.dataset = c.dialect;
  c.vqa.repetitions =
      detail::section_value<std::size_t>(vqa, "repetitions", c.vqa.repetitions);
  c.vqa.seed_base =
      detail::section_value<std::uint64_t>(vqa, "seed_base", c.vqa.seed_base);
  c.vqa.deterministic =
      detail::section_value<bool>(vqa, "deterministic", c.vqa.deterministic);
  if (vqa.contains("model")) {
    nlohmann::json model = c.vqa.model.to_json();
    nlohmann::json patch = vqa.at("model");
    if (patch.contains("cdae")) {
      model["cdae"].update(patch["cdae"]);
      patch.erase("cdae");
    }
    if (patch.contains("ban")) {
      model["ban"].update(patch["ban"]);
      patch.erase("ban");
    }
    model.update(patch);
    c.vqa.model = vqa::VqaModelConfig::from_json(model);
  }
  c.vqa.validate();

  const nlohmann::json assets = j.value("assets", nlohmann::json::object());
  c.tokenizer_asset = detail::resolve_asset(
      detail::section_value<std::string>(assets, "tokenizer", ""));
  c.embeddings_asset = detail::resolve_asset(
      detail::section_value<std::string>(assets, "embeddings", ""));
  c.weights_asset = detail::resolve_asset(
      detail::section_value<std::string>(assets, "weights", ""));

  c.raw = std::move(j);
  return c;
}

inline RootConfig load_root_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError,
                "config file " + path + " is not valid JSON: " + e.what());
  }
  for (const auto& spec : overrides) apply_override(j, spec);
  return parse_root_config(std::move(j));
}

/// Never reuses an existing run directory; an occupied path gets an
/// incremented "_N" suffix instead.
inline std::filesystem::path allocate_run_dir(
    const std::filesystem::path& base) {
  if (!std::filesystem::exists(base)) {
    std::filesystem::create_directories(base);
    return base;
  }
  for (std::size_t i = 1;; ++i) {
    std::filesystem::path candidate =
        base.parent_path() / (base.filename().string() + "_" +
                              std::to_string(i));
    if (!std::filesystem::exists(candidate)) {
      std::filesystem::create_directories(candidate);
      return candidate;
    }
  }
}

}  // namespace medvqa::cli

#endif  // MEDVQA_CLI_CONFIG_HPP_
