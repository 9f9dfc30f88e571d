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

#ifndef MEDVQA_CLIP_BACKBONE_HPP_
#define MEDVQA_CLIP_BACKBONE_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "medvqa/core/autograd.hpp"
#include "medvqa/core/error.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/data/tokenizer.hpp"
#include "medvqa/nn/module.hpp"

namespace medvqa::clip {

enum class Backbone { vit_b32, rn50, rn50x4 };

inline Backbone parse_backbone(const std::string& name) {
  if (name == "vit_b32") return Backbone::vit_b32;
  if (name == "rn50") return Backbone::rn50;
  if (name == "rn50x4") return Backbone::rn50x4;
  throw Error(ErrorKind::ConfigInvalid, "unknown backbone: " + name);
}

inline const char* backbone_name(Backbone b) {
  switch (b) {
    case Backbone::vit_b32: return "vit_b32";
    case Backbone::rn50: return "rn50";
    case Backbone::rn50x4: return "rn50x4";
  }
  return "?";
}

/// Architecture hyperparameters of the dual encoder. Presets carry the
/// per-backbone native resolution; every field can be overridden, which the
/// test suites use to run desk-sized models.
struct BackboneConfig {
  Backbone kind = Backbone::rn50;
  std::size_t resolution = 224;
  std::size_t embed_dim = 512;  // joint image/text embedding width
  // conv backbones
  std::size_t conv_width1 = 32;
  std::size_t conv_width2 = 64;
  std::size_t grid_channels = 128;
  // vit backbone
  std::size_t patch_size = 32;
  std::size_t vit_width = 256;
  std::size_t vit_mlp_dim = 512;
  // text tower
  std::size_t text_vocab_size = 512;
  std::size_t text_width = 128;
  std::size_t context_window = data::kDefaultContextWindow;

  static BackboneConfig preset(Backbone kind) {
    BackboneConfig c;
    c.kind = kind;
    switch (kind) {
      case Backbone::vit_b32:
        c.resolution = 224;
        c.embed_dim = 512;
        break;
      case Backbone::rn50:
        c.resolution = 224;
        c.embed_dim = 512;
        break;
      case Backbone::rn50x4:
        c.resolution = 288;
        c.embed_dim = 640;
        c.conv_width1 = 48;
        c.conv_width2 = 96;
        c.grid_channels = 192;
        break;
    }
    return c;
  }

  bool is_vit() const { return kind == Backbone::vit_b32; }

  /// Number of spatial positions exposed to fusion (pre-pool grid for conv
  /// towers, patch tokens for the vit tower).
  std::size_t grid_positions() const {
    const std::size_t cell = is_vit() ? patch_size : 8;
    if (resolution % cell != 0) {
      throw Error(ErrorKind::ConfigInvalid,
                  "resolution must be a multiple of " + std::to_string(cell));
    }
    const std::size_t g = resolution / cell;
    return g * g;
  }

  std::size_t grid_dim() const { return is_vit() ? vit_width : grid_channels; }

  nlohmann::json to_json() const {
    return {
        {"kind", backbone_name(kind)},
        {"resolution", resolution},
        {"embed_dim", embed_dim},
        {"conv_width1", conv_width1},
        {"conv_width2", conv_width2},
        {"grid_channels", grid_channels},
        {"patch_size", patch_size},
        {"vit_width", vit_width},
        {"vit_mlp_dim", vit_mlp_dim},
        {"text_vocab_size", text_vocab_size},
        {"text_width", text_width},
        {"context_window", context_window},
    };
  }

  static BackboneConfig from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.kind = parse_backbone(j.at("kind").get<std::string>());
    c.resolution = j.at("resolution").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.conv_width1 = j.at("conv_width1").get<std::size_t>();
    c.conv_width2 = j.at("conv_width2").get<std::size_t>();
    c.grid_channels = j.at("grid_channels").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.vit_width = j.at("vit_width").get<std::size_t>();
    c.vit_mlp_dim = j.at("vit_mlp_dim").get<std::size_t>();
    c.text_vocab_size = j.at("text_vocab_size").get<std::size_t>();
    c.text_width = j.at("text_width").get<std::size_t>();
    c.context_window = j.at("context_window").get<std::size_t>();
    return c;
  }
};

namespace detail {

/// Balanced row-stacking of per-sample outputs into one [N, C] variable.
inline ag::Var stack_rows(std::vector<ag::Var> rows) {
  if (rows.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "stack_rows: empty input");
  }
  while (rows.size() > 1) {
    std::vector<ag::Var> next;
    next.reserve((rows.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
      next.push_back(ag::concat_rows(rows[i], rows[i + 1]));
    }
    if (rows.size() % 2 == 1) next.push_back(rows.back());
    rows = std::move(next);
  }
  return rows[0];
}

/// Single-head self-attention followed by a two-layer MLP, both with
/// residual connections. Operates on token matrices [K, C].
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(nn::ParamStore& store, const std::string& prefix,
                   std::size_t width, std::size_t mlp_dim, Rng& rng)
      : width_(width),
        q_(store, prefix + ".attn.q", width, width, rng),
        k_(store, prefix + ".attn.k", width, width, rng),
        v_(store, prefix + ".attn.v", width, width, rng),
        proj_(store, prefix + ".attn.proj", width, width, rng),
        fc1_(store, prefix + ".mlp.fc1", width, mlp_dim, rng),
        fc2_(store, prefix + ".mlp.fc2", mlp_dim, width, rng) {}

  ag::Var forward(const ag::Var& tokens) const {
    ag::Var q = q_.forward(tokens);
    ag::Var k = k_.forward(tokens);
    ag::Var v = v_.forward(tokens);
    ag::Var scores =
        ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(double(width_)));
    ag::Var attn = ag::softmax_rows(scores);
    ag::Var mixed = proj_.forward(ag::matmul(attn, v));
    ag::Var x = ag::add(tokens, mixed);
    ag::Var h = fc2_.forward(ag::relu(fc1_.forward(x)));
    return ag::add(x, h);
  }

 private:
  std::size_t width_ = 0;
  nn::Linear q_, k_, v_, proj_;
  nn::Linear fc1_, fc2_;
};

}  // namespace detail

/// Visual tower. Produces positionwise grid features [K, grid_dim] and a
/// pooled joint-space embedding [1, embed_dim].
class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(nn::ParamStore& store, const BackboneConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    if (cfg.is_vit()) {
      patch_ = nn::Conv2d(store, "visual.patch", 3, cfg.vit_width,
                          cfg.patch_size, cfg.patch_size, 0, rng);
      pos_ = store.add("visual.pos_embed",
                       nn::init::gaussian(rng, 0.02,
                                          {cfg.grid_positions(), cfg.vit_width}));
      block_ = detail::TransformerBlock(store, "visual.block", cfg.vit_width,
                                        cfg.vit_mlp_dim, rng);
    } else {
      conv1_ = nn::Conv2d(store, "visual.conv1", 3, cfg.conv_width1, 3, 2, 1, rng);
      conv2_ = nn::Conv2d(store, "visual.conv2", cfg.conv_width1,
                          cfg.conv_width2, 3, 2, 1, rng);
      res_a_ = nn::Conv2d(store, "visual.res.a", cfg.conv_width2,
                          cfg.conv_width2, 3, 1, 1, rng);
      res_b_ = nn::Conv2d(store, "visual.res.b", cfg.conv_width2,
                          cfg.conv_width2, 3, 1, 1, rng);
      conv3_ = nn::Conv2d(store, "visual.conv3", cfg.conv_width2,
                          cfg.grid_channels, 3, 2, 1, rng);
    }
    proj_ = nn::Linear(store, "visual.proj", cfg.grid_dim(), cfg.embed_dim, rng);
  }

  /// image [3, R, R] -> token/grid features [K, grid_dim].
  ag::Var grid(const ag::Var& image) const {
    const auto& s = image->value.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != cfg_.resolution ||
        s[2] != cfg_.resolution) {
      throw Error(ErrorKind::ResolutionMismatch,
                  "expected image [3, " + std::to_string(cfg_.resolution) +
                      ", " + std::to_string(cfg_.resolution) + "]");
    }
    if (cfg_.is_vit()) {
      ag::Var fmap = patch_.forward(image);  // [width, g, g]
      ag::Var tokens = ag::transpose(
          ag::reshape(fmap, {cfg_.vit_width, cfg_.grid_positions()}));
      tokens = ag::add(tokens, pos_);
      return block_.forward(tokens);
    }
    ag::Var x = ag::relu(conv1_.forward(image));
    x = ag::relu(conv2_.forward(x));
    ag::Var r = ag::relu(res_a_.forward(x));
    x = ag::relu(ag::add(x, res_b_.forward(r)));
    x = ag::relu(conv3_.forward(x));  // [grid_ch, g, g]
    return ag::transpose(
        ag::reshape(x, {cfg_.grid_channels, cfg_.grid_positions()}));
  }

  /// image [3, R, R] -> pooled embedding [1, embed_dim] (not normalized).
  ag::Var embed(const ag::Var& image) const {
    return proj_.forward(ag::mean_rows(grid(image)));
  }

  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  // vit
  nn::Conv2d patch_;
  ag::Var pos_;
  detail::TransformerBlock block_;
  // conv
  nn::Conv2d conv1_, conv2_, res_a_, res_b_, conv3_;
  nn::Linear proj_;
};

/// Text tower: token embeddings + positional embeddings, one transformer
/// block, masked mean pooling over the real tokens, projection to the joint
/// space. Padding positions are never touched, so padded and unpadded inputs
/// encode identically.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::ParamStore& store, const BackboneConfig& cfg, Rng& rng)
      : cfg_(cfg),
        tokens_(store, "text.token_embed", cfg.text_vocab_size, cfg.text_width,
                rng) {
    pos_ = store.add("text.pos_embed",
                     nn::init::gaussian(rng, 0.02,
                                        {cfg.context_window, cfg.text_width}));
    block_ = detail::TransformerBlock(store, "text.block", cfg.text_width,
                                      2 * cfg.text_width, rng);
    proj_ = nn::Linear(store, "text.proj", cfg.text_width, cfg.embed_dim, rng);
  }

  ag::Var embed(const data::TokenSequence& seq) const {
    if (seq.ids.size() != cfg_.context_window) {
      throw Error(ErrorKind::ShapeMismatch,
                  "token sequence length != context window");
    }
    const std::size_t len = std::max<std::size_t>(seq.length, 1);
    std::vector<std::size_t> ids(seq.ids.begin(),
                                 seq.ids.begin() + static_cast<long>(len));
    for (std::size_t id : ids) {
      if (id >= cfg_.text_vocab_size) {
        throw Error(ErrorKind::TokenOutOfRange,
                    "token id " + std::to_string(id) + " outside vocabulary");
      }
    }
    ag::Var x = tokens_.forward(ids);                 // [len, C]
    x = ag::add(x, ag::slice_rows(pos_, 0, len));     // positional
    x = block_.forward(x);
    return proj_.forward(ag::mean_rows(x));           // [1, embed_dim]
  }

 private:
  BackboneConfig cfg_;
  nn::Embedding tokens_;
  ag::Var pos_;
  detail::TransformerBlock block_;
  nn::Linear proj_;
};

}  // namespace medvqa::clip

#endif  // MEDVQA_CLIP_BACKBONE_HPP_
