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

#ifndef MEDVQA_VQA_MODEL_HPP_
#define MEDVQA_VQA_MODEL_HPP_

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "medvqa/clip/pretrain.hpp"
#include "medvqa/data/records.hpp"
#include "medvqa/vqa/ban.hpp"
#include "medvqa/vqa/cdae.hpp"
#include "medvqa/vqa/losses.hpp"
#include "medvqa/vqa/question_encoder.hpp"

namespace medvqa::vqa {

struct VqaModelConfig {
  CdaeConfig cdae;
  BanConfig ban;
  std::size_t question_hidden = 256;
  std::size_t max_tokens = 12;
  std::size_t classifier_hidden = 512;

  nlohmann::json to_json() const {
    return {{"cdae", cdae.to_json()},
            {"ban", ban.to_json()},
            {"question_hidden", question_hidden},
            {"max_tokens", max_tokens},
            {"classifier_hidden", classifier_hidden}};
  }

  static VqaModelConfig from_json(const nlohmann::json& j) {
    VqaModelConfig c;
    c.cdae = CdaeConfig::from_json(j.at("cdae"));
    c.ban = BanConfig::from_json(j.at("ban"));
    c.question_hidden = j.at("question_hidden").get<std::size_t>();
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
    return c;
  }
};

/// Composite visual representation: pretrained-encoder output concatenated
/// with the autoencoder encoding, in that fixed order.
struct VisualFeature {
  Tensor clip_part;  // [D_c]
  Tensor cdae_part;  // [D_a]
  Tensor combined;   // [D_c + D_a]
};

/// The VQA backbone: frozen dual-encoder visual tower, trainable CDAE,
/// LSTM question encoder over pretrained word embeddings, bilinear-attention
/// fusion, and a two-layer ReLU classifier over the answer vocabulary.
class VqaModel {
 public:
  VqaModel(const VqaModelConfig& cfg, std::shared_ptr<clip::ClipModel> clip,
           std::shared_ptr<const WordEmbeddings> embeddings,
           data::AnswerVocabulary vocabulary, std::uint64_t init_seed)
      : cfg_(cfg),
        clip_(std::move(clip)),
        embeddings_(std::move(embeddings)),
        vocabulary_(std::move(vocabulary)) {
    Rng rng(init_seed);
    cdae_ = Cdae(store_, cfg.cdae, rng);
    question_ = QuestionEncoder(store_, *embeddings_, cfg.question_hidden,
                                cfg.max_tokens, rng);
    const std::size_t visual_dim =
        clip_->config().grid_dim() + cfg.cdae.latent_dim();
    ban_ = BanFusion(store_, cfg.ban, visual_dim, cfg.question_hidden, rng);
    cls1_ = nn::Linear(store_, "classifier.fc1", cfg.ban.fused_dim,
                       cfg.classifier_hidden, rng);
    cls2_ = nn::Linear(store_, "classifier.fc2", cfg.classifier_hidden,
                       vocabulary_.size(), rng);
  }

  VqaModel(const VqaModel&) = delete;
  VqaModel& operator=(const VqaModel&) = delete;

  const VqaModelConfig& config() const { return cfg_; }
  const clip::ClipModel& clip_model() const { return *clip_; }
  const data::AnswerVocabulary& vocabulary() const { return vocabulary_; }
  nn::ParamStore& trainable_params() { return store_; }
  const Cdae& cdae() const { return cdae_; }
  const QuestionEncoder& question_encoder() const { return question_; }
  const BanFusion& ban() const { return ban_; }

  /// Positionwise visual features from the frozen pretrained tower,
  /// detached from its parameters.
  Tensor clip_grid(const Tensor& image_full) const {
    return clip_->image_encoder().grid(ag::constant(image_full))->value;
  }

  Tensor clip_pooled(const Tensor& image_full) const {
    return clip_->image_encoder().embed(ag::constant(image_full))->value;
  }

  /// Pretrained-encoder output on the full-resolution image concatenated
  /// with the CDAE encoding of the low-resolution image.
  VisualFeature composite_visual_features(const Tensor& image_full,
                                          const Tensor& image_low, Mode mode,
                                          Rng* noise_rng = nullptr) const {
    VisualFeature f;
    Tensor pooled = clip_pooled(image_full);  // [1, D_c]
    f.clip_part = pooled.reshaped({pooled.numel()});
    Tensor enc = cdae_.forward(image_low, mode, noise_rng).encoding->value;
    f.cdae_part = enc.reshaped({enc.numel()});
    f.combined = Tensor({f.clip_part.numel() + f.cdae_part.numel()});
    std::copy(f.clip_part.data(), f.clip_part.data() + f.clip_part.numel(),
              f.combined.data());
    std::copy(f.cdae_part.data(), f.cdae_part.data() + f.cdae_part.numel(),
              f.combined.data() + f.clip_part.numel());
    return f;
  }

  struct Forward {
    ag::Var logits;          // [1, V]
    ag::Var reconstruction;  // [1, S, S]
    ag::Var attention;       // [G, K]
    Tensor noised_input;
    std::size_t token_count = 0;
  };

  /// Full forward pass from precomputed frozen visual grid features. Each
  /// grid row is concatenated with the (shared) CDAE encoding before fusion.
  Forward forward(const Tensor& clip_grid_features, const Tensor& image_low,
                  const std::string& question, Mode mode,
                  Rng* noise_rng = nullptr) const {
    Forward out;
    auto cdae_out = cdae_.forward(image_low, mode, noise_rng);
    out.reconstruction = cdae_out.reconstruction;
    out.noised_input = cdae_out.noised_input;

    const std::size_t k = clip_grid_features.rows();
    ag::Var grid = ag::constant(clip_grid_features);           // [K, D_g]
    ag::Var cdae_tiled = ag::tile_rows(cdae_out.encoding, k);  // [K, D_a]
    ag::Var visual = ag::concat_cols(grid, cdae_tiled);        // [K, D_g+D_a]

    QuestionEncoding q = question_.encode(question);
    out.token_count = q.token_count;

    auto fused = ban_.forward(visual, q.hidden);
    out.attention = fused.attention;
    out.logits = cls2_.forward(ag::relu(cls1_.forward(fused.fused)));
    return out;
  }

  Forward forward_from_image(const Tensor& image_full, const Tensor& image_low,
                             const std::string& question, Mode mode,
                             Rng* noise_rng = nullptr) const {
    return forward(clip_grid(image_full), image_low, question, mode,
                   noise_rng);
  }

  /// argmax over answer logits, ties broken by the lowest index.
  static std::size_t argmax_lowest(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.numel(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return best;
  }

  std::string predict(const Tensor& image_full, const Tensor& image_low,
                      const std::string& question) const {
    if (vocabulary_.empty()) {
      throw Error(ErrorKind::EmptyVocabulary,
                  "cannot predict with an empty answer vocabulary");
    }
    Forward out = forward_from_image(image_full, image_low, question,
                                     Mode::eval);
    return vocabulary_.answer_of(argmax_lowest(out.logits->value));
  }

  Tensor one_hot_target(const std::string& answer) const {
    Tensor t({1, vocabulary_.size()});
    if (auto idx = vocabulary_.index_of(data::normalize_answer(answer))) {
      t(0, *idx) = 1.0;
    }
    return t;
  }

  void save(const std::filesystem::path& path) const {
    io::Checkpoint ck;
    ck.meta = {{"kind", "vqa"},
               {"config", cfg_.to_json()},
               {"clip_config", clip_->config().to_json()},
               {"vocabulary", vocabulary_.answers()},
               {"oov_fallback", question_.oov_fallback()},
               {"embedding_dim", embeddings_->dim()}};
    for (const auto& [name, var] : clip_->params().params()) {
      ck.tensors.emplace_back("clip." + name, var->value);
    }
    for (const auto& [name, var] : store_.params()) {
      ck.tensors.emplace_back(name, var->value);
    }
    ck.save(path);
  }

  static std::unique_ptr<VqaModel> load(
      const std::filesystem::path& path,
      std::shared_ptr<const WordEmbeddings> embeddings) {
    io::Checkpoint ck = io::Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "vqa") {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "not a VQA checkpoint: " + path.string());
    }
    if (ck.meta.at("embedding_dim").get<std::size_t>() != embeddings->dim()) {
      throw Error(ErrorKind::VocabularyMismatch,
                  "word-embedding width differs from the checkpoint");
    }
    auto clip_model = std::make_shared<clip::ClipModel>(
        clip::BackboneConfig::from_json(ck.meta.at("clip_config")));
    data::AnswerVocabulary vocab;
    for (const auto& ans :
         ck.meta.at("vocabulary").get<std::vector<std::string>>()) {
      vocab.add(ans);
    }
    auto model = std::make_unique<VqaModel>(
        VqaModelConfig::from_json(ck.meta.at("config")), clip_model,
        std::move(embeddings), std::move(vocab), /*init_seed=*/0);
    model->question_.set_oov_fallback(
        ck.meta.at("oov_fallback").get<std::vector<double>>());

    // restore tensors: clip.* prefix first, then the trainable groups
    const auto& clip_params = model->clip_->params().params();
    const auto& own_params = model->store_.params();
    if (ck.tensors.size() != clip_params.size() + own_params.size()) {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "parameter count mismatch in " + path.string());
    }
    std::size_t idx = 0;
    for (const auto& [name, var] : clip_params) {
      const auto& [ck_name, tensor] = ck.tensors[idx++];
      if (ck_name != "clip." + name || tensor.shape() != var->value.shape()) {
        throw Error(ErrorKind::CorruptCheckpoint,
                    "unexpected tensor '" + ck_name + "'");
      }
      var->value = tensor;
    }
    for (const auto& [name, var] : own_params) {
      const auto& [ck_name, tensor] = ck.tensors[idx++];
      if (ck_name != name || tensor.shape() != var->value.shape()) {
        throw Error(ErrorKind::CorruptCheckpoint,
                    "unexpected tensor '" + ck_name + "'");
      }
      var->value = tensor;
    }
    return model;
  }

 private:
  VqaModelConfig cfg_;
  std::shared_ptr<clip::ClipModel> clip_;
  std::shared_ptr<const WordEmbeddings> embeddings_;
  data::AnswerVocabulary vocabulary_;
  nn::ParamStore store_;
  Cdae cdae_;
  QuestionEncoder question_;
  BanFusion ban_;
  nn::Linear cls1_, cls2_;
};

}  // namespace medvqa::vqa

#endif  // MEDVQA_VQA_MODEL_HPP_
