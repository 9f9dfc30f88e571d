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

#ifndef MEDVQA_CLIP_PRETRAIN_HPP_
#define MEDVQA_CLIP_PRETRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "medvqa/clip/backbone.hpp"
#include "medvqa/clip/contrastive.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/data/caption_corpus.hpp"
#include "medvqa/data/tokenizer.hpp"
#include "medvqa/image/image.hpp"
#include "medvqa/io/checkpoint.hpp"
#include "medvqa/io/csv.hpp"
#include "medvqa/nn/adam.hpp"

namespace medvqa::clip {

inline constexpr double kDefaultLogitScaleInit = 2.6592600369327783;  // ln(1/0.07)
inline constexpr double kMaxLogitScale = 100.0;

struct PretrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-5;
  Backbone backbone = Backbone::vit_b32;
  std::size_t context_window = data::kDefaultContextWindow;
  double logit_scale_init = kDefaultLogitScaleInit;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) {
      throw Error(ErrorKind::ConfigInvalid, "pretrain.epochs must be >= 1");
    }
    if (batch_size < 1) {
      throw Error(ErrorKind::ConfigInvalid, "pretrain.batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorKind::ConfigInvalid,
                  "pretrain.learning_rate must be > 0");
    }
    if (context_window < 1) {
      throw Error(ErrorKind::ConfigInvalid,
                  "pretrain.context_window must be >= 1");
    }
  }
};

/// Dual-encoder model: visual tower, text tower, and a learnable logit scale
/// stored as its logarithm and clamped to an effective scale of at most 100.
class ClipModel {
 public:
  explicit ClipModel(const BackboneConfig& cfg,
                     double logit_scale_init = kDefaultLogitScaleInit,
                     std::uint64_t init_seed = 0)
      : cfg_(cfg) {
    Rng rng(init_seed);
    image_ = ImageEncoder(params_, cfg, rng);
    text_ = TextEncoder(params_, cfg, rng);
    logit_scale_log_ =
        params_.add("logit_scale", Tensor({1, 1}, {logit_scale_init}));
  }

  const BackboneConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const ImageEncoder& image_encoder() const { return image_; }
  const TextEncoder& text_encoder() const { return text_; }

  double logit_scale() const {
    return std::min(std::exp(logit_scale_log_->value[0]), kMaxLogitScale);
  }

  void clamp_logit_scale() {
    logit_scale_log_->value[0] =
        std::min(logit_scale_log_->value[0], std::log(kMaxLogitScale));
  }

  /// Graph-building encoders; the row count equals the batch size.
  ag::Var encode_images_graph(const std::vector<Tensor>& images) const {
    std::vector<ag::Var> rows;
    rows.reserve(images.size());
    for (const Tensor& im : images) {
      rows.push_back(image_.embed(ag::constant(im)));
    }
    return detail::stack_rows(std::move(rows));
  }

  ag::Var encode_texts_graph(const std::vector<data::TokenSequence>& seqs) const {
    std::vector<ag::Var> rows;
    rows.reserve(seqs.size());
    for (const auto& seq : seqs) rows.push_back(text_.embed(seq));
    return detail::stack_rows(std::move(rows));
  }

  /// Evaluation-mode encoders (value only), unit-norm rows.
  EmbeddingBatch encode_images(const std::vector<Tensor>& images) const {
    EmbeddingBatch batch;
    batch.modality = Modality::image;
    batch.vectors = encode_images_graph(images)->value;
    normalize_rows(batch.vectors);
    return batch;
  }

  EmbeddingBatch encode_texts(const std::vector<data::TokenSequence>& seqs) const {
    EmbeddingBatch batch;
    batch.modality = Modality::text;
    batch.vectors = encode_texts_graph(seqs)->value;
    normalize_rows(batch.vectors);
    return batch;
  }

  const ag::Var& logit_scale_log() const { return logit_scale_log_; }

  void save(const std::filesystem::path& path) const {
    io::Checkpoint ck;
    ck.meta = {{"kind", "clip"}, {"config", cfg_.to_json()}};
    ck.set_from(params_);
    ck.save(path);
  }

  static ClipModel load(const std::filesystem::path& path) {
    io::Checkpoint ck = io::Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "clip") {
      throw Error(ErrorKind::CorruptCheckpoint,
                  "not a dual-encoder checkpoint: " + path.string());
    }
    ClipModel model(BackboneConfig::from_json(ck.meta.at("config")));
    ck.load_into(model.params_);
    return model;
  }

 private:
  BackboneConfig cfg_;
  nn::ParamStore params_;
  ImageEncoder image_;
  TextEncoder text_;
  ag::Var logit_scale_log_;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct PretrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::vector<EpochLoss> loss_log;
};

namespace detail {

struct PreparedPair {
  Tensor image;
  data::TokenSequence tokens;
};

inline std::vector<PreparedPair> prepare_pairs(
    const std::vector<data::ImageCaptionRecord>& corpus,
    const data::BpeTokenizer& tokenizer, const BackboneConfig& cfg,
    std::size_t context_window) {
  std::vector<PreparedPair> out;
  out.reserve(corpus.size());
  for (const auto& rec : corpus) {
    PreparedPair p;
    p.image = img::load_and_preprocess_image(rec.image_path, cfg.resolution);
    p.tokens = tokenizer.encode(rec.caption, context_window);
    out.push_back(std::move(p));
  }
  return out;
}

inline double batch_loss_eval(const ClipModel& model,
                              const std::vector<PreparedPair>& pairs,
                              std::size_t chunk) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, pairs.size() - start);
    std::vector<Tensor> images;
    std::vector<data::TokenSequence> seqs;
    for (std::size_t i = 0; i < n; ++i) {
      images.push_back(pairs[start + i].image);
      seqs.push_back(pairs[start + i].tokens);
    }
    SimilarityMatrix sim = similarity_logits(
        model.encode_images(images), model.encode_texts(seqs),
        model.logit_scale());
    total += symmetric_contrastive_loss(sim).total;
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : 0.0;
}

}  // namespace detail

/// Fine-tunes the dual encoder with the symmetric contrastive objective.
/// The last incomplete batch of each epoch is dropped; a checkpoint is kept
/// for the best validation loss (training loss when no validation corpus is
/// given) and for the final epoch. Writes pretrain_loss.csv under out_dir.
inline PretrainResult run_pretraining(
    const PretrainConfig& config, ClipModel& model,
    const std::vector<data::ImageCaptionRecord>& corpus,
    const std::vector<data::ImageCaptionRecord>& val_corpus,
    const data::BpeTokenizer& tokenizer,
    const std::filesystem::path& out_dir) {
  config.validate();
  if (corpus.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "pretraining corpus is empty");
  }
  if (corpus.size() < config.batch_size) {
    throw Error(ErrorKind::ConfigInvalid,
                "batch_size exceeds corpus size; no complete batch to train on");
  }
  std::filesystem::create_directories(out_dir);

  const BackboneConfig& bcfg = model.config();
  auto pairs = detail::prepare_pairs(corpus, tokenizer, bcfg,
                                     config.context_window);
  auto val_pairs = detail::prepare_pairs(val_corpus, tokenizer, bcfg,
                                         config.context_window);

  nn::Adam adam(model.params(), config.learning_rate);
  Rng shuffle_rng(config.seed);

  PretrainResult result;
  result.best_checkpoint = out_dir / "clip_best.ckpt";
  result.final_checkpoint = out_dir / "clip_final.ckpt";
  double best_val = std::numeric_limits<double>::infinity();

  const std::size_t n_batches = pairs.size() / config.batch_size;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(pairs.size());
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::vector<Tensor> images;
      std::vector<data::TokenSequence> seqs;
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        const auto& p = pairs[perm[b * config.batch_size + i]];
        images.push_back(p.image);
        seqs.push_back(p.tokens);
      }
      ag::Var img_emb = ag::l2_normalize_rows(model.encode_images_graph(images));
      ag::Var txt_emb = ag::l2_normalize_rows(model.encode_texts_graph(seqs));
      ag::Var scale = ag::exp(model.logit_scale_log());
      ag::Var logits = ag::scale_by(scale, ag::matmul_nt(img_emb, txt_emb));

      Tensor grad;
      const auto report = symmetric_contrastive_loss(logits->value, &grad);
      epoch_loss += report.total;

      adam.zero_grad();
      ag::backward(logits, grad);
      adam.step();
      model.clamp_logit_scale();
    }
    epoch_loss /= static_cast<double>(n_batches);

    double val_loss = epoch_loss;
    if (!val_pairs.empty()) {
      val_loss = detail::batch_loss_eval(model, val_pairs, config.batch_size);
    }
    result.loss_log.push_back({epoch, epoch_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      model.save(result.best_checkpoint);
    }
  }
  model.save(result.final_checkpoint);

  std::ostringstream csv;
  csv << "epoch,train_loss,val_loss\n";
  csv.precision(17);
  for (const auto& e : result.loss_log) {
    csv << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
  }
  io::write_text_file((out_dir / "pretrain_loss.csv").string(), csv.str());
  return result;
}

}  // namespace medvqa::clip

#endif  // MEDVQA_CLIP_PRETRAIN_HPP_
