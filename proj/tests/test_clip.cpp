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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "medvqa/clip/contrastive.hpp"
#include "medvqa/clip/pretrain.hpp"
#include "medvqa/data/caption_corpus.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace medvqa;

namespace {

Tensor random_logits(std::size_t n, std::uint64_t seed, double scale = 2.0) {
  Tensor t({n, n});
  Rng rng(seed);
  rng.fill_gaussian(t, 0.0, scale);
  return t;
}

std::vector<Tensor> random_images(const clip::BackboneConfig& cfg,
                                  std::size_t n, std::uint64_t seed) {
  std::vector<Tensor> images;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor im({3, cfg.resolution, cfg.resolution});
    rng.fill_uniform(im, -1.0, 1.0);
    images.push_back(std::move(im));
  }
  return images;
}

data::TokenSequence tokens_of(std::initializer_list<std::size_t> ids,
                              std::size_t window = 76) {
  data::TokenSequence seq;
  seq.ids.assign(window, data::kPadTokenId);
  std::size_t pos = 0;
  for (auto id : ids) seq.ids[pos++] = id;
  seq.length = pos;
  return seq;
}

}  // namespace

TEST_CASE("image encoder shape, determinism, and duplicated rows") {
  for (bool vit : {false, true}) {
    CAPTURE(vit);
    auto cfg = fixtures::tiny_backbone(vit);
    clip::ClipModel model(cfg);
    auto images = random_images(cfg, 2, 1);
    images.push_back(images[0]);  // duplicate of row 0

    auto batch = model.encode_images(images);
    REQUIRE(batch.vectors.shape() == Tensor::Shape{3, cfg.embed_dim});
    CHECK(batch.modality == clip::Modality::image);
    for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
      CHECK(batch.vectors(0, d) == batch.vectors(2, d));
    }
    auto rerun = model.encode_images(images);
    CHECK(batch.vectors.bitwise_equal(rerun.vectors));

    for (std::size_t i = 0; i < 3; ++i) {
      double norm = 0.0;
      for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
        norm += batch.vectors(i, d) * batch.vectors(i, d);
      }
      CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("image encoder rejects mismatched resolution") {
  auto cfg = fixtures::tiny_backbone();
  clip::ClipModel model(cfg);
  Tensor wrong({3, cfg.resolution + 8, cfg.resolution + 8});
  CHECK_THROWS_AS(model.encode_images({wrong}), Error);
}

TEST_CASE("text encoder shape, duplicates, and joint dimension") {
  auto cfg = fixtures::tiny_backbone();
  clip::ClipModel model(cfg);
  auto seq = tokens_of({5, 9, 2});
  auto batch = model.encode_texts({seq, tokens_of({7, 1}), seq});
  REQUIRE(batch.vectors.shape() == Tensor::Shape{3, cfg.embed_dim});
  CHECK(batch.modality == clip::Modality::text);
  for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
    CHECK(batch.vectors(0, d) == batch.vectors(2, d));
  }

  auto image_batch = model.encode_images(random_images(cfg, 1, 2));
  CHECK(image_batch.vectors.cols() == batch.vectors.cols());

  CHECK_THROWS_AS(model.encode_texts({tokens_of({cfg.text_vocab_size})}),
                  Error);
}

TEST_CASE("padding beyond the real tokens never changes a text embedding") {
  auto cfg = fixtures::tiny_backbone();
  clip::ClipModel model(cfg);
  auto a = tokens_of({5, 9, 2}, 76);
  auto b = tokens_of({5, 9, 2}, 76);
  b.ids[40] = 0;  // still padding
  auto ea = model.encode_texts({a});
  auto eb = model.encode_texts({b});
  CHECK(ea.vectors.bitwise_equal(eb.vectors));
}

TEST_CASE("similarity logits match a brute-force cosine oracle") {
  Rng rng(3);
  clip::EmbeddingBatch images{Tensor({4, 6}), clip::Modality::image};
  clip::EmbeddingBatch texts{Tensor({4, 6}), clip::Modality::text};
  rng.fill_gaussian(images.vectors, 0.0, 1.0);
  rng.fill_gaussian(texts.vectors, 0.0, 1.0);
  Tensor raw_images = images.vectors;
  Tensor raw_texts = texts.vectors;
  clip::normalize_rows(images.vectors);
  clip::normalize_rows(texts.vectors);

  const double scale = 14.2;
  auto sim = clip::similarity_logits(images, texts, scale);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t d = 0; d < 6; ++d) {
        dot += raw_images(i, d) * raw_texts(j, d);
        ni += raw_images(i, d) * raw_images(i, d);
        nj += raw_texts(j, d) * raw_texts(j, d);
      }
      const double cosine = dot / std::sqrt(ni * nj);
      CHECK(std::fabs(sim.logits(i, j) - scale * cosine) < 1e-6);
      CHECK(std::fabs(sim.logits(i, j)) <= scale + 1e-5);
    }
  }

  SUBCASE("positive scaling of one side leaves cosine unchanged") {
    clip::EmbeddingBatch scaled{raw_images, clip::Modality::image};
    scaled.vectors.scale_(3.7);
    clip::normalize_rows(scaled.vectors);
    auto sim2 = clip::similarity_logits(scaled, texts, scale);
    for (std::size_t i = 0; i < sim2.logits.numel(); ++i) {
      CHECK(std::fabs(sim2.logits[i] - sim.logits[i]) < 1e-6);
    }
  }
  SUBCASE("self pair yields exactly the scale on the diagonal") {
    clip::EmbeddingBatch one_i{Tensor({1, 3}, {2.0, 0.0, 0.0}),
                               clip::Modality::image};
    clip::EmbeddingBatch one_t{Tensor({1, 3}, {5.0, 0.0, 0.0}),
                               clip::Modality::text};
    clip::normalize_rows(one_i.vectors);
    clip::normalize_rows(one_t.vectors);
    auto s = clip::similarity_logits(one_i, one_t, 7.0);
    CHECK(s.logits(0, 0) == doctest::Approx(7.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal unit vectors score zero") {
    clip::EmbeddingBatch ei{Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}),
                            clip::Modality::image};
    clip::EmbeddingBatch et{Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}),
                            clip::Modality::text};
    auto s = clip::similarity_logits(ei, et, 5.0);
    CHECK(s.logits(0, 1) == doctest::Approx(0.0));
    CHECK(s.logits(1, 0) == doctest::Approx(0.0));
  }
  SUBCASE("shape mismatch is rejected") {
    clip::EmbeddingBatch bad{Tensor({3, 6}), clip::Modality::text};
    CHECK_THROWS_AS(clip::similarity_logits(images, bad, scale), Error);
  }
}

TEST_CASE("contrastive loss closed forms") {
  SUBCASE("single pair is lossless") {
    auto report = clip::symmetric_contrastive_loss(Tensor({1, 1}, {123.0}));
    CHECK(report.total == 0.0);
  }
  SUBCASE("constant matrices force ln N") {
    for (std::size_t n : {1, 2, 4, 16}) {
      auto report = clip::symmetric_contrastive_loss(Tensor::zeros({n, n}));
      CHECK(std::fabs(report.total - std::log(static_cast<double>(n))) <
            1e-9);
    }
  }
  SUBCASE("sharp diagonal logits approach zero loss") {
    Tensor sharp({2, 2}, {10.0, -10.0, -10.0, 10.0});
    auto report = clip::symmetric_contrastive_loss(sharp);
    CHECK(std::fabs(report.total - oracles::contrastive_loss_oracle(sharp)) <
          1e-15);
    CHECK(report.total == doctest::Approx(2.061154e-9).epsilon(1e-3));
  }
  SUBCASE("total is the average of the two directional losses") {
    Tensor logits = random_logits(5, 8);
    auto report = clip::symmetric_contrastive_loss(logits);
    CHECK(std::fabs(report.total - 0.5 * (report.image_to_text_loss +
                                          report.text_to_image_loss)) < 1e-9);
  }
  SUBCASE("non-square is rejected") {
    CHECK_THROWS_AS(clip::symmetric_contrastive_loss(Tensor({2, 3})), Error);
  }
}

TEST_CASE("contrastive loss properties on random matrices") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tensor logits = random_logits(8, 1000 + seed);
    auto report = clip::symmetric_contrastive_loss(logits);
    CHECK(std::fabs(report.total - oracles::contrastive_loss_oracle(logits)) <
          1e-6);
    auto transposed = clip::symmetric_contrastive_loss(transpose(logits));
    CHECK(std::fabs(report.total - transposed.total) <= 1e-9);
    CHECK(report.total >= 0.0);
  }

  SUBCASE("loss decreases as the diagonal pattern sharpens") {
    double prev = std::numeric_limits<double>::infinity();
    for (double s : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      Tensor pattern({3, 3});
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          pattern(i, j) = i == j ? s : -s;
        }
      }
      const double loss = clip::symmetric_contrastive_loss(pattern).total;
      CHECK(loss < prev);
      prev = loss;
    }
  }
}

TEST_CASE("contrastive loss analytic gradient matches finite differences") {
  Tensor logits = random_logits(4, 77);
  Tensor grad;
  clip::symmetric_contrastive_loss(logits, &grad);
  Tensor fd = oracles::finite_difference(
      [](const Tensor& t) {
        return clip::symmetric_contrastive_loss(t).total;
      },
      logits);
  CHECK(oracles::max_relative_error(grad, fd) <= 1e-4);
}

TEST_CASE("pretraining overfits a toy corpus and reproduces loss logs") {
  fixtures::TempDir dir("pretrain");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 8; ++i) {
    pairs.emplace_back("im" + std::to_string(i),
                       "caption number " + std::to_string(i) + " lung chest");
  }
  auto manifest = fixtures::write_caption_manifest(dir.path(), pairs, 16);
  auto corpus = data::load_image_caption_corpus(manifest);
  auto tokenizer = data::BpeTokenizer::from_file(
      fixtures::write_tokenizer_asset(dir / "bpe.json"));

  clip::PretrainConfig config;
  config.epochs = 12;
  config.batch_size = 4;
  config.learning_rate = 3e-3;
  config.seed = 1;

  auto run = [&](const std::filesystem::path& out) {
    clip::ClipModel model(fixtures::tiny_backbone(), config.logit_scale_init,
                          /*init_seed=*/9);
    return clip::run_pretraining(config, model, corpus.records, corpus.records,
                                 tokenizer, out);
  };
  auto result = run(dir / "run_a");
  REQUIRE(result.loss_log.size() == config.epochs);
  CHECK(result.loss_log.back().train_loss < result.loss_log.front().train_loss);
  CHECK(std::filesystem::exists(result.best_checkpoint));
  CHECK(std::filesystem::exists(result.final_checkpoint));
  CHECK(std::filesystem::exists(dir / "run_a" / "pretrain_loss.csv"));

  auto result2 = run(dir / "run_b");
  REQUIRE(result2.loss_log.size() == result.loss_log.size());
  for (std::size_t i = 0; i < result.loss_log.size(); ++i) {
    CHECK(result.loss_log[i].train_loss == result2.loss_log[i].train_loss);
    CHECK(result.loss_log[i].val_loss == result2.loss_log[i].val_loss);
  }
}

TEST_CASE("pretraining config and corpus guards") {
  fixtures::TempDir dir("pretrain_guard");
  clip::PretrainConfig config;
  config.epochs = 0;
  CHECK_THROWS_AS(config.validate(), Error);

  clip::PretrainConfig ok;
  clip::ClipModel model(fixtures::tiny_backbone());
  auto tokenizer = data::BpeTokenizer::from_file(
      fixtures::write_tokenizer_asset(dir / "bpe.json"));
  CHECK_THROWS_AS(clip::run_pretraining(ok, model, {}, {}, tokenizer,
                                        dir / "out"),
                  Error);
}

TEST_CASE("clip checkpoint round-trip, drift, and cross-architecture guard") {
  fixtures::TempDir dir("clip_ckpt");
  auto cfg = fixtures::tiny_backbone();
  clip::ClipModel model(cfg, clip::kDefaultLogitScaleInit, 4);
  const auto path = dir / "clip.ckpt";
  model.save(path);

  auto reloaded = clip::ClipModel::load(path);
  const auto& a = model.params().params();
  const auto& b = reloaded.params().params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->value.bitwise_equal(b[i].second->value));
  }

  SUBCASE("one optimizer step changes the saved parameters") {
    fixtures::TempDir d2("clip_step");
    auto manifest = fixtures::write_caption_manifest(
        d2.path(), {{"a", "one lung"}, {"b", "two chest"}}, 16);
    auto corpus = data::load_image_caption_corpus(manifest);
    auto tokenizer = data::BpeTokenizer::from_file(
        fixtures::write_tokenizer_asset(d2 / "bpe.json"));
    clip::PretrainConfig config;
    config.epochs = 1;
    config.batch_size = 2;
    config.learning_rate = 1e-3;
    clip::run_pretraining(config, model, corpus.records, corpus.records,
                          tokenizer, d2 / "out");
    bool changed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].second->value.bitwise_equal(b[i].second->value)) {
        changed = true;
      }
    }
    CHECK(changed);
  }

  SUBCASE("loading into a different architecture is corrupt") {
    auto vit_cfg = fixtures::tiny_backbone(true);
    clip::ClipModel vit_model(vit_cfg);
    auto ck = io::Checkpoint::load(path);
    CHECK_THROWS_AS(ck.load_into(vit_model.params()), Error);
  }
}
