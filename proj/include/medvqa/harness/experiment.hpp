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

#ifndef MEDVQA_HARNESS_EXPERIMENT_HPP_
#define MEDVQA_HARNESS_EXPERIMENT_HPP_

#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "medvqa/data/vqa_dataset.hpp"
#include "medvqa/harness/metrics.hpp"
#include "medvqa/image/image.hpp"
#include "medvqa/nn/adam.hpp"
#include "medvqa/vqa/model.hpp"

namespace medvqa::harness {

/// Training profiles: the schedules of the two host MedVQA methods.
enum class Profile { mevf, qcr };

inline Profile parse_profile(const std::string& name) {
  if (name == "mevf") return Profile::mevf;
  if (name == "qcr") return Profile::qcr;
  throw Error(ErrorKind::ConfigInvalid, "unknown profile: " + name);
}

inline const char* profile_name(Profile p) {
  return p == Profile::mevf ? "mevf" : "qcr";
}

/// VQA experiment configuration. Unset schedule fields resolve to the
/// profile defaults: mevf -> 20 epochs / batch 32 / lr 2e-3,
/// qcr -> 200 epochs / batch 16 / lr 1e-3.
struct ExperimentConfig {
  Profile profile = Profile::mevf;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  clip::Backbone backbone = clip::Backbone::vit_b32;
  std::string checkpoint_in;  // pretrained dual-encoder checkpoint
  data::Dialect dataset = data::Dialect::rad;
  std::size_t repetitions = 10;
  std::uint64_t seed_base = 0;
  bool deterministic = true;
  vqa::VqaModelConfig model;

  std::size_t resolved_epochs() const {
    return epochs.value_or(profile == Profile::mevf ? 20u : 200u);
  }
  std::size_t resolved_batch_size() const {
    return batch_size.value_or(profile == Profile::mevf ? 32u : 16u);
  }
  double resolved_learning_rate() const {
    return learning_rate.value_or(profile == Profile::mevf ? 2e-3 : 1e-3);
  }

  void validate() const {
    if (resolved_epochs() < 1) {
      throw Error(ErrorKind::ConfigInvalid, "vqa.epochs must be >= 1");
    }
    if (resolved_batch_size() < 1) {
      throw Error(ErrorKind::ConfigInvalid, "vqa.batch_size must be >= 1");
    }
    if (!(resolved_learning_rate() > 0.0)) {
      throw Error(ErrorKind::ConfigInvalid, "vqa.learning_rate must be > 0");
    }
    if (repetitions < 1) {
      throw Error(ErrorKind::ConfigInvalid, "vqa.repetitions must be >= 1");
    }
  }

  nlohmann::json resolved_json() const {
    return {{"profile", profile_name(profile)},
            {"epochs", resolved_epochs()},
            {"batch_size", resolved_batch_size()},
            {"learning_rate", resolved_learning_rate()},
            {"backbone", clip::backbone_name(backbone)},
            {"checkpoint_in", checkpoint_in},
            {"dataset", data::dialect_name(dataset)},
            {"repetitions", repetitions},
            {"seed_base", seed_base},
            {"deterministic", deterministic},
            {"model", model.to_json()}};
  }
};

/// Resolved-config snapshot plus an environment fingerprint, written once per
/// run directory.
inline void write_run_manifest(const nlohmann::json& resolved_config,
                               const std::filesystem::path& out_dir,
                               std::uint64_t run_seed) {
  nlohmann::json manifest = {{"config", resolved_config},
                             {"run_seed", run_seed},
                             {"environment",
                              {{"compiler",
#if defined(__clang__)
                                "clang " + std::to_string(__clang_major__)
#elif defined(__GNUC__)
                                "gcc " + std::to_string(__GNUC__)
#else
                                "unknown"
#endif
                               },
                               {"pointer_bits", sizeof(void*) * 8},
                               {"checkpoint_format",
                                io::Checkpoint::kFormatVersion}}}};
  io::write_text_file((out_dir / "run_manifest.json").string(),
                      manifest.dump(2));
}

namespace detail {

struct PreparedSample {
  const Tensor* clip_grid = nullptr;  // owned by the cache
  Tensor image_low;
  Tensor target;  // [1, V]
  std::string question;
};

/// Shared per-image cache of frozen visual grids and low-res inputs.
class ImageCache {
 public:
  ImageCache(const vqa::VqaModel& model) : model_(model) {}

  const Tensor& grid(const std::string& path) {
    auto it = grids_.find(path);
    if (it != grids_.end()) return it->second;
    Tensor full = img::load_and_preprocess_image(
        path, model_.clip_model().config().resolution);
    return grids_.emplace(path, model_.clip_grid(full)).first->second;
  }

  const Tensor& low(const std::string& path) {
    auto it = lows_.find(path);
    if (it != lows_.end()) return it->second;
    return lows_
        .emplace(path,
                 img::load_grayscale(path, model_.config().cdae.input_size))
        .first->second;
  }

 private:
  const vqa::VqaModel& model_;
  std::unordered_map<std::string, Tensor> grids_;
  std::unordered_map<std::string, Tensor> lows_;
};

}  // namespace detail

struct VqaTrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // lowest training loss
  std::vector<std::pair<std::size_t, double>> loss_log;  // (epoch, train loss)
};

/// Trains the VQA backbone, minimizing classification + reconstruction loss.
/// The pretrained visual tower stays frozen; CDAE, question encoder, fusion,
/// and classifier are updated with Adam. Deterministic given run_seed.
inline VqaTrainResult train_vqa(const ExperimentConfig& config,
                                vqa::VqaModel& model,
                                const data::DatasetSplit& train,
                                const std::filesystem::path& out_dir,
                                std::uint64_t run_seed) {
  config.validate();
  if (train.empty()) {
    throw Error(ErrorKind::EmptySplit, "training split is empty");
  }
  std::filesystem::create_directories(out_dir);

  detail::ImageCache cache(model);
  std::vector<detail::PreparedSample> samples;
  samples.reserve(train.size());
  for (const auto& rec : train.records) {
    detail::PreparedSample s;
    s.clip_grid = &cache.grid(rec.image_path);
    s.image_low = cache.low(rec.image_path);
    s.target = model.one_hot_target(rec.answer);
    s.question = rec.question;
    samples.push_back(std::move(s));
  }

  nn::Adam adam(model.trainable_params(), config.resolved_learning_rate());
  Rng rng(run_seed);
  const std::size_t batch = config.resolved_batch_size();

  VqaTrainResult result;
  result.final_checkpoint = out_dir / "vqa_final.ckpt";
  result.best_checkpoint = out_dir / "vqa_best.ckpt";
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.resolved_epochs(); ++epoch) {
    const auto perm = rng.permutation(samples.size());
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
      const std::size_t n = std::min(batch, samples.size() - start);
      const double inv_n = 1.0 / static_cast<double>(n);
      adam.zero_grad();
      double batch_cls = 0.0, batch_rec = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = samples[perm[start + i]];
        auto fwd = model.forward(*s.clip_grid, s.image_low, s.question,
                                 vqa::Mode::train, &rng);
        Tensor cls_grad;
        batch_cls +=
            vqa::classification_loss(fwd.logits->value, s.target, &cls_grad);
        Tensor rec_grad;
        batch_rec += vqa::reconstruction_loss(fwd.reconstruction->value,
                                              s.image_low, &rec_grad);
        cls_grad.scale_(inv_n);
        rec_grad.scale_(inv_n);
        ag::backward(fwd.logits, cls_grad);
        ag::backward(fwd.reconstruction, rec_grad);
      }
      adam.step();
      epoch_loss += (batch_cls + batch_rec) * inv_n;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.loss_log.emplace_back(epoch, epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      model.save(result.best_checkpoint);
    }
  }
  model.save(result.final_checkpoint);

  std::ostringstream csv;
  csv << "epoch,train_loss\n";
  csv.precision(17);
  for (const auto& [epoch, loss] : result.loss_log) {
    csv << epoch << "," << loss << "\n";
  }
  io::write_text_file((out_dir / "vqa_loss.csv").string(), csv.str());
  return result;
}

struct EvaluationResult {
  MetricsReport report;
  PredictionDump dump;
};

/// Predicts every test record exactly once. Gold answers missing from the
/// training vocabulary can never match and count as incorrect.
inline EvaluationResult evaluate(const vqa::VqaModel& model,
                                 const data::DatasetSplit& test,
                                 const data::AnswerVocabulary& vocabulary) {
  if (vocabulary.answers() != model.vocabulary().answers()) {
    throw Error(ErrorKind::VocabularyMismatch,
                "supplied vocabulary differs from the checkpoint's");
  }
  detail::ImageCache cache(model);
  EvaluationResult result;
  for (const auto& rec : test.records) {
    PredictionRow row;
    row.image_id = rec.image_id;
    row.question = rec.question;
    row.gold_answer = rec.answer;
    vqa::VqaModel::Forward fwd =
        model.forward(cache.grid(rec.image_path), cache.low(rec.image_path),
                      rec.question, vqa::Mode::eval);
    row.predicted_answer =
        model.vocabulary().answer_of(
            vqa::VqaModel::argmax_lowest(fwd.logits->value));
    row.correct = data::normalize_answer(row.predicted_answer) ==
                  data::normalize_answer(row.gold_answer);
    result.dump.rows.push_back(std::move(row));
  }
  result.report = compute_accuracy(result.dump, test.records);
  return result;
}

/// Writes a prediction dump as CSV; with failures_only, keeps only the rows
/// every model got wrong (the qualitative failure view).
inline PredictionDump dump_qualitative(const vqa::VqaModel& model,
                                       const std::vector<data::VqaRecord>& samples,
                                       const std::filesystem::path& out,
                                       bool failures_only = false) {
  detail::ImageCache cache(model);
  PredictionDump dump;
  for (const auto& rec : samples) {
    PredictionRow row;
    row.image_id = rec.image_id;
    row.question = rec.question;
    row.gold_answer = rec.answer;
    row.predicted_answer =
        model.predict(img::load_and_preprocess_image(
                          rec.image_path, model.clip_model().config().resolution),
                      cache.low(rec.image_path), rec.question);
    row.correct = data::normalize_answer(row.predicted_answer) ==
                  data::normalize_answer(row.gold_answer);
    dump.rows.push_back(std::move(row));
  }
  const PredictionDump selected = failures_only ? dump.failures_only() : dump;
  io::write_text_file(out.string(), selected.to_csv());
  return selected;
}

/// One independent train+evaluate repetition; run i derives every RNG stream
/// from seed_base + i.
template <typename ModelFactory>
RunAggregate repeat_and_average(const ExperimentConfig& config,
                                const data::DatasetSplit& train,
                                const data::DatasetSplit& test,
                                ModelFactory&& make_model,
                                const std::filesystem::path& out_dir) {
  config.validate();
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < config.repetitions; ++i) {
    const std::uint64_t seed = config.seed_base + i;
    try {
      std::unique_ptr<vqa::VqaModel> model = make_model(seed);
      const auto run_dir = out_dir / ("run_" + std::to_string(i));
      std::filesystem::create_directories(run_dir);
      write_run_manifest(config.resolved_json(), run_dir, seed);
      train_vqa(config, *model, train, run_dir, seed);
      EvaluationResult ev = evaluate(*model, test, model->vocabulary());
      io::write_text_file((run_dir / "predictions.csv").string(),
                          ev.dump.to_csv());
      io::write_text_file((run_dir / "metrics.json").string(),
                          ev.report.to_json().dump(2));
      reports.push_back(std::move(ev.report));
    } catch (const Error& e) {
      throw Error(e.kind(),
                  "repetition " + std::to_string(i) + ": " + e.what());
    }
  }
  return aggregate_runs(std::move(reports));
}

}  // namespace medvqa::harness

#endif  // MEDVQA_HARNESS_EXPERIMENT_HPP_
