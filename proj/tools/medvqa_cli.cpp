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

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "medvqa/medvqa.hpp"

namespace {

using medvqa::Error;
using medvqa::ErrorKind;
namespace fs = std::filesystem;

struct Options {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output = "runs";
  bool deterministic = false;
  std::optional<std::uint64_t> seed;
  bool failures_only = false;
};

std::string require_path(const std::string& path, const char* key) {
  if (path.empty()) {
    throw Error(ErrorKind::ConfigError,
                std::string("config key '") + key + "' is required here");
  }
  return path;
}

void write_manifest(const medvqa::cli::RootConfig& config, const fs::path& dir,
                    const std::string& subcommand) {
  nlohmann::json manifest = {{"subcommand", subcommand},
                             {"config", config.resolved_json()}};
  medvqa::io::write_text_file((dir / "run_manifest.json").string(),
                              manifest.dump(2));
}

std::shared_ptr<medvqa::clip::ClipModel> load_clip_tower(
    const medvqa::cli::RootConfig& config) {
  if (!config.vqa.checkpoint_in.empty()) {
    return std::make_shared<medvqa::clip::ClipModel>(
        medvqa::clip::ClipModel::load(config.vqa.checkpoint_in));
  }
  auto backbone = medvqa::clip::BackboneConfig::preset(config.vqa.backbone);
  return std::make_shared<medvqa::clip::ClipModel>(backbone);
}

int run_pretrain(const medvqa::cli::RootConfig& config, const fs::path& dir) {
  const auto manifest =
      require_path(config.caption_manifest, "data.caption_manifest");
  const auto tokenizer_path =
      require_path(config.tokenizer_asset, "assets.tokenizer");
  auto corpus = medvqa::data::load_image_caption_corpus(manifest);
  std::vector<medvqa::data::ImageCaptionRecord> val = corpus.records;
  if (!config.val_caption_manifest.empty()) {
    val = medvqa::data::load_image_caption_corpus(config.val_caption_manifest)
              .records;
  }
  auto tokenizer = medvqa::data::BpeTokenizer::from_file(tokenizer_path);
  medvqa::clip::ClipModel model(config.resolved_backbone(),
                                config.pretrain.logit_scale_init,
                                config.pretrain.seed);
  auto result = medvqa::clip::run_pretraining(config.pretrain, model,
                                              corpus.records, val, tokenizer,
                                              dir);
  if (!corpus.diagnostics.empty()) {
    std::string text;
    for (const auto& line : corpus.diagnostics) text += line + "\n";
    medvqa::io::write_text_file((dir / "ingest_diagnostics.txt").string(),
                                text);
  }
  std::cout << "pretraining finished: " << result.final_checkpoint.string()
            << "\n";
  return 0;
}

int run_train(const medvqa::cli::RootConfig& config, const fs::path& dir) {
  const auto root = require_path(config.data_root, "data.root");
  const auto emb_path =
      require_path(config.embeddings_asset, "assets.embeddings");
  auto dataset = medvqa::data::load_vqa_dataset(root, config.dialect);
  auto embeddings = std::make_shared<const medvqa::vqa::WordEmbeddings>(
      medvqa::vqa::WordEmbeddings::from_file(emb_path));
  auto vocabulary = medvqa::data::AnswerVocabulary::build(dataset.train);

  auto make_model = [&](std::uint64_t seed) {
    return std::make_unique<medvqa::vqa::VqaModel>(
        config.vqa.model, load_clip_tower(config), embeddings, vocabulary,
        seed);
  };
  auto aggregate = medvqa::harness::repeat_and_average(
      config.vqa, dataset.train, dataset.test, make_model, dir);

  nlohmann::json per_run = nlohmann::json::array();
  for (const auto& report : aggregate.per_run) per_run.push_back(report.to_json());
  nlohmann::json summary = {{"run_count", aggregate.run_count},
                            {"mean", aggregate.mean_report.to_json()},
                            {"per_run", per_run}};
  medvqa::io::write_text_file((dir / "metrics_mean.json").string(),
                              summary.dump(2));
  medvqa::io::write_text_file((dir / "metrics.txt").string(),
                              aggregate.mean_report.to_text());
  std::cout << aggregate.mean_report.to_text();
  return 0;
}

std::unique_ptr<medvqa::vqa::VqaModel> load_vqa_model(
    const medvqa::cli::RootConfig& config) {
  const auto weights = require_path(config.weights_asset, "assets.weights");
  const auto emb_path =
      require_path(config.embeddings_asset, "assets.embeddings");
  auto embeddings = std::make_shared<const medvqa::vqa::WordEmbeddings>(
      medvqa::vqa::WordEmbeddings::from_file(emb_path));
  return medvqa::vqa::VqaModel::load(weights, embeddings);
}

int run_evaluate(const medvqa::cli::RootConfig& config, const fs::path& dir) {
  const auto root = require_path(config.data_root, "data.root");
  auto dataset = medvqa::data::load_vqa_dataset(root, config.dialect);
  auto model = load_vqa_model(config);
  auto result =
      medvqa::harness::evaluate(*model, dataset.test, model->vocabulary());
  medvqa::io::write_text_file((dir / "metrics.json").string(),
                              result.report.to_json().dump(2));
  medvqa::io::write_text_file((dir / "metrics.txt").string(),
                              result.report.to_text());
  medvqa::io::write_text_file((dir / "predictions.csv").string(),
                              result.dump.to_csv());
  std::cout << result.report.to_text();
  return 0;
}

void write_histogram(const medvqa::data::QuestionTypeHistogram& hist,
                     const fs::path& csv_path) {
  std::string text = "question_type,count\n";
  for (const auto& [type, count] : hist.counts) {
    text += medvqa::io::csv_join({type, std::to_string(count)}) + "\n";
  }
  medvqa::io::write_text_file(csv_path.string(), text);
}

int run_analyze(const medvqa::cli::RootConfig& config, const fs::path& dir) {
  const auto root = require_path(config.data_root, "data.root");
  auto dataset = medvqa::data::load_vqa_dataset(root, config.dialect);
  auto hist = medvqa::data::question_type_histogram(dataset.train, 5);
  write_histogram(hist, dir / "question_types.csv");
  auto overlap = medvqa::data::verify_split_images(dataset.train, dataset.test);
  nlohmann::json analysis = {
      {"train_size", dataset.train.size()},
      {"test_size", dataset.test.size()},
      {"test_images_in_train", overlap.test_images_in_train},
      {"splits_disjoint", overlap.disjoint}};
  medvqa::io::write_text_file((dir / "analysis.json").string(),
                              analysis.dump(2));
  std::cout << "analysis written to " << dir.string() << "\n";
  return 0;
}

int run_dump_examples(const medvqa::cli::RootConfig& config,
                      const fs::path& dir, bool failures_only) {
  const auto root = require_path(config.data_root, "data.root");
  auto dataset = medvqa::data::load_vqa_dataset(root, config.dialect);
  auto model = load_vqa_model(config);
  auto dump = medvqa::harness::dump_qualitative(
      *model, dataset.test.records, dir / "examples.csv", failures_only);
  std::cout << dump.rows.size() << " rows written to "
            << (dir / "examples.csv").string() << "\n";
  return 0;
}

int run_plot_types(const medvqa::cli::RootConfig& config, const fs::path& dir) {
  const auto root = require_path(config.data_root, "data.root");
  auto dataset = medvqa::data::load_vqa_dataset(root, config.dialect);
  auto hist = medvqa::data::question_type_histogram(dataset.train, 5);
  write_histogram(hist, dir / "question_types.csv");

  // cosmetic text rendering of the same counts
  std::size_t max_count = 1;
  for (const auto& [type, count] : hist.counts) {
    max_count = std::max(max_count, count);
  }
  std::ostringstream plot;
  for (const auto& [type, count] : hist.counts) {
    const std::size_t width = (count * 40) / max_count;
    plot << type << " (" << count << ")\n  "
         << std::string(width, '#') << "\n";
  }
  medvqa::io::write_text_file((dir / "question_types.txt").string(),
                              plot.str());
  std::cout << plot.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive pretraining and medical visual question answering"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file")
        ->required();
    sub->add_option("--set", opt.overrides,
                    "config override, dotted key=value (repeatable)");
    sub->add_option("--output", opt.output, "root directory for run outputs");
    sub->add_flag("--deterministic", opt.deterministic,
                  "force deterministic execution");
    sub->add_option("--seed", opt.seed, "base seed override");
  };
  add_common(app.add_subcommand("pretrain",
                                "contrastive pretraining of the dual encoder"));
  add_common(app.add_subcommand("train", "train and evaluate the VQA model"));
  add_common(app.add_subcommand("evaluate",
                                "evaluate a VQA checkpoint on the test split"));
  add_common(app.add_subcommand("analyze", "dataset statistics and overlap"));
  auto* dump_sub =
      app.add_subcommand("dump-examples", "per-question prediction dump");
  add_common(dump_sub);
  dump_sub->add_flag("--failures-only", opt.failures_only,
                     "keep only incorrectly answered rows");
  add_common(app.add_subcommand("plot-types",
                                "question-type histogram data and plot"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();

  medvqa::cli::RootConfig config;
  try {
    config = medvqa::cli::load_root_config(opt.config_path, opt.overrides);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  fs::path run_dir;
  try {
    if (opt.seed) {
      config.pretrain.seed = *opt.seed;
      config.vqa.seed_base = *opt.seed;
    }
    if (opt.deterministic) config.vqa.deterministic = true;
    run_dir = medvqa::cli::allocate_run_dir(fs::path(opt.output) /
                                            opt.subcommand);
    write_manifest(config, run_dir, opt.subcommand);

    if (opt.subcommand == "pretrain") return run_pretrain(config, run_dir);
    if (opt.subcommand == "train") return run_train(config, run_dir);
    if (opt.subcommand == "evaluate") return run_evaluate(config, run_dir);
    if (opt.subcommand == "analyze") return run_analyze(config, run_dir);
    if (opt.subcommand == "dump-examples") {
      return run_dump_examples(config, run_dir, opt.failures_only);
    }
    return run_plot_types(config, run_dir);
  } catch (const Error& e) {
    const bool usage = e.kind() == ErrorKind::UsageError ||
                       e.kind() == ErrorKind::ConfigError ||
                       e.kind() == ErrorKind::ConfigInvalid;
    std::string log_pointer = "(no run directory)";
    if (!run_dir.empty()) {
      const fs::path log = run_dir / "error.log";
      try {
        medvqa::io::write_text_file(log.string(), std::string(e.what()) + "\n");
        log_pointer = log.string();
      } catch (...) {
      }
    }
    std::cerr << "error: " << e.what() << " [details: " << log_pointer
              << "]\n";
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
