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

#include "medvqa/cli/config.hpp"

#include "fixtures.hpp"

using namespace medvqa;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected an Error");
}

}  // namespace

TEST_CASE("a minimal config resolves with documented defaults") {
  auto cfg = cli::parse_root_config(nlohmann::json::object());
  CHECK(cfg.pretrain.epochs == 50);
  CHECK(cfg.pretrain.batch_size == 64);
  CHECK(cfg.pretrain.learning_rate == 1e-5);
  CHECK(cfg.pretrain.context_window == 76);
  CHECK(cfg.vqa.resolved_epochs() == 20);
  CHECK(cfg.vqa.repetitions == 10);
  CHECK(cfg.vqa.deterministic);
}

TEST_CASE("unknown keys and wrong types are rejected with the key name") {
  nlohmann::json bad = {{"vqa", {{"epoks", 5}}}};
  try {
    cli::parse_root_config(bad);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("vqa.epoks") != std::string::npos);
  }

  nlohmann::json wrong_type = {{"vqa", {{"epochs", "twenty"}}}};
  try {
    cli::parse_root_config(wrong_type);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("vqa.epochs") != std::string::npos);
  }
}

TEST_CASE("dotted-key overrides parse by schema type") {
  nlohmann::json j = nlohmann::json::object();
  cli::apply_override(j, "vqa.epochs=33");
  cli::apply_override(j, "vqa.learning_rate=0.5");
  cli::apply_override(j, "vqa.deterministic=false");
  cli::apply_override(j, "vqa.model.cdae.noise_sigma=0.25");
  cli::apply_override(j, "data.dialect=slake");
  auto cfg = cli::parse_root_config(j);
  CHECK(cfg.vqa.resolved_epochs() == 33);
  CHECK(cfg.vqa.resolved_learning_rate() == 0.5);
  CHECK_FALSE(cfg.vqa.deterministic);
  CHECK(cfg.vqa.model.cdae.noise_sigma == 0.25);
  CHECK(cfg.dialect == data::Dialect::slake);
  CHECK(cfg.vqa.dataset == data::Dialect::slake);

  SUBCASE("bad values name the offending key") {
    try {
      cli::apply_override(j, "vqa.epochs=abc");
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigError);
      CHECK(std::string(e.what()).find("vqa.epochs") != std::string::npos);
    }
    CHECK(kind_of([&] { cli::apply_override(j, "nosuch.key=1"); }) ==
          ErrorKind::ConfigError);
    CHECK(kind_of([&] { cli::apply_override(j, "not-an-override"); }) ==
          ErrorKind::ConfigError);
    CHECK(kind_of([&] { cli::apply_override(j, "vqa.epochs=-3"); }) ==
          ErrorKind::ConfigError);
  }
}

TEST_CASE("profile override re-resolves schedule defaults") {
  nlohmann::json j = {{"vqa", {{"profile", "mevf"}}}};
  cli::apply_override(j, "vqa.profile=qcr");
  auto cfg = cli::parse_root_config(j);
  CHECK(cfg.vqa.resolved_epochs() == 200);
  CHECK(cfg.vqa.resolved_batch_size() == 16);
  CHECK(cfg.vqa.resolved_learning_rate() == 1e-3);

  nlohmann::json explicit_epochs = {{"vqa", {{"profile", "mevf"},
                                             {"epochs", 44}}}};
  cli::apply_override(explicit_epochs, "vqa.profile=qcr");
  auto cfg2 = cli::parse_root_config(explicit_epochs);
  CHECK(cfg2.vqa.resolved_epochs() == 44);  // explicit override wins
}

TEST_CASE("backbone config patches apply over the preset") {
  nlohmann::json j = {{"pretrain",
                       {{"backbone", "rn50x4"},
                        {"backbone_config", {{"resolution", 96}}}}}};
  auto cfg = cli::parse_root_config(j);
  auto backbone = cfg.resolved_backbone();
  CHECK(backbone.kind == clip::Backbone::rn50x4);
  CHECK(backbone.resolution == 96);
  CHECK(backbone.embed_dim == 640);  // untouched preset value
}

TEST_CASE("relative asset paths resolve under MEDVQA_ASSET_DIR") {
  setenv("MEDVQA_ASSET_DIR", "/opt/assets", 1);
  nlohmann::json j = {{"assets",
                       {{"tokenizer", "bpe.json"},
                        {"embeddings", "/abs/path.txt"}}}};
  auto cfg = cli::parse_root_config(j);
  CHECK(cfg.tokenizer_asset == "/opt/assets/bpe.json");
  CHECK(cfg.embeddings_asset == "/abs/path.txt");
  unsetenv("MEDVQA_ASSET_DIR");
  auto cfg2 = cli::parse_root_config(j);
  CHECK(cfg2.tokenizer_asset == "bpe.json");
}

TEST_CASE("config files load with overrides and reject invalid JSON") {
  fixtures::TempDir dir("cli_cfg");
  const auto path = dir / "c.json";
  io::write_text_file(path.string(),
                      R"({"vqa": {"profile": "mevf"}})");
  auto cfg = cli::load_root_config(path.string(), {"vqa.epochs=5"});
  CHECK(cfg.vqa.resolved_epochs() == 5);

  CHECK(kind_of([&] { cli::load_root_config((dir / "nope.json").string(), {}); }) ==
        ErrorKind::MissingFile);

  io::write_text_file((dir / "bad.json").string(), "{ not json");
  CHECK(kind_of([&] { cli::load_root_config((dir / "bad.json").string(), {}); }) ==
        ErrorKind::ConfigError);
}

TEST_CASE("run directories never clobber existing ones") {
  fixtures::TempDir dir("runs");
  auto first = cli::allocate_run_dir(dir / "train");
  CHECK(first == dir / "train");
  io::write_text_file((first / "marker.txt").string(), "x");

  auto second = cli::allocate_run_dir(dir / "train");
  CHECK(second == dir / "train_1");
  auto third = cli::allocate_run_dir(dir / "train");
  CHECK(third == dir / "train_2");
  CHECK(std::filesystem::exists(first / "marker.txt"));
}

TEST_CASE("resolved config echo carries the full schedule") {
  auto cfg = cli::parse_root_config(
      nlohmann::json{{"vqa", {{"profile", "qcr"}}}});
  auto echo = cfg.resolved_json();
  CHECK(echo["vqa"]["epochs"] == 200);
  CHECK(echo["vqa"]["batch_size"] == 16);
  CHECK(echo["vqa"]["learning_rate"] == 1e-3);
  CHECK(echo["pretrain"]["epochs"] == 50);
  CHECK(echo["pretrain"]["backbone_config"]["resolution"] == 224);
}
