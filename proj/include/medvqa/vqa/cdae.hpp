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

#ifndef MEDVQA_VQA_CDAE_HPP_
#define MEDVQA_VQA_CDAE_HPP_

#include <string>

#include <json.hpp>

#include "medvqa/core/autograd.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/nn/module.hpp"

namespace medvqa::vqa {

enum class Mode { train, eval };

/// Convolutional denoising autoencoder: three stride-2 convolution blocks
/// encode a single-channel image; the encoding is the flattened pooled
/// feature map; a mirrored transposed-convolution decoder reconstructs the
/// clean input. Noise is applied only in train mode.
struct CdaeConfig {
  std::size_t input_size = 128;  // single-channel S×S input, S divisible by 8
  std::size_t channels1 = 8;
  std::size_t channels2 = 16;
  std::size_t channels3 = 16;
  std::size_t pool = 4;  // encoding = channels3 * pool * pool values
  double noise_sigma = 0.1;

  std::size_t latent_dim() const { return channels3 * pool * pool; }

  void validate() const {
    if (input_size % 8 != 0 || (input_size / 8) % pool != 0) {
      throw Error(ErrorKind::ConfigInvalid,
                  "cdae input_size must be divisible by 8*pool");
    }
    if (noise_sigma < 0.0) {
      throw Error(ErrorKind::ConfigInvalid, "cdae noise_sigma must be >= 0");
    }
  }

  nlohmann::json to_json() const {
    return {{"input_size", input_size}, {"channels1", channels1},
            {"channels2", channels2},   {"channels3", channels3},
            {"pool", pool},             {"noise_sigma", noise_sigma}};
  }

  static CdaeConfig from_json(const nlohmann::json& j) {
    CdaeConfig c;
    c.input_size = j.at("input_size").get<std::size_t>();
    c.channels1 = j.at("channels1").get<std::size_t>();
    c.channels2 = j.at("channels2").get<std::size_t>();
    c.channels3 = j.at("channels3").get<std::size_t>();
    c.pool = j.at("pool").get<std::size_t>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    return c;
  }
};

class Cdae {
 public:
  Cdae() = default;
  Cdae(nn::ParamStore& store, const CdaeConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    enc1_ = nn::Conv2d(store, "cdae.enc1", 1, cfg.channels1, 3, 2, 1, rng);
    enc2_ = nn::Conv2d(store, "cdae.enc2", cfg.channels1, cfg.channels2, 3, 2,
                       1, rng);
    enc3_ = nn::Conv2d(store, "cdae.enc3", cfg.channels2, cfg.channels3, 3, 2,
                       1, rng);
    dec1_ = nn::ConvTranspose2d(store, "cdae.dec1", cfg.channels3,
                                cfg.channels2, 2, 2, rng);
    dec2_ = nn::ConvTranspose2d(store, "cdae.dec2", cfg.channels2,
                                cfg.channels1, 2, 2, rng);
    dec3_ = nn::ConvTranspose2d(store, "cdae.dec3", cfg.channels1, 1, 2, 2,
                                rng);
  }

  struct Output {
    ag::Var encoding;        // [1, latent_dim]
    ag::Var reconstruction;  // [1, S, S]
    Tensor noised_input;     // the encoder's actual input
  };

  /// In train mode, zero-mean gaussian noise with std noise_sigma is added
  /// to the input before encoding; eval mode is noise-free and deterministic.
  Output forward(const Tensor& image, Mode mode, Rng* noise_rng = nullptr,
                 double noise_sigma_override = -1.0) const {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 1 || s[1] != cfg_.input_size ||
        s[2] != cfg_.input_size) {
      throw Error(ErrorKind::ShapeMismatch,
                  "cdae expects a [1, " + std::to_string(cfg_.input_size) +
                      ", " + std::to_string(cfg_.input_size) + "] input");
    }
    const double sigma =
        noise_sigma_override >= 0.0 ? noise_sigma_override : cfg_.noise_sigma;

    Output out;
    out.noised_input = image;
    if (mode == Mode::train && sigma > 0.0) {
      if (!noise_rng) {
        throw Error(ErrorKind::ConfigInvalid,
                    "train-mode cdae forward needs a noise RNG");
      }
      for (std::size_t i = 0; i < out.noised_input.numel(); ++i) {
        out.noised_input[i] += sigma * noise_rng->gaussian();
      }
    }

    ag::Var x = ag::constant(out.noised_input);
    ag::Var h1 = ag::relu(enc1_.forward(x));
    ag::Var h2 = ag::relu(enc2_.forward(h1));
    ag::Var h3 = ag::relu(enc3_.forward(h2));  // [c3, S/8, S/8]
    out.encoding = ag::reshape(ag::avg_pool_to(h3, cfg_.pool),
                               {1, cfg_.latent_dim()});
    ag::Var d = ag::relu(dec1_.forward(h3));
    d = ag::relu(dec2_.forward(d));
    out.reconstruction = dec3_.forward(d);  // [1, S, S]
    return out;
  }

  const CdaeConfig& config() const { return cfg_; }

 private:
  CdaeConfig cfg_;
  nn::Conv2d enc1_, enc2_, enc3_;
  nn::ConvTranspose2d dec1_, dec2_, dec3_;
};

}  // namespace medvqa::vqa

#endif  // MEDVQA_VQA_CDAE_HPP_
