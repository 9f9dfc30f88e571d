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

#ifndef MEDVQA_VQA_BAN_HPP_
#define MEDVQA_VQA_BAN_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "medvqa/core/autograd.hpp"
#include "medvqa/nn/module.hpp"

namespace medvqa::vqa {

struct BanConfig {
  std::size_t glimpses = 2;
  std::size_t joint_dim = 1024;
  std::size_t fused_dim = 1024;

  void validate() const {
    if (glimpses < 1 || joint_dim < 1 || fused_dim < 1) {
      throw Error(ErrorKind::ConfigInvalid, "ban dimensions must be >= 1");
    }
  }

  nlohmann::json to_json() const {
    return {{"glimpses", glimpses},
            {"joint_dim", joint_dim},
            {"fused_dim", fused_dim}};
  }

  static BanConfig from_json(const nlohmann::json& j) {
    BanConfig c;
    c.glimpses = j.at("glimpses").get<std::size_t>();
    c.joint_dim = j.at("joint_dim").get<std::size_t>();
    c.fused_dim = j.at("fused_dim").get<std::size_t>();
    return c;
  }
};

/// Low-rank bilinear attention over visual positions. For glimpse g with
/// joint dimension J:
///   h_gk      = relu(U_g v_k) ⊙ relu(W_g q)           (k = 1..K)
///   a_gk      = softmax_k( p_g · h_gk )
///   f_g       = Σ_k a_gk h_gk
///   fused     = O [f_1; ...; f_G]
/// Each attention row is a distribution over the K positions.
class BanFusion {
 public:
  BanFusion() = default;
  BanFusion(nn::ParamStore& store, const BanConfig& cfg, std::size_t visual_dim,
            std::size_t question_dim, Rng& rng)
      : cfg_(cfg) {
    cfg.validate();
    for (std::size_t g = 0; g < cfg.glimpses; ++g) {
      const std::string prefix = "ban.g" + std::to_string(g);
      v_proj_.emplace_back(store, prefix + ".v", visual_dim, cfg.joint_dim, rng);
      q_proj_.emplace_back(store, prefix + ".q", question_dim, cfg.joint_dim,
                           rng);
      probe_.push_back(store.add(
          prefix + ".probe",
          nn::init::dense(rng, cfg.joint_dim, {1, cfg.joint_dim})));
    }
    out_proj_ = nn::Linear(store, "ban.out", cfg.glimpses * cfg.joint_dim,
                           cfg.fused_dim, rng);
  }

  struct Output {
    ag::Var fused;      // [1, fused_dim]
    ag::Var attention;  // [G, K], rows sum to 1
  };

  /// visual [K, D_v], question [1, H].
  Output forward(const ag::Var& visual, const ag::Var& question) const {
    if (visual->value.rank() != 2 || visual->value.rows() < 1) {
      throw Error(ErrorKind::ShapeMismatch,
                  "ban_fuse: visual features must be [K >= 1, D_v]");
    }
    const std::size_t k = visual->value.rows();
    std::vector<ag::Var> glimpse_feats;
    std::vector<ag::Var> attn_rows;
    for (std::size_t g = 0; g < cfg_.glimpses; ++g) {
      ag::Var vg = ag::relu(v_proj_[g].forward(visual));        // [K, J]
      ag::Var qg = ag::relu(q_proj_[g].forward(question));      // [1, J]
      ag::Var joint = ag::mul(vg, ag::tile_rows(qg, k));        // [K, J]
      ag::Var logits = ag::matmul_nt(joint, probe_[g]);         // [K, 1]
      ag::Var attn = ag::softmax_rows(ag::transpose(logits));   // [1, K]
      glimpse_feats.push_back(ag::matmul(attn, joint));         // [1, J]
      attn_rows.push_back(attn);
    }
    ag::Var stacked = attn_rows[0];
    ag::Var feats = glimpse_feats[0];
    for (std::size_t g = 1; g < cfg_.glimpses; ++g) {
      stacked = ag::concat_rows(stacked, attn_rows[g]);
      feats = ag::concat_cols(feats, glimpse_feats[g]);
    }
    return {out_proj_.forward(feats), stacked};
  }

  const BanConfig& config() const { return cfg_; }

 private:
  BanConfig cfg_;
  std::vector<nn::Linear> v_proj_;
  std::vector<nn::Linear> q_proj_;
  std::vector<ag::Var> probe_;
  nn::Linear out_proj_;
};

}  // namespace medvqa::vqa

#endif  // MEDVQA_VQA_BAN_HPP_
