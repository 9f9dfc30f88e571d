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

#ifndef MEDVQA_TESTS_ORACLES_HPP_
#define MEDVQA_TESTS_ORACLES_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "medvqa/core/tensor.hpp"

namespace oracles {

using medvqa::Tensor;

/// Central finite differences of a scalar-valued function of one tensor.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                                Tensor x, double step = 1e-4) {
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double hi = f(x);
    x[i] = saved - step;
    const double lo = f(x);
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

/// Worst elementwise relative error, with an absolute floor for tiny entries.
inline double max_relative_error(const Tensor& a, const Tensor& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double denom =
        std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Brute-force symmetric contrastive loss: softmax cross-entropy with
/// diagonal targets over rows, then over columns, averaged.
inline double contrastive_loss_oracle(const Tensor& logits) {
  const std::size_t n = logits.rows();
  auto ce = [&](bool rows) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double max_v = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = rows ? logits(i, j) : logits(j, i);
        max_v = std::max(max_v, v);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = rows ? logits(i, j) : logits(j, i);
        denom += std::exp(v - max_v);
      }
      total += -(logits(i, i) - max_v) + std::log(denom);
    }
    return total / static_cast<double>(n);
  };
  return 0.5 * (ce(true) + ce(false));
}

/// Direct per-class binary cross-entropy with sigmoid activations, summed
/// over classes.
inline double bce_sum_oracle(const Tensor& logits, const Tensor& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    const double t = targets[i];
    total += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return total;
}

/// Explicit-loop bilinear attention: relu-projected visual and question
/// features, probe-scored softmax over positions, attention-weighted sum per
/// glimpse, concatenated and linearly mapped.
struct BanOracleParams {
  // per glimpse: v_weight [J, D_v], v_bias [J], q_weight [J, H], q_bias [J],
  // probe [J]
  std::vector<std::vector<std::vector<double>>> v_weight;
  std::vector<std::vector<double>> v_bias;
  std::vector<std::vector<std::vector<double>>> q_weight;
  std::vector<std::vector<double>> q_bias;
  std::vector<std::vector<double>> probe;
  std::vector<std::vector<double>> out_weight;  // [F, G*J]
  std::vector<double> out_bias;                 // [F]
};

struct BanOracleResult {
  std::vector<double> fused;
  std::vector<std::vector<double>> attention;  // [G][K]
};

inline BanOracleResult ban_oracle(const BanOracleParams& p,
                                  const std::vector<std::vector<double>>& visual,
                                  const std::vector<double>& question) {
  const std::size_t glimpses = p.v_weight.size();
  const std::size_t k = visual.size();
  BanOracleResult result;
  std::vector<double> all_feats;
  for (std::size_t g = 0; g < glimpses; ++g) {
    const std::size_t joint = p.v_bias[g].size();
    std::vector<double> qg(joint);
    for (std::size_t j = 0; j < joint; ++j) {
      double acc = p.q_bias[g][j];
      for (std::size_t h = 0; h < question.size(); ++h) {
        acc += p.q_weight[g][j][h] * question[h];
      }
      qg[j] = std::max(acc, 0.0);
    }
    std::vector<std::vector<double>> joint_feats(k, std::vector<double>(joint));
    std::vector<double> scores(k);
    for (std::size_t pos = 0; pos < k; ++pos) {
      double score = 0.0;
      for (std::size_t j = 0; j < joint; ++j) {
        double acc = p.v_bias[g][j];
        for (std::size_t d = 0; d < visual[pos].size(); ++d) {
          acc += p.v_weight[g][j][d] * visual[pos][d];
        }
        joint_feats[pos][j] = std::max(acc, 0.0) * qg[j];
        score += p.probe[g][j] * joint_feats[pos][j];
      }
      scores[pos] = score;
    }
    double max_s = scores[0];
    for (double s : scores) max_s = std::max(max_s, s);
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - max_s);
    std::vector<double> attn(k);
    for (std::size_t pos = 0; pos < k; ++pos) {
      attn[pos] = std::exp(scores[pos] - max_s) / denom;
    }
    std::vector<double> fg(joint, 0.0);
    for (std::size_t pos = 0; pos < k; ++pos) {
      for (std::size_t j = 0; j < joint; ++j) {
        fg[j] += attn[pos] * joint_feats[pos][j];
      }
    }
    all_feats.insert(all_feats.end(), fg.begin(), fg.end());
    result.attention.push_back(std::move(attn));
  }
  const std::size_t fused_dim = p.out_bias.size();
  result.fused.resize(fused_dim);
  for (std::size_t f = 0; f < fused_dim; ++f) {
    double acc = p.out_bias[f];
    for (std::size_t j = 0; j < all_feats.size(); ++j) {
      acc += p.out_weight[f][j] * all_feats[j];
    }
    result.fused[f] = acc;
  }
  return result;
}

}  // namespace oracles

#endif  // MEDVQA_TESTS_ORACLES_HPP_
