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

#ifndef MEDVQA_NN_ADAM_HPP_
#define MEDVQA_NN_ADAM_HPP_

#include <cmath>
#include <vector>

#include "medvqa/nn/module.hpp"

namespace medvqa::nn {

/// Adam with bias-corrected first and second moments.
class Adam {
 public:
  explicit Adam(ParamStore& store, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, var] : store.params()) {
      m_.emplace_back(var->value.shape());
      v_.emplace_back(var->value.shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const auto& params = store_.params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& var = params[p].second;
      if (var->grad.numel() == 0) continue;
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (std::size_t i = 0; i < var->value.numel(); ++i) {
        const double g = var->grad[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        var->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() { store_.zero_grad(); }

  double learning_rate() const { return lr_; }

 private:
  ParamStore& store_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace medvqa::nn

#endif  // MEDVQA_NN_ADAM_HPP_
