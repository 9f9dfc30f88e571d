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

#ifndef MEDVQA_VQA_LOSSES_HPP_
#define MEDVQA_VQA_LOSSES_HPP_

#include <cmath>

#include "medvqa/core/error.hpp"
#include "medvqa/core/tensor.hpp"

namespace medvqa::vqa {

struct LossReport {
  double cls_loss = 0.0;
  double rec_loss = 0.0;
  double vqa_loss = 0.0;  // cls_loss + rec_loss
};

/// Sigmoid + binary cross-entropy, summed over answer classes and averaged
/// over batch rows. logits/targets are [N, V]. If grad is non-null it
/// receives d(loss)/d(logits) = (sigmoid(z) - t) / N.
inline double classification_loss(const Tensor& logits, const Tensor& targets,
                                  Tensor* grad = nullptr) {
  if (!logits.same_shape(targets) || logits.rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch,
                "classification_loss: logits/targets must both be [N, V]");
  }
  if (!logits.all_finite() || !targets.all_finite()) {
    throw Error(ErrorKind::NonFinite, "classification_loss: non-finite input");
  }
  if (grad && !grad->same_shape(logits)) *grad = Tensor(logits.shape());
  const std::size_t n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = logits[i];
    const double t = targets[i];
    // softplus(z) - z*t, evaluated stably for either sign of z
    loss += (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)))
            - z * t;
    if (grad) {
      const double s = 1.0 / (1.0 + std::exp(-z));
      (*grad)[i] = (s - t) * inv_n;
    }
  }
  return loss * inv_n;
}

/// Mean squared error over all pixels. grad = 2 (rec - orig) / numel.
inline double reconstruction_loss(const Tensor& reconstruction,
                                  const Tensor& original,
                                  Tensor* grad = nullptr) {
  if (!reconstruction.same_shape(original)) {
    throw Error(ErrorKind::ShapeMismatch,
                "reconstruction_loss: shape mismatch");
  }
  if (!reconstruction.all_finite() || !original.all_finite()) {
    throw Error(ErrorKind::NonFinite, "reconstruction_loss: non-finite input");
  }
  if (grad && !grad->same_shape(reconstruction)) {
    *grad = Tensor(reconstruction.shape());
  }
  const double inv_p = 1.0 / static_cast<double>(reconstruction.numel());
  double loss = 0.0;
  for (std::size_t i = 0; i < reconstruction.numel(); ++i) {
    const double d = reconstruction[i] - original[i];
    loss += d * d;
    if (grad) (*grad)[i] = 2.0 * d * inv_p;
  }
  return loss * inv_p;
}

/// Joint objective: answer classification plus image reconstruction.
inline LossReport vqa_loss(const Tensor& logits, const Tensor& target,
                           const Tensor& reconstruction,
                           const Tensor& original) {
  LossReport report;
  report.cls_loss = classification_loss(logits, target);
  report.rec_loss = reconstruction_loss(reconstruction, original);
  report.vqa_loss = report.cls_loss + report.rec_loss;
  return report;
}

}  // namespace medvqa::vqa

#endif  // MEDVQA_VQA_LOSSES_HPP_
