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

#ifndef MEDVQA_CLIP_CONTRASTIVE_HPP_
#define MEDVQA_CLIP_CONTRASTIVE_HPP_

#include <cmath>
#include <vector>

#include "medvqa/core/error.hpp"
#include "medvqa/core/tensor.hpp"

namespace medvqa::clip {

enum class Modality { image, text };

struct EmbeddingBatch {
  Tensor vectors;  // [N, D]
  Modality modality = Modality::image;
};

/// L2-normalizes every row in place.
inline void normalize_rows(Tensor& m) {
  const std::size_t n = m.rows(), d = m.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += m(i, j) * m(i, j);
    const double norm = std::sqrt(s);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < d; ++j) m(i, j) /= norm;
    }
  }
}

/// N×N scaled cosine-similarity logits for a matched batch.
struct SimilarityMatrix {
  Tensor logits;        // [N, N]; logits[i][j] = scale * cos(image_i, text_j)
  double logit_scale = 1.0;
};

/// logits[i][j] = logit_scale * <normalized image_i, normalized text_j>.
inline SimilarityMatrix similarity_logits(const EmbeddingBatch& images,
                                          const EmbeddingBatch& texts,
                                          double logit_scale) {
  if (images.vectors.rank() != 2 || texts.vectors.rank() != 2 ||
      images.vectors.rows() != texts.vectors.rows() ||
      images.vectors.cols() != texts.vectors.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "similarity_logits: embedding batches must both be [N, D]");
  }
  Tensor im = images.vectors;
  Tensor tx = texts.vectors;
  normalize_rows(im);
  normalize_rows(tx);
  SimilarityMatrix sim;
  sim.logit_scale = logit_scale;
  sim.logits = Tensor({im.rows(), im.rows()});
  as_matrix(sim.logits) =
      logit_scale * (as_matrix(im) * as_matrix(tx).transpose());
  return sim;
}

struct ContrastiveLossReport {
  double image_to_text_loss = 0.0;
  double text_to_image_loss = 0.0;
  double total = 0.0;  // (image_to_text + text_to_image) / 2
};

namespace detail {

// Mean softmax cross-entropy over rows with diagonal targets; if grad is
// non-null, accumulates weight * d(loss)/d(logits) into it.
inline double diagonal_cross_entropy_rows(const Tensor& logits, Tensor* grad,
                                          double weight) {
  const std::size_t n = logits.rows();
  if (grad && !grad->same_shape(logits)) *grad = Tensor(logits.shape());
  double loss = 0.0;
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(logits(i, j) - m);
      z += p[j];
    }
    loss += std::log(z) - (logits(i, i) - m);
    if (grad) {
      const double w = weight / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        (*grad)(i, j) += w * (p[j] / z - (i == j ? 1.0 : 0.0));
      }
    }
  }
  return loss / static_cast<double>(n);
}

}  // namespace detail

/// Average of the image->text (rows) and text->image (columns) cross-entropy
/// over the similarity logits; matched pairs sit on the diagonal.
inline ContrastiveLossReport symmetric_contrastive_loss(const Tensor& logits,
                                                        Tensor* grad = nullptr) {
  if (logits.rank() != 2 || logits.rows() != logits.cols()) {
    throw Error(ErrorKind::NonSquare,
                "contrastive loss requires a square logits matrix");
  }
  if (grad) {
    if (!grad->same_shape(logits)) *grad = Tensor(logits.shape());
    grad->fill(0.0);
  }
  ContrastiveLossReport report;
  report.image_to_text_loss =
      detail::diagonal_cross_entropy_rows(logits, grad, 0.5);
  Tensor logits_t = transpose(logits);
  Tensor grad_t;
  report.text_to_image_loss = detail::diagonal_cross_entropy_rows(
      logits_t, grad ? &grad_t : nullptr, 0.5);
  if (grad) {
    // fold the column-direction gradient back into row-major orientation
    Tensor folded = transpose(grad_t);
    grad->add_(folded);
  }
  report.total = 0.5 * (report.image_to_text_loss + report.text_to_image_loss);
  return report;
}

inline ContrastiveLossReport symmetric_contrastive_loss(
    const SimilarityMatrix& sim, Tensor* grad = nullptr) {
  return symmetric_contrastive_loss(sim.logits, grad);
}

}  // namespace medvqa::clip

#endif  // MEDVQA_CLIP_CONTRASTIVE_HPP_
