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

#ifndef MEDVQA_CORE_AUTOGRAD_HPP_
#define MEDVQA_CORE_AUTOGRAD_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medvqa/core/tensor.hpp"

namespace medvqa::ag {

/// Reverse-mode autodiff over Tensor values. A Node stores its forward value
/// and a closure that pushes the node's gradient into its parents. Graphs are
/// rebuilt per forward pass (define-by-run); parameters are long-lived leaves.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  }
};

using Var = std::shared_ptr<Node>;

inline Var leaf(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor value) { return leaf(std::move(value), false); }

namespace detail {

inline Var make(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

inline void topo_visit(const Var& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

/// Accumulates seed into root.grad and propagates through the graph.
/// Leaf gradients accumulate across calls until explicitly zeroed; interior
/// gradients are reset per call, so multiple backward passes over a shared
/// subgraph (one per loss head) sum correctly at the leaves.
inline void backward(const Var& root, const Tensor& seed) {
  if (!root->requires_grad) return;
  root->value.require_same_shape(seed, "backward seed");
  std::vector<Node*> order;
  detail::topo_visit(root, order);
  for (Node* node : order) {
    if (node->backward_fn) {
      node->ensure_grad();
      node->grad.fill(0.0);
    }
  }
  root->ensure_grad();
  root->grad.add_(seed);
  // order is post-order (parents before children); walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) {
      for (auto& p : node->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      node->backward_fn(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  a->value.require_same_shape(b->value, "add");
  Tensor out = a->value;
  out.add_(b->value);
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->grad.add_(self.grad);
    if (b->requires_grad) b->grad.add_(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  a->value.require_same_shape(b->value, "sub");
  Tensor out = a->value;
  out.axpy(-1.0, b->value);
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->grad.add_(self.grad);
    if (b->requires_grad) b->grad.axpy(-1.0, self.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  a->value.require_same_shape(b->value, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (a->requires_grad) a->grad[i] += self.grad[i] * b->value[i];
      if (b->requires_grad) b->grad[i] += self.grad[i] * a->value[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a->value;
  out.scale_(c);
  return detail::make(std::move(out), {a}, [a, c](Node& self) {
    a->grad.axpy(c, self.grad);
  });
}

/// Broadcast multiply by a 1-element variable (e.g. a learnable logit scale).
inline Var scale_by(const Var& s, const Var& a) {
  if (s->value.numel() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "scale_by expects scalar variable");
  }
  Tensor out = a->value;
  out.scale_(s->value[0]);
  return detail::make(std::move(out), {s, a}, [s, a](Node& self) {
    if (a->requires_grad) a->grad.axpy(s->value[0], self.grad);
    if (s->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        acc += self.grad[i] * a->value[i];
      }
      s->grad[0] += acc;
    }
  });
}

inline Var relu(const Var& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
  return detail::make(std::move(out), {a}, [a](Node& self) {
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (a->value[i] > 0.0) a->grad[i] += self.grad[i];
    }
  });
}

inline Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  }
  auto n = detail::make(std::move(out), {a}, nullptr);
  Node* np = n.get();
  if (n->requires_grad) {
    n->backward_fn = [a, np](Node& self) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        double y = np->value[i];
        a->grad[i] += self.grad[i] * y * (1.0 - y);
      }
    };
  }
  return n;
}

inline Var tanh(const Var& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  auto n = detail::make(std::move(out), {a}, nullptr);
  Node* np = n.get();
  if (n->requires_grad) {
    n->backward_fn = [a, np](Node& self) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        double y = np->value[i];
        a->grad[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  }
  return n;
}

inline Var exp(const Var& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  auto n = detail::make(std::move(out), {a}, nullptr);
  Node* np = n.get();
  if (n->requires_grad) {
    n->backward_fn = [a, np](Node& self) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        a->grad[i] += self.grad[i] * np->value[i];
      }
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Matrix ops (rank-2 values; row vectors are [1, C])
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  Tensor out = medvqa::matmul(a->value, b->value);
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      as_matrix(a->grad) +=
          as_matrix(self.grad) * as_matrix(b->value).transpose();
    }
    if (b->requires_grad) {
      as_matrix(b->grad) +=
          as_matrix(a->value).transpose() * as_matrix(self.grad);
    }
  });
}

/// a · bᵀ, the similarity-matrix shape.
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "matmul_nt: column count differs");
  }
  Tensor out({a->value.rows(), b->value.rows()});
  as_matrix(out) = as_matrix(a->value) * as_matrix(b->value).transpose();
  return detail::make(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      as_matrix(a->grad) += as_matrix(self.grad) * as_matrix(b->value);
    }
    if (b->requires_grad) {
      as_matrix(b->grad) +=
          as_matrix(self.grad).transpose() * as_matrix(a->value);
    }
  });
}

inline Var transpose(const Var& a) {
  Tensor out = medvqa::transpose(a->value);
  return detail::make(std::move(out), {a}, [a](Node& self) {
    as_matrix(a->grad) += as_matrix(self.grad).transpose();
  });
}

/// x [N, C] + bias [1, C] broadcast over rows.
inline Var add_bias(const Var& x, const Var& bias) {
  if (x->value.cols() != bias->value.cols() || bias->value.rows() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "add_bias: bias must be [1, C]");
  }
  Tensor out = x->value;
  const std::size_t n = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bias->value(0, j);
  }
  return detail::make(std::move(out), {x, bias}, [x, bias](Node& self) {
    if (x->requires_grad) x->grad.add_(self.grad);
    if (bias->requires_grad) {
      const std::size_t n = self.grad.rows(), c = self.grad.cols();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          bias->grad(0, j) += self.grad(i, j);
        }
      }
    }
  });
}

inline Var slice_rows(const Var& a, std::size_t start, std::size_t len) {
  const std::size_t c = a->value.cols();
  if (start + len > a->value.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_rows out of range");
  }
  Tensor out({len, c});
  std::copy(a->value.data() + start * c, a->value.data() + (start + len) * c,
            out.data());
  return detail::make(std::move(out), {a}, [a, start, len, c](Node& self) {
    for (std::size_t i = 0; i < len * c; ++i) {
      a->grad[start * c + i] += self.grad[i];
    }
  });
}

inline Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
  const std::size_t n = a->value.rows(), c = a->value.cols();
  if (start + len > c) {
    throw Error(ErrorKind::ShapeMismatch, "slice_cols out of range");
  }
  Tensor out({n, len});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < len; ++j) out(i, j) = a->value(i, start + j);
  }
  return detail::make(std::move(out), {a}, [a, start, len, n](Node& self) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        a->grad(i, start + j) += self.grad(i, j);
      }
    }
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  const std::size_t n = a->value.rows();
  if (b->value.rows() != n) {
    throw Error(ErrorKind::ShapeMismatch, "concat_cols: row count differs");
  }
  const std::size_t ca = a->value.cols(), cb = b->value.cols();
  Tensor out({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a->value(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b->value(i, j);
  }
  return detail::make(std::move(out), {a, b}, [a, b, n, ca, cb](Node& self) {
    for (std::size_t i = 0; i < n; ++i) {
      if (a->requires_grad) {
        for (std::size_t j = 0; j < ca; ++j) a->grad(i, j) += self.grad(i, j);
      }
      if (b->requires_grad) {
        for (std::size_t j = 0; j < cb; ++j) {
          b->grad(i, j) += self.grad(i, ca + j);
        }
      }
    }
  });
}

inline Var concat_rows(const Var& a, const Var& b) {
  const std::size_t c = a->value.cols();
  if (b->value.cols() != c) {
    throw Error(ErrorKind::ShapeMismatch, "concat_rows: column count differs");
  }
  const std::size_t na = a->value.rows(), nb = b->value.rows();
  Tensor out({na + nb, c});
  std::copy(a->value.data(), a->value.data() + na * c, out.data());
  std::copy(b->value.data(), b->value.data() + nb * c, out.data() + na * c);
  return detail::make(std::move(out), {a, b}, [a, b, na, nb, c](Node& self) {
    if (a->requires_grad) {
      for (std::size_t i = 0; i < na * c; ++i) a->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      for (std::size_t i = 0; i < nb * c; ++i) {
        b->grad[i] += self.grad[na * c + i];
      }
    }
  });
}

/// Repeats a [1, C] row vector K times -> [K, C]; gradient sums over rows.
inline Var tile_rows(const Var& a, std::size_t k) {
  if (a->value.rows() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "tile_rows expects a [1, C] input");
  }
  const std::size_t c = a->value.cols();
  Tensor out({k, c});
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(a->value.data(), a->value.data() + c, out.data() + i * c);
  }
  return detail::make(std::move(out), {a}, [a, k, c](Node& self) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < c; ++j) a->grad[j] += self.grad(i, j);
    }
  });
}

/// Mean over rows: [N, C] -> [1, C].
inline Var mean_rows(const Var& a) {
  const std::size_t n = a->value.rows(), c = a->value.cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += a->value(i, j);
  }
  out.scale_(1.0 / static_cast<double>(n));
  return detail::make(std::move(out), {a}, [a, n, c](Node& self) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        a->grad(i, j) += self.grad[j] * inv;
      }
    }
  });
}

/// Row-wise softmax of a rank-2 tensor (max-subtracted for stability).
inline Var softmax_rows(const Var& a) {
  const std::size_t n = a->value.rows(), c = a->value.cols();
  Tensor out = a->value;
  for (std::size_t i = 0; i < n; ++i) {
    double m = out(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, out(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) = std::exp(out(i, j) - m);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  auto node = detail::make(std::move(out), {a}, nullptr);
  Node* np = node.get();
  if (node->requires_grad) {
    node->backward_fn = [a, np, n, c](Node& self) {
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dot += self.grad(i, j) * np->value(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) {
          a->grad(i, j) += np->value(i, j) * (self.grad(i, j) - dot);
        }
      }
    };
  }
  return node;
}

/// Normalizes each row to unit Euclidean norm.
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
  const std::size_t n = a->value.rows(), c = a->value.cols();
  Tensor out = a->value;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += out(i, j) * out(i, j);
    norms[i] = std::sqrt(s) + eps;
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= norms[i];
  }
  auto node = detail::make(std::move(out), {a}, nullptr);
  Node* np = node.get();
  if (node->requires_grad) {
    node->backward_fn = [a, np, norms, n, c](Node& self) {
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dot += self.grad(i, j) * np->value(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) {
          a->grad(i, j) +=
              (self.grad(i, j) - dot * np->value(i, j)) / norms[i];
        }
      }
    };
  }
  return node;
}

/// Gathers rows of an embedding table [V, C] by index -> [T, C].
inline Var gather_rows(const Var& table, std::vector<std::size_t> ids) {
  const std::size_t c = table->value.cols();
  Tensor out({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table->value.rows()) {
      throw Error(ErrorKind::TokenOutOfRange, "gather index out of range");
    }
    std::copy(table->value.data() + ids[i] * c,
              table->value.data() + (ids[i] + 1) * c, out.data() + i * c);
  }
  return detail::make(std::move(out), {table},
                      [table, ids = std::move(ids), c](Node& self) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                            table->grad(ids[i], j) += self.grad(i, j);
                          }
                        }
                      });
}

// ---------------------------------------------------------------------------
// Convolution ops (single image, CHW layout)
// ---------------------------------------------------------------------------

/// 2-D convolution: x [IC, H, W], w [OC, IC, k, k], bias [OC] (optional).
inline Var conv2d(const Var& x, const Var& w, const Var& bias,
                  std::size_t stride, std::size_t pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 3 || ws.size() != 4 || xs[0] != ws[1]) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: bad input/weight shapes");
  }
  const std::size_t ic = xs[0], h = xs[1], wd = xs[2];
  const std::size_t oc = ws[0], k = ws[2];
  if (h + 2 * pad < k || wd + 2 * pad < k) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: kernel larger than input");
  }
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - k) / stride + 1;

  Tensor out({oc, oh, ow});
  for (std::size_t o = 0; o < oc; ++o) {
    const double b = bias ? bias->value[o] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (std::size_t i = 0; i < ic; ++i) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              acc += x->value(i, static_cast<std::size_t>(iy),
                              static_cast<std::size_t>(ix)) *
                     w->value[((o * ic + i) * k + ky) * k + kx];
            }
          }
        }
        out(o, oy, ox) = acc;
      }
    }
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, w, bias}
                                  : std::vector<Var>{x, w};
  return detail::make(
      std::move(out), std::move(parents),
      [x, w, bias, ic, h, wd, oc, k, oh, ow, stride, pad](Node& self) {
        for (std::size_t o = 0; o < oc; ++o) {
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const double g = self.grad(o, oy, ox);
              if (g == 0.0) continue;
              if (bias && bias->requires_grad) bias->grad[o] += g;
              for (std::size_t i = 0; i < ic; ++i) {
                for (std::size_t ky = 0; ky < k; ++ky) {
                  const std::ptrdiff_t iy =
                      static_cast<std::ptrdiff_t>(oy * stride + ky) -
                      static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) -
                        static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) {
                      continue;
                    }
                    const std::size_t widx = ((o * ic + i) * k + ky) * k + kx;
                    if (x->requires_grad) {
                      x->grad(i, static_cast<std::size_t>(iy),
                              static_cast<std::size_t>(ix)) +=
                          g * w->value[widx];
                    }
                    if (w->requires_grad) {
                      w->grad[widx] +=
                          g * x->value(i, static_cast<std::size_t>(iy),
                                       static_cast<std::size_t>(ix));
                    }
                  }
                }
              }
            }
          }
        }
      });
}

/// Transposed 2-D convolution: x [IC, H, W], w [IC, OC, k, k], no padding.
/// Output is [OC, (H-1)*stride + k, (W-1)*stride + k].
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& bias,
                            std::size_t stride) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 3 || ws.size() != 4 || xs[0] != ws[0]) {
    throw Error(ErrorKind::ShapeMismatch,
                "conv_transpose2d: bad input/weight shapes");
  }
  const std::size_t ic = xs[0], h = xs[1], wd = xs[2];
  const std::size_t oc = ws[1], k = ws[2];
  const std::size_t oh = (h - 1) * stride + k;
  const std::size_t ow = (wd - 1) * stride + k;

  Tensor out({oc, oh, ow});
  if (bias) {
    for (std::size_t o = 0; o < oc; ++o) {
      for (std::size_t p = 0; p < oh * ow; ++p) {
        out[o * oh * ow + p] = bias->value[o];
      }
    }
  }
  for (std::size_t i = 0; i < ic; ++i) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xq = 0; xq < wd; ++xq) {
        const double v = x->value(i, y, xq);
        for (std::size_t o = 0; o < oc; ++o) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              out(o, y * stride + ky, xq * stride + kx) +=
                  v * w->value[((i * oc + o) * k + ky) * k + kx];
            }
          }
        }
      }
    }
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, w, bias}
                                  : std::vector<Var>{x, w};
  return detail::make(
      std::move(out), std::move(parents),
      [x, w, bias, ic, h, wd, oc, k, oh, ow, stride](Node& self) {
        if (bias && bias->requires_grad) {
          for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t p = 0; p < oh * ow; ++p) {
              bias->grad[o] += self.grad[o * oh * ow + p];
            }
          }
        }
        for (std::size_t i = 0; i < ic; ++i) {
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xq = 0; xq < wd; ++xq) {
              double gx = 0.0;
              for (std::size_t o = 0; o < oc; ++o) {
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((i * oc + o) * k + ky) * k + kx;
                    const double g =
                        self.grad(o, y * stride + ky, xq * stride + kx);
                    gx += g * w->value[widx];
                    if (w->requires_grad) {
                      w->grad[widx] += g * x->value(i, y, xq);
                    }
                  }
                }
              }
              if (x->requires_grad) x->grad(i, y, xq) += gx;
            }
          }
        }
      });
}

/// Adaptive average pooling of [C, H, W] down to [C, p, p]; H and W must be
/// multiples of p.
inline Var avg_pool_to(const Var& x, std::size_t p) {
  const auto& xs = x->value.shape();
  if (xs.size() != 3 || xs[1] % p != 0 || xs[2] % p != 0) {
    throw Error(ErrorKind::ShapeMismatch, "avg_pool_to: indivisible extent");
  }
  const std::size_t c = xs[0], by = xs[1] / p, bx = xs[2] / p;
  Tensor out({c, p, p});
  const double inv = 1.0 / static_cast<double>(by * bx);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < p; ++oy) {
      for (std::size_t ox = 0; ox < p; ++ox) {
        double acc = 0.0;
        for (std::size_t y = 0; y < by; ++y) {
          for (std::size_t xq = 0; xq < bx; ++xq) {
            acc += x->value(ch, oy * by + y, ox * bx + xq);
          }
        }
        out(ch, oy, ox) = acc * inv;
      }
    }
  }
  return detail::make(std::move(out), {x}, [x, c, p, by, bx, inv](Node& self) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t oy = 0; oy < p; ++oy) {
        for (std::size_t ox = 0; ox < p; ++ox) {
          const double g = self.grad(ch, oy, ox) * inv;
          for (std::size_t y = 0; y < by; ++y) {
            for (std::size_t xq = 0; xq < bx; ++xq) {
              x->grad(ch, oy * by + y, ox * bx + xq) += g;
            }
          }
        }
      }
    }
  });
}

/// Reinterprets the value with a new shape (no data movement).
inline Var reshape(const Var& a, Tensor::Shape shape) {
  Tensor out = a->value.reshaped(shape);
  return detail::make(std::move(out), {a}, [a](Node& self) {
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      a->grad[i] += self.grad[i];
    }
  });
}

}  // namespace medvqa::ag

#endif  // MEDVQA_CORE_AUTOGRAD_HPP_
