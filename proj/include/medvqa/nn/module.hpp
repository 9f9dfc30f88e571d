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

#ifndef MEDVQA_NN_MODULE_HPP_
#define MEDVQA_NN_MODULE_HPP_

#include <string>
#include <utility>
#include <vector>

#include "medvqa/core/autograd.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/core/tensor.hpp"

namespace medvqa::nn {

/// Ordered registry of named trainable parameters. Registration order is the
/// serialization order, so checkpoints are stable across runs.
class ParamStore {
 public:
  ag::Var add(std::string name, Tensor init) {
    params_.emplace_back(std::move(name), ag::leaf(std::move(init), true));
    return params_.back().second;
  }

  const std::vector<std::pair<std::string, ag::Var>>& params() const {
    return params_;
  }

  void zero_grad() {
    for (auto& [name, var] : params_) {
      if (var->grad.numel() != 0) var->grad.fill(0.0);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, var] : params_) n += var->value.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, ag::Var>> params_;
};

namespace init {

/// Uniform fan-in initialization as used for dense and recurrent layers.
inline Tensor dense(Rng& rng, std::size_t fan_in, Tensor::Shape shape) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  rng.fill_uniform(t, -bound, bound);
  return t;
}

inline Tensor gaussian(Rng& rng, double std, Tensor::Shape shape) {
  Tensor t(std::move(shape));
  rng.fill_gaussian(t, 0.0, std);
  return t;
}

}  // namespace init

/// y = x · Wᵀ + b, for x of shape [N, in].
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::size_t in,
         std::size_t out, Rng& rng, bool bias = true) {
    weight_ = store.add(prefix + ".weight", init::dense(rng, in, {out, in}));
    if (bias) {
      bias_ = store.add(prefix + ".bias", init::dense(rng, in, {1, out}));
    }
  }

  ag::Var forward(const ag::Var& x) const {
    ag::Var y = ag::matmul_nt(x, weight_);
    return bias_ ? ag::add_bias(y, bias_) : y;
  }

  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  ag::Var weight_;
  ag::Var bias_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& prefix, std::size_t in_ch,
         std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t pad, Rng& rng)
      : stride_(stride), pad_(pad) {
    const std::size_t fan_in = in_ch * kernel * kernel;
    weight_ = store.add(prefix + ".weight",
                        init::dense(rng, fan_in, {out_ch, in_ch, kernel, kernel}));
    bias_ = store.add(prefix + ".bias", init::dense(rng, fan_in, {out_ch}));
  }

  ag::Var forward(const ag::Var& x) const {
    return ag::conv2d(x, weight_, bias_, stride_, pad_);
  }

 private:
  ag::Var weight_;
  ag::Var bias_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& prefix,
                  std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                  std::size_t stride, Rng& rng)
      : stride_(stride) {
    const std::size_t fan_in = in_ch * kernel * kernel;
    weight_ = store.add(prefix + ".weight",
                        init::dense(rng, fan_in, {in_ch, out_ch, kernel, kernel}));
    bias_ = store.add(prefix + ".bias", init::dense(rng, fan_in, {out_ch}));
  }

  ag::Var forward(const ag::Var& x) const {
    return ag::conv_transpose2d(x, weight_, bias_, stride_);
  }

 private:
  ag::Var weight_;
  ag::Var bias_;
  std::size_t stride_ = 1;
};

/// Token embedding table [V, C]; lookup by id list.
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& prefix, std::size_t vocab,
            std::size_t dim, Rng& rng) {
    table_ = store.add(prefix + ".weight",
                       init::gaussian(rng, 0.02, {vocab, dim}));
  }

  ag::Var forward(const std::vector<std::size_t>& ids) const {
    return ag::gather_rows(table_, ids);
  }

  std::size_t vocab_size() const { return table_->value.rows(); }

 private:
  ag::Var table_;
};

/// Single LSTM cell; gate order in the stacked weight is (i, f, g, o).
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& prefix, std::size_t input,
           std::size_t hidden, Rng& rng)
      : hidden_(hidden) {
    w_ih_ = store.add(prefix + ".w_ih",
                      init::dense(rng, input, {4 * hidden, input}));
    w_hh_ = store.add(prefix + ".w_hh",
                      init::dense(rng, hidden, {4 * hidden, hidden}));
    bias_ = store.add(prefix + ".bias",
                      init::dense(rng, hidden, {1, 4 * hidden}));
  }

  struct State {
    ag::Var h;  // [1, H]
    ag::Var c;  // [1, H]
  };

  State initial_state() const {
    return {ag::constant(Tensor({1, hidden_})),
            ag::constant(Tensor({1, hidden_}))};
  }

  State step(const ag::Var& x, const State& prev) const {
    ag::Var gates = ag::add_bias(
        ag::add(ag::matmul_nt(x, w_ih_), ag::matmul_nt(prev.h, w_hh_)), bias_);
    ag::Var i = ag::sigmoid(ag::slice_cols(gates, 0, hidden_));
    ag::Var f = ag::sigmoid(ag::slice_cols(gates, hidden_, hidden_));
    ag::Var g = ag::tanh(ag::slice_cols(gates, 2 * hidden_, hidden_));
    ag::Var o = ag::sigmoid(ag::slice_cols(gates, 3 * hidden_, hidden_));
    ag::Var c = ag::add(ag::mul(f, prev.c), ag::mul(i, g));
    ag::Var h = ag::mul(o, ag::tanh(c));
    return {h, c};
  }

  std::size_t hidden_size() const { return hidden_; }

 private:
  ag::Var w_ih_;
  ag::Var w_hh_;
  ag::Var bias_;
  std::size_t hidden_ = 0;
};

}  // namespace medvqa::nn

#endif  // MEDVQA_NN_MODULE_HPP_
