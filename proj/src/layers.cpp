// Copyright 2026 The MSMA-TTS Authors
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

#include "msma/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace msma {

Matrix xavier(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out,
               Rng& rng, bool bias)
    : in_(in), out_(out) {
  weight_ = &store.add(name + ".weight", xavier(in, out, rng));
  if (bias) bias_ = &store.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = matmul(x, g.param(*weight_));
  if (bias_ != nullptr) y = add_row(y, g.param(*bias_));
  return y;
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, int in, int out,
               int kernel, Rng& rng, Padding padding)
    : kernel_(kernel), padding_(padding) {
  if (kernel < 1) throw std::invalid_argument("Conv1d: kernel must be >= 1");
  weight_ = &store.add(name + ".weight", xavier(kernel * in, out, rng));
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, out));
}

Var Conv1d::operator()(Graph& g, Var x) const {
  Var cols = kernel_ == 1 ? x
                          : im2col(x, kernel_, (kernel_ - 1) / 2,
                                   padding_ == Padding::kReplicate);
  return add_row(matmul(cols, g.param(*weight_)), g.param(*bias_));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
  gain_ = &store.add(name + ".gain", Matrix::Ones(1, dim));
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return layer_norm(x, g.param(*gain_), g.param(*bias_));
}

ConvBlock::ConvBlock(ParamStore& store, const std::string& name, int in,
                     int out, int kernel, double dropout, Rng& rng,
                     Padding padding)
    : conv_(store, name + ".conv", in, out, kernel, rng, padding),
      norm_(store, name + ".norm", out),
      dropout_(dropout) {}

Var ConvBlock::operator()(Graph& g, Var x, Rng* rng) const {
  return dropout(norm_(g, relu(conv_(g, x))), dropout_, rng);
}

Embedding::Embedding(ParamStore& store, const std::string& name, int vocab,
                     int dim, Rng& rng)
    : vocab_(vocab) {
  Matrix init(vocab, dim);
  const double sd = std::sqrt(1.0 / dim);
  for (Eigen::Index i = 0; i < init.size(); ++i)
    init.data()[i] = sd * rng.normal();
  table_ = &store.add(name + ".table", std::move(init));
}

Var Embedding::operator()(Graph& g, std::span<const int> ids) const {
  return gather_rows(g.param(*table_), ids);
}

Lstm::Lstm(ParamStore& store, const std::string& name, int in, int hidden,
           Rng& rng)
    : hidden_(hidden) {
  w_x_ = &store.add(name + ".w_x", xavier(in, 4 * hidden, rng));
  w_h_ = &store.add(name + ".w_h", xavier(hidden, 4 * hidden, rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();  // forget gate
  bias_ = &store.add(name + ".bias", std::move(b));
}

LstmState Lstm::initial(Graph& g) const {
  return {g.constant(Matrix::Zero(1, hidden_)),
          g.constant(Matrix::Zero(1, hidden_))};
}

LstmState Lstm::step(Graph& g, Var x, const LstmState& s) const {
  Var z = add(add_row(matmul(x, g.param(*w_x_)), g.param(*bias_)),
              matmul(s.h, g.param(*w_h_)));
  Var hc = lstm_cell(z, s.c);
  return {slice_cols(hc, 0, hidden_), slice_cols(hc, hidden_, hidden_)};
}

Var Lstm::sequence(Graph& g, Var x, bool reverse,
                   LstmState* final_state) const {
  const Eigen::Index t = x.rows();
  if (t == 0) throw std::invalid_argument("Lstm: empty sequence");
  Var xz = add_row(matmul(x, g.param(*w_x_)), g.param(*bias_));
  Var w_h = g.param(*w_h_);
  LstmState s = initial(g);
  std::vector<Var> outs(static_cast<std::size_t>(t));
  for (Eigen::Index k = 0; k < t; ++k) {
    const Eigen::Index r = reverse ? t - 1 - k : k;
    Var z = add(slice_rows(xz, r, 1), matmul(s.h, w_h));
    Var hc = lstm_cell(z, s.c);
    s = {slice_cols(hc, 0, hidden_), slice_cols(hc, hidden_, hidden_)};
    outs[static_cast<std::size_t>(r)] = s.h;
  }
  if (final_state != nullptr) *final_state = s;
  return concat_rows(outs);
}

Gru::Gru(ParamStore& store, const std::string& name, int in, int hidden,
         Rng& rng)
    : hidden_(hidden) {
  w_x_ = &store.add(name + ".w_x", xavier(in, 3 * hidden, rng));
  w_h_ = &store.add(name + ".w_h", xavier(hidden, 3 * hidden, rng));
  b_x_ = &store.add(name + ".b_x", Matrix::Zero(1, 3 * hidden));
  b_h_ = &store.add(name + ".b_h", Matrix::Zero(1, 3 * hidden));
}

Var Gru::sequence(Graph& g, Var x) const {
  const Eigen::Index t = x.rows();
  if (t == 0) throw std::invalid_argument("Gru: empty sequence");
  Var xz = add_row(matmul(x, g.param(*w_x_)), g.param(*b_x_));
  Var w_h = g.param(*w_h_);
  Var b_h = g.param(*b_h_);
  Var h = g.constant(Matrix::Zero(1, hidden_));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(t));
  for (Eigen::Index r = 0; r < t; ++r) {
    h = gru_cell(slice_rows(xz, r, 1), add(matmul(h, w_h), b_h), h);
    outs.push_back(h);
  }
  return concat_rows(outs);
}

}  // namespace msma
