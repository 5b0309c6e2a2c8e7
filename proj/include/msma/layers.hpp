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

// Parameterized building blocks. Each layer registers its weights in a
// ParamStore under a name prefix and is applied to Vars of a Graph. A null
// Rng* means evaluation mode (dropout disabled).

#ifndef MSMA_LAYERS_HPP_
#define MSMA_LAYERS_HPP_

#include <string>
#include <vector>

#include "msma/autodiff.hpp"

namespace msma {

/// Xavier-uniform matrix.
Matrix xavier(int rows, int cols, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out,
         Rng& rng, bool bias = true);

  Var operator()(Graph& g, Var x) const;
  Param& weight() const { return *weight_; }
  Param* bias() const { return bias_; }
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Param* weight_ = nullptr;
  Param* bias_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

enum class Padding { kZero, kReplicate };

/// 1-D convolution over time with "same" padding. Input T x in.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, int in, int out,
         int kernel, Rng& rng, Padding padding = Padding::kZero);

  Var operator()(Graph& g, Var x) const;
  int kernel() const { return kernel_; }

 private:
  Param* weight_ = nullptr;  // (kernel * in) x out
  Param* bias_ = nullptr;
  int kernel_ = 1;
  Padding padding_ = Padding::kZero;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);

  Var operator()(Graph& g, Var x) const;

 private:
  Param* gain_ = nullptr;
  Param* bias_ = nullptr;
};

/// Conv -> ReLU -> LayerNorm -> Dropout, the block shared by the accent
/// encoders and the local accent predictor.
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(ParamStore& store, const std::string& name, int in, int out,
            int kernel, double dropout, Rng& rng,
            Padding padding = Padding::kZero);

  Var operator()(Graph& g, Var x, Rng* rng) const;

 private:
  Conv1d conv_;
  LayerNorm norm_;
  double dropout_ = 0.0;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, int vocab, int dim,
            Rng& rng);

  Var operator()(Graph& g, std::span<const int> ids) const;
  int vocab() const { return vocab_; }

 private:
  Param* table_ = nullptr;
  int vocab_ = 0;
};

struct LstmState {
  Var h;
  Var c;
};

class Lstm {
 public:
  Lstm() = default;
  Lstm(ParamStore& store, const std::string& name, int in, int hidden,
       Rng& rng);

  LstmState initial(Graph& g) const;
  /// One step on a 1 x in input.
  LstmState step(Graph& g, Var x, const LstmState& s) const;
  /// Runs over all rows of x (T x in); returns T x hidden.
  Var sequence(Graph& g, Var x, bool reverse = false,
               LstmState* final_state = nullptr) const;
  int hidden() const { return hidden_; }

 private:
  Param* w_x_ = nullptr;  // in x 4H
  Param* w_h_ = nullptr;  // H x 4H
  Param* bias_ = nullptr;
  int hidden_ = 0;
};

class Gru {
 public:
  Gru() = default;
  Gru(ParamStore& store, const std::string& name, int in, int hidden,
      Rng& rng);

  Var sequence(Graph& g, Var x) const;
  int hidden() const { return hidden_; }

 private:
  Param* w_x_ = nullptr;  // in x 3H
  Param* w_h_ = nullptr;  // H x 3H
  Param* b_x_ = nullptr;
  Param* b_h_ = nullptr;
  int hidden_ = 0;
};

}  // namespace msma

#endif  // MSMA_LAYERS_HPP_
