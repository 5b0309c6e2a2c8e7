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

// Tape-based reverse-mode differentiation over row-major double matrices.
//
// A Graph records every operation applied to its Vars. Leaves are either
// constants, differentiable inputs, or Params owned by a ParamStore; calling
// Graph::backward accumulates d(loss)/d(param) into Param::grad. Graphs are
// single-use: build one per forward pass.

#ifndef MSMA_AUTODIFF_HPP_
#define MSMA_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace msma {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Deterministic random source. Normal deviates use Box-Muller on raw
/// mt19937_64 output so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(engine_() % n);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns named parameters. Addresses of stored Params are stable for the
/// lifetime of the store, so layers keep raw pointers into it.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Param& add(const std::string& name, Matrix init);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  /// All parameters, ordered by name.
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::vector<Param*> with_prefix(const std::string& prefix);
  std::vector<const Param*> with_prefix(const std::string& prefix) const;

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Param> params_;
};

/// Stable 64-bit FNV-1a hash over parameter names, shapes and raw bytes.
std::uint64_t hash_params(std::span<const Param* const> params);

class Graph;

/// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return graph != nullptr; }
};

class Graph {
 public:
  /// Receives d(loss)/d(output) and the output value.
  using Backward =
      std::function<void(Graph&, const Matrix& grad_out, const Matrix& out)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Non-differentiable leaf.
  Var constant(Matrix value);
  /// Differentiable leaf whose gradient can be read back with grad().
  Var input(Matrix value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Param& p);
  /// Parameter used as a constant: no gradient flows into it.
  Var frozen(const Param& p);
  /// Makes later param(p) calls behave like frozen(p).
  void freeze(const Param& p) { frozen_.insert(&p); }

  /// Records an operation result. `parents` determine whether the node
  /// needs a gradient; `backward` receives d(loss)/d(this node).
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of the last backward() w.r.t. a node (zero matrix if none).
  Matrix grad(Var v) const;

  void accumulate(Var v, const Matrix& g);
  void accumulate(Var v, Matrix&& g);

  /// Back-propagates from a 1x1 node, seeding its gradient with `seed`, and
  /// adds the resulting parameter gradients into Param::grad.
  void backward(Var loss, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Param* param = nullptr;
    bool needs_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
  std::unordered_set<const Param*> frozen_;
};

// ---------------------------------------------------------------------------
// Operations. All inputs must belong to the same Graph.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a (n x c) + r (1 x c) broadcast over rows.
Var add_row(Var a, Var r);
/// Repeats a 1 x c row n times.
Var repeat_rows(Var r, Eigen::Index n);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softsign(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var transpose(Var a);

Var sum(Var a);
Var mean(Var a);
/// Column means, 1 x c.
Var mean_rows(Var a);

/// Row-wise layer normalization with per-column gain and bias (1 x c).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Divides each row by its L2 norm.
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var softmax_rows(Var a);

/// Mean over rows of -log(max(p[r, target[r]], floor)). The clamp has zero
/// gradient. Sets *clamped when any target probability was below floor.
Var nll_of_probs(Var probs, std::span<const int> targets,
                 bool* clamped = nullptr, double floor = 1e-12);

/// Identity forward, gradient multiplied by -lambda backward.
Var grl(Var a, double lambda);

/// Inverted dropout. Identity when p == 0 or rng is null.
Var dropout(Var a, double p, Rng* rng);

/// Unfolds a (T x C) sequence into (T x K*C) windows: row t holds frames
/// t - pad_left .. t - pad_left + K - 1. Out-of-range frames are zero, or
/// the nearest edge frame when `replicate`.
Var im2col(Var a, int kernel, int pad_left, bool replicate = false);

struct Segment {
  int start = 0;
  int end = 0;
};
/// Row p = mean of a[start_p, end_p).
Var segment_mean(Var a, std::span<const Segment> segments);

Var gather_rows(Var table, std::span<const int> indices);

/// Fused LSTM cell on gate pre-activations z = [i f g o] (1 x 4H) and the
/// previous cell state (1 x H). Returns [h c] as a 1 x 2H row.
Var lstm_cell(Var z, Var c_prev);
/// Fused GRU cell. xz = x W_x + b_x and hz = h W_h + b_h, both 1 x 3H with
/// gate order [r u n]; returns the new hidden state (1 x H).
Var gru_cell(Var xz, Var hz, Var h_prev);

/// Mean over all elements of (a - b)^2.
Var mse(Var a, Var b);
/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
Var bce_with_logits(Var logits, const Matrix& targets);

}  // namespace msma

#endif  // MSMA_AUTODIFF_HPP_
