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

#include "msma/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace msma {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

// ---------------------------------------------------------------------------
// ParamStore

Param& ParamStore::add(const std::string& name, Matrix init) {
  if (params_.count(name) != 0)
    throw std::invalid_argument("duplicate parameter: " + name);
  Param& p = params_[name];
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return p;
}

Param& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<Param*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Param*> out;
  for (auto it = params_.lower_bound(prefix);
       it != params_.end() && it->first.starts_with(prefix); ++it)
    out.push_back(&it->second);
  return out;
}

std::vector<const Param*> ParamStore::with_prefix(
    const std::string& prefix) const {
  std::vector<const Param*> out;
  for (auto it = params_.lower_bound(prefix);
       it != params_.end() && it->first.starts_with(prefix); ++it)
    out.push_back(&it->second);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::uint64_t hash_params(std::span<const Param* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Param* p : params) {
    mix(p->name.data(), p->name.size());
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    mix(shape, sizeof(shape));
    mix(p->value.data(), sizeof(double) * p->value.size());
  }
  return h;
}

// ---------------------------------------------------------------------------
// Graph

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  if (frozen_.count(&p) != 0) return frozen(p);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Graph::frozen(const Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Var v = constant(p.value);
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Graph::push(Matrix value, std::initializer_list<Var> parents,
                Backward backward) {
  return push(std::move(value),
              std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Graph::push(Matrix value, std::span<const Var> parents,
                Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.graph != this)
        throw std::logic_error("operands belong to different graphs");
      if (nodes_[p.id].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Graph::accumulate(Var v, Matrix&& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = std::move(g);
  else
    n.grad += g;
}

void Graph::backward(Var loss, double seed) {
  if (!grad_enabled_) throw std::logic_error("backward on a no-grad graph");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward requires a scalar loss");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id].grad = Matrix::Constant(1, 1, seed);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      // Callbacks only accumulate into earlier nodes; nodes_ never grows here.
      n.backward(*this, n.grad, n.value);
    }
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return a.graph->push(std::move(out), {a, b},
                       [a, b](Graph& g, const Matrix& go, const Matrix&) {
                         if (g.needs_grad(a))
                           g.accumulate(a, go * g.value(b).transpose());
                         if (g.needs_grad(b))
                           g.accumulate(b, g.value(a).transpose() * go);
                       });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  return a.graph->push(std::move(out), {a, b},
                       [a, b](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, go);
                         g.accumulate(b, go);
                       });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  return a.graph->push(std::move(out), {a, b},
                       [a, b](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, go);
                         if (g.needs_grad(b)) g.accumulate(b, Matrix(-go));
                       });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.graph->push(
      std::move(out), {a, b},
      [a, b](Graph& g, const Matrix& go, const Matrix&) {
        if (g.needs_grad(a)) g.accumulate(a, go.cwiseProduct(g.value(b)));
        if (g.needs_grad(b)) g.accumulate(b, go.cwiseProduct(g.value(a)));
      });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.graph->push(std::move(out), {a},
                       [a, s](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, Matrix(go * s));
                       });
}

Var add_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw std::invalid_argument("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + r.value().row(0);
  return a.graph->push(std::move(out), {a, r},
                       [a, r](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, go);
                         if (g.needs_grad(r))
                           g.accumulate(r, Matrix(go.colwise().sum()));
                       });
}

Var repeat_rows(Var r, Eigen::Index n) {
  if (r.rows() != 1) throw std::invalid_argument("repeat_rows: not a row");
  Matrix out = r.value().replicate(n, 1);
  return r.graph->push(std::move(out), {r},
                       [r](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(r, Matrix(go.colwise().sum()));
                       });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.graph->push(std::move(out), {a},
                       [a](Graph& g, const Matrix& go, const Matrix& y) {
                         g.accumulate(a, Matrix(go.array() *
                                                (1.0 - y.array().square())));
                       });
}

Var sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.graph->push(std::move(out), {a},
                       [a](Graph& g, const Matrix& go, const Matrix& y) {
                         g.accumulate(a, Matrix(go.array() * y.array() *
                                                (1.0 - y.array())));
                       });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.graph->push(
      std::move(out), {a}, [a](Graph& g, const Matrix& go, const Matrix&) {
        g.accumulate(a, Matrix((g.value(a).array() > 0.0)
                                   .select(go.array(), 0.0)));
      });
}

Var softsign(Var a) {
  Matrix out = (a.value().array() / (1.0 + a.value().array().abs())).matrix();
  return a.graph->push(
      std::move(out), {a}, [a](Graph& g, const Matrix& go, const Matrix&) {
        const auto d = 1.0 + g.value(a).array().abs();
        g.accumulate(a, Matrix(go.array() / d.square()));
      });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts[0].graph->push(
      std::move(out), parts,
      [saved](Graph& g, const Matrix& go, const Matrix&) {
        Eigen::Index off = 0;
        for (const Var& p : saved) {
          const Eigen::Index c = g.value(p).cols();
          if (g.needs_grad(p)) g.accumulate(p, Matrix(go.middleCols(off, c)));
          off += c;
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols)
      throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts[0].graph->push(
      std::move(out), parts,
      [saved](Graph& g, const Matrix& go, const Matrix&) {
        Eigen::Index off = 0;
        for (const Var& p : saved) {
          const Eigen::Index r = g.value(p).rows();
          if (g.needs_grad(p)) g.accumulate(p, Matrix(go.middleRows(off, r)));
          off += r;
        }
      });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::out_of_range("slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(start, count);
  return a.graph->push(
      std::move(out), {a},
      [a, start, count](Graph& g, const Matrix& go, const Matrix&) {
        Matrix full = Matrix::Zero(g.value(a).rows(), g.value(a).cols());
        full.middleCols(start, count) = go;
        g.accumulate(a, std::move(full));
      });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::out_of_range("slice_rows: range out of bounds");
  Matrix out = a.value().middleRows(start, count);
  return a.graph->push(
      std::move(out), {a},
      [a, start, count](Graph& g, const Matrix& go, const Matrix&) {
        Matrix full = Matrix::Zero(g.value(a).rows(), g.value(a).cols());
        full.middleRows(start, count) = go;
        g.accumulate(a, std::move(full));
      });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.graph->push(std::move(out), {a},
                       [a](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, Matrix(go.transpose()));
                       });
}

Var sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.graph->push(
      std::move(out), {a}, [a](Graph& g, const Matrix& go, const Matrix&) {
        g.accumulate(a, Matrix::Constant(g.value(a).rows(), g.value(a).cols(),
                                         go(0, 0)));
      });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out = Matrix::Constant(1, 1, a.value().sum() / n);
  return a.graph->push(
      std::move(out), {a}, [a, n](Graph& g, const Matrix& go, const Matrix&) {
        g.accumulate(a, Matrix::Constant(g.value(a).rows(), g.value(a).cols(),
                                         go(0, 0) / n));
      });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return a.graph->push(
      std::move(out), {a}, [a, n](Graph& g, const Matrix& go, const Matrix&) {
        g.accumulate(a, Matrix(go.replicate(g.value(a).rows(), 1) / n));
      });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 ||
      bias.cols() != c)
    throw std::invalid_argument("layer_norm: parameter shape mismatch");
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array())
                   .rowwise() +
               bias.value().row(0).array();
  return a.graph->push(
      std::move(out), {a, gain, bias},
      [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, const Matrix& go, const Matrix&) {
        if (g.needs_grad(gain))
          g.accumulate(gain, Matrix(go.cwiseProduct(xhat).colwise().sum()));
        if (g.needs_grad(bias)) g.accumulate(bias, Matrix(go.colwise().sum()));
        if (g.needs_grad(a)) {
          const Matrix dxhat =
              go.array().rowwise() * g.value(gain).row(0).array();
          const double c = static_cast<double>(xhat.cols());
          Matrix dx(xhat.rows(), xhat.cols());
          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            const double m1 = dxhat.row(r).sum();
            const double m2 = dxhat.row(r).dot(xhat.row(r));
            dx.row(r) = (inv_std(r) / c) *
                        (c * dxhat.row(r).array() - m1 -
                         xhat.row(r).array() * m2);
          }
          g.accumulate(a, std::move(dx));
        }
      });
}

Var l2_normalize_rows(Var a, double eps) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  norms = norms.cwiseMax(eps);
  Matrix out = x.array().colwise() / norms.array();
  return a.graph->push(
      std::move(out), {a},
      [a, norms = std::move(norms)](Graph& g, const Matrix& go,
                                    const Matrix& y) {
        // d/dx (x/|x|) = (I - y y^T) / |x|
        Matrix dx(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          const double proj = go.row(r).dot(y.row(r));
          dx.row(r) = (go.row(r) - proj * y.row(r)) / norms(r);
        }
        g.accumulate(a, std::move(dx));
      });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.graph->push(
      std::move(out), {a}, [a](Graph& g, const Matrix& go, const Matrix& y) {
        Matrix dx(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          const double dot = go.row(r).dot(y.row(r));
          dx.row(r) = y.row(r).array() * (go.row(r).array() - dot);
        }
        g.accumulate(a, std::move(dx));
      });
}

Var nll_of_probs(Var probs, std::span<const int> targets, bool* clamped,
                 double floor) {
  const Matrix& p = probs.value();
  if (static_cast<Eigen::Index>(targets.size()) != p.rows())
    throw std::invalid_argument("nll_of_probs: target count mismatch");
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<bool> was_clamped(tgt.size(), false);
  double total = 0.0;
  bool any = false;
  for (std::size_t r = 0; r < tgt.size(); ++r) {
    if (tgt[r] < 0 || tgt[r] >= p.cols())
      throw std::out_of_range("nll_of_probs: target index out of range");
    double v = p(static_cast<Eigen::Index>(r), tgt[r]);
    if (v < floor) {
      v = floor;
      was_clamped[r] = true;
      any = true;
    }
    total -= std::log(v);
  }
  if (clamped != nullptr) *clamped = any;
  const double n = static_cast<double>(tgt.size());
  Matrix out = Matrix::Constant(1, 1, total / n);
  return probs.graph->push(
      std::move(out), {probs},
      [probs, tgt = std::move(tgt), was_clamped = std::move(was_clamped), n](
          Graph& g, const Matrix& go, const Matrix&) {
        const Matrix& p = g.value(probs);
        Matrix dp = Matrix::Zero(p.rows(), p.cols());
        for (std::size_t r = 0; r < tgt.size(); ++r) {
          if (was_clamped[r]) continue;
          const auto row = static_cast<Eigen::Index>(r);
          dp(row, tgt[r]) = -go(0, 0) / (n * p(row, tgt[r]));
        }
        g.accumulate(probs, std::move(dp));
      });
}

Var grl(Var a, double lambda) {
  Matrix out = a.value();
  return a.graph->push(std::move(out), {a},
                       [a, lambda](Graph& g, const Matrix& go, const Matrix&) {
                         g.accumulate(a, Matrix(go * (-lambda)));
                       });
}

Var dropout(Var a, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const double keep = 1.0 - p;
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return a.graph->push(
      std::move(out), {a},
      [a, mask = std::move(mask)](Graph& g, const Matrix& go, const Matrix&) {
        g.accumulate(a, go.cwiseProduct(mask));
      });
}

Var im2col(Var a, int kernel, int pad_left, bool replicate) {
  const Matrix& x = a.value();
  const Eigen::Index t = x.rows(), c = x.cols();
  auto source = [replicate, pad_left](Eigen::Index r, int k, Eigen::Index n) {
    Eigen::Index src = r - pad_left + k;
    if (replicate) src = std::clamp<Eigen::Index>(src, 0, n - 1);
    return src;
  };
  Matrix out = Matrix::Zero(t, kernel * c);
  for (Eigen::Index r = 0; r < t; ++r) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = source(r, k, t);
      if (src < 0 || src >= t) continue;
      out.block(r, k * c, 1, c) = x.row(src);
    }
  }
  return a.graph->push(
      std::move(out), {a},
      [a, kernel, source](Graph& g, const Matrix& go, const Matrix&) {
        const Eigen::Index t = g.value(a).rows(), c = g.value(a).cols();
        Matrix dx = Matrix::Zero(t, c);
        for (Eigen::Index r = 0; r < t; ++r) {
          for (int k = 0; k < kernel; ++k) {
            const Eigen::Index src = source(r, k, t);
            if (src < 0 || src >= t) continue;
            dx.row(src) += go.block(r, k * c, 1, c);
          }
        }
        g.accumulate(a, std::move(dx));
      });
}

Var segment_mean(Var a, std::span<const Segment> segments) {
  const Matrix& x = a.value();
  std::vector<Segment> segs(segments.begin(), segments.end());
  Matrix out(static_cast<Eigen::Index>(segs.size()), x.cols());
  for (std::size_t p = 0; p < segs.size(); ++p) {
    const Segment s = segs[p];
    if (s.start >= s.end)
      throw std::invalid_argument("segment_mean: empty segment at index " +
                                  std::to_string(p));
    if (s.start < 0 || s.end > x.rows())
      throw std::out_of_range("segment_mean: segment exceeds frame count");
    out.row(static_cast<Eigen::Index>(p)) =
        x.middleRows(s.start, s.end - s.start).colwise().mean();
  }
  return a.graph->push(
      std::move(out), {a},
      [a, segs = std::move(segs)](Graph& g, const Matrix& go, const Matrix&) {
        Matrix dx = Matrix::Zero(g.value(a).rows(), g.value(a).cols());
        for (std::size_t p = 0; p < segs.size(); ++p) {
          const Segment s = segs[p];
          const double inv = 1.0 / static_cast<double>(s.end - s.start);
          for (int r = s.start; r < s.end; ++r)
            dx.row(r) += go.row(static_cast<Eigen::Index>(p)) * inv;
        }
        g.accumulate(a, std::move(dx));
      });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& w = table.value();
  std::vector<int> idx(indices.begin(), indices.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), w.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= w.rows())
      throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = w.row(idx[i]);
  }
  return table.graph->push(
      std::move(out), {table},
      [table, idx = std::move(idx)](Graph& g, const Matrix& go,
                                    const Matrix&) {
        Matrix dw = Matrix::Zero(g.value(table).rows(), g.value(table).cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
          dw.row(idx[i]) += go.row(static_cast<Eigen::Index>(i));
        g.accumulate(table, std::move(dw));
      });
}

Var lstm_cell(Var z, Var c_prev) {
  const Eigen::Index h = c_prev.cols();
  if (z.rows() != 1 || c_prev.rows() != 1 || z.cols() != 4 * h)
    throw std::invalid_argument("lstm_cell: shape mismatch");
  const auto zr = z.value().row(0).array();
  auto sig = [](const auto& x) -> Eigen::ArrayXXd {
    return 1.0 / (1.0 + (-x).exp());
  };
  Eigen::ArrayXXd gates(1, 4 * h);
  gates.block(0, 0, 1, h) = sig(zr.segment(0, h));
  gates.block(0, h, 1, h) = sig(zr.segment(h, h));
  gates.block(0, 2 * h, 1, h) = zr.segment(2 * h, h).tanh();
  gates.block(0, 3 * h, 1, h) = sig(zr.segment(3 * h, h));
  Matrix out(1, 2 * h);
  const auto i = gates.block(0, 0, 1, h), f = gates.block(0, h, 1, h),
             gg = gates.block(0, 2 * h, 1, h), o = gates.block(0, 3 * h, 1, h);
  const Eigen::ArrayXXd c = f * c_prev.value().array() + i * gg;
  const Eigen::ArrayXXd tc = c.tanh();
  out.leftCols(h) = (o * tc).matrix();
  out.rightCols(h) = c.matrix();
  return z.graph->push(
      std::move(out), {z, c_prev},
      [z, c_prev, h, gates = std::move(gates), tc](
          Graph& g, const Matrix& go, const Matrix&) {
        const auto i = gates.block(0, 0, 1, h), f = gates.block(0, h, 1, h),
                   gg = gates.block(0, 2 * h, 1, h),
                   o = gates.block(0, 3 * h, 1, h);
        const Eigen::ArrayXXd dh = go.leftCols(h).array();
        const Eigen::ArrayXXd dc =
            go.rightCols(h).array() + dh * o * (1.0 - tc.square());
        if (g.needs_grad(z)) {
          Matrix dz(1, 4 * h);
          const auto cp = g.value(c_prev).array();
          dz.leftCols(h) = (dc * gg * i * (1.0 - i)).matrix();
          dz.middleCols(h, h) = (dc * cp * f * (1.0 - f)).matrix();
          dz.middleCols(2 * h, h) = (dc * i * (1.0 - gg.square())).matrix();
          dz.rightCols(h) = (dh * tc * o * (1.0 - o)).matrix();
          g.accumulate(z, std::move(dz));
        }
        if (g.needs_grad(c_prev)) g.accumulate(c_prev, Matrix((dc * f).matrix()));
      });
}

Var gru_cell(Var xz, Var hz, Var h_prev) {
  const Eigen::Index h = h_prev.cols();
  if (xz.rows() != 1 || hz.rows() != 1 || h_prev.rows() != 1 ||
      xz.cols() != 3 * h || hz.cols() != 3 * h)
    throw std::invalid_argument("gru_cell: shape mismatch");
  using Row = Eigen::Array<double, 1, Eigen::Dynamic>;
  const Row xa = xz.value().row(0).array();
  const Row ha = hz.value().row(0).array();
  const Row r = 1.0 / (1.0 + (-(xa.segment(0, h) + ha.segment(0, h))).exp());
  const Row u = 1.0 / (1.0 + (-(xa.segment(h, h) + ha.segment(h, h))).exp());
  const Row hn = ha.segment(2 * h, h);
  const Row n = (xa.segment(2 * h, h) + r * hn).tanh();
  const Row hp = h_prev.value().row(0).array();
  Matrix out(1, h);
  out.row(0) = ((1.0 - u) * n + u * hp).matrix();
  return xz.graph->push(
      std::move(out), {xz, hz, h_prev},
      [xz, hz, h_prev, h, r, u, n, hn, hp](Graph& g, const Matrix& go,
                                           const Matrix&) {
        const Row dout = go.row(0).array();
        const Row dn = dout * (1.0 - u) * (1.0 - n.square());
        const Row du = dout * (hp - n) * u * (1.0 - u);
        const Row dr = dn * hn * r * (1.0 - r);
        if (g.needs_grad(xz)) {
          Matrix d(1, 3 * h);
          d.row(0) << dr.matrix(), du.matrix(), dn.matrix();
          g.accumulate(xz, std::move(d));
        }
        if (g.needs_grad(hz)) {
          Matrix d(1, 3 * h);
          d.row(0) << dr.matrix(), du.matrix(), (dn * r).matrix();
          g.accumulate(hz, std::move(d));
        }
        if (g.needs_grad(h_prev))
          g.accumulate(h_prev, Matrix((dout * u).matrix()));
      });
}

Var mse(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mse");
  const double n = static_cast<double>(a.value().size());
  Matrix diff = a.value() - b.value();
  Matrix out = Matrix::Constant(1, 1, diff.squaredNorm() / n);
  return a.graph->push(
      std::move(out), {a, b},
      [a, b, n, diff = std::move(diff)](Graph& g, const Matrix& go,
                                        const Matrix&) {
        const Matrix d = diff * (2.0 * go(0, 0) / n);
        if (g.needs_grad(a)) g.accumulate(a, d);
        if (g.needs_grad(b)) g.accumulate(b, Matrix(-d));
      });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "bce_with_logits");
  const Matrix& z = logits.value();
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double x = z.data()[i], y = targets.data()[i];
    // max(x,0) - x*y + log(1 + exp(-|x|))
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Matrix out = Matrix::Constant(1, 1, total / n);
  return logits.graph->push(
      std::move(out), {logits},
      [logits, targets, n](Graph& g, const Matrix& go, const Matrix&) {
        const Matrix& z = g.value(logits);
        const Matrix s = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        g.accumulate(logits, Matrix((s - targets) * (go(0, 0) / n)));
      });
}

}  // namespace msma
