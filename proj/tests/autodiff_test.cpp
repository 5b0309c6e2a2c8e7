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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "gradcheck.hpp"
#include "msma/autodiff.hpp"
#include "msma/layers.hpp"

namespace msma {
namespace {

using test::finite_difference;
using test::max_rel;
using test::random_matrix;

using UnaryOp = std::function<Var(Graph&, Var)>;

// Checks d/dx sum(op(x) .* weights) against central differences.
double check_unary(const UnaryOp& op, Matrix x, std::uint64_t seed = 7) {
  Rng rng(seed);
  Matrix weights;
  {
    Graph probe(false);
    Var y = op(probe, probe.constant(x));
    weights = random_matrix(static_cast<int>(y.rows()),
                            static_cast<int>(y.cols()), rng);
  }
  auto loss_of = [&](Graph& g, Var in) {
    return sum(mul(op(g, in), g.constant(weights)));
  };
  Graph g;
  Var in = g.input(x);
  Var loss = loss_of(g, in);
  g.backward(loss);
  const Matrix analytic = g.grad(in);
  auto eval = [&]() {
    Graph h(false);
    return loss_of(h, h.constant(x)).scalar();
  };
  return max_rel(finite_difference(x, analytic, eval, test::all_indices(x)));
}

TEST(AutodiffTest, ElementwiseOps) {
  Rng rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  EXPECT_LT(check_unary([](Graph&, Var a) { return tanh(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return sigmoid(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return softsign(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return scale(a, -2.5); }, x),
            1e-6);
  // Keep relu inputs away from the kink.
  Matrix shifted = x;
  for (Eigen::Index i = 0; i < shifted.size(); ++i)
    if (std::abs(shifted.data()[i]) < 0.05) shifted.data()[i] = 0.3;
  EXPECT_LT(check_unary([](Graph&, Var a) { return relu(a); }, shifted), 1e-6);
}

TEST(AutodiffTest, BinaryOps) {
  Rng rng(2);
  const Matrix other = random_matrix(3, 4, rng);
  const Matrix right = random_matrix(4, 2, rng);
  const Matrix row = random_matrix(1, 4, rng);
  const Matrix x = random_matrix(3, 4, rng);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return add(a, g.input(other)); },
                        x),
            1e-6);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return sub(g.input(other), a); },
                        x),
            1e-6);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return mul(a, g.input(other)); },
                        x),
            1e-6);
  EXPECT_LT(
      check_unary([&](Graph& g, Var a) { return matmul(a, g.input(right)); }, x),
      1e-6);
  const Matrix left = random_matrix(2, 3, rng);
  EXPECT_LT(
      check_unary([&](Graph& g, Var a) { return matmul(g.input(left), a); }, x),
      1e-6);
  EXPECT_LT(
      check_unary([&](Graph& g, Var a) { return add_row(g.input(other), a); },
                  row),
      1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return repeat_rows(a, 5); }, row),
            1e-6);
}

TEST(AutodiffTest, ShapeOps) {
  Rng rng(3);
  const Matrix x = random_matrix(4, 5, rng);
  EXPECT_LT(check_unary([](Graph&, Var a) { return slice_cols(a, 1, 3); }, x),
            1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return slice_rows(a, 2, 2); }, x),
            1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return transpose(a); }, x), 1e-6);
  EXPECT_LT(check_unary(
                [](Graph&, Var a) {
                  return concat_cols({a, tanh(a), slice_cols(a, 0, 1)});
                },
                x),
            1e-6);
  EXPECT_LT(check_unary(
                [](Graph&, Var a) {
                  const Var parts[] = {a, slice_rows(a, 1, 2)};
                  return concat_rows(parts);
                },
                x),
            1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return sum(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return mean(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return mean_rows(a); }, x), 1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return im2col(a, 3, 1); }, x),
            1e-6);
  EXPECT_LT(
      check_unary([](Graph&, Var a) { return im2col(a, 5, 2, true); }, x),
      1e-6);
  const Segment segs[] = {{0, 1}, {1, 4}};
  EXPECT_LT(check_unary([&](Graph&, Var a) { return segment_mean(a, segs); },
                        x),
            1e-6);
  const int ids[] = {3, 0, 3, 1};
  EXPECT_LT(check_unary([&](Graph&, Var a) { return gather_rows(a, ids); }, x),
            1e-6);
}

TEST(AutodiffTest, NormalizationOps) {
  Rng rng(4);
  const Matrix x = random_matrix(3, 6, rng);
  const Matrix gain = random_matrix(1, 6, rng);
  const Matrix bias = random_matrix(1, 6, rng);
  EXPECT_LT(check_unary(
                [&](Graph& g, Var a) {
                  return layer_norm(a, g.input(gain), g.input(bias));
                },
                x),
            1e-5);
  EXPECT_LT(check_unary(
                [&](Graph& g, Var a) {
                  return layer_norm(g.input(x), a, g.input(bias));
                },
                gain),
            1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return l2_normalize_rows(a); }, x),
            1e-6);
  EXPECT_LT(check_unary([](Graph&, Var a) { return softmax_rows(a); }, x),
            1e-6);
}

TEST(AutodiffTest, LossOps) {
  Rng rng(5);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix target = random_matrix(3, 4, rng);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return mse(a, g.input(target)); },
                        x),
            1e-6);
  Matrix labels(3, 4);
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    labels.data()[i] = (i % 3 == 0) ? 1.0 : 0.0;
  EXPECT_LT(
      check_unary([&](Graph&, Var a) { return bce_with_logits(a, labels); }, x),
      1e-6);
  const int targets[] = {0, 3, 2};
  EXPECT_LT(check_unary(
                [&](Graph&, Var a) {
                  return nll_of_probs(softmax_rows(a), targets);
                },
                x),
            1e-6);
}

TEST(AutodiffTest, RecurrentCells) {
  Rng rng(6);
  const Matrix z = random_matrix(1, 12, rng);
  const Matrix c = random_matrix(1, 3, rng);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return lstm_cell(a, g.input(c)); },
                        z),
            1e-6);
  EXPECT_LT(check_unary([&](Graph& g, Var a) { return lstm_cell(g.input(z), a); },
                        c),
            1e-6);
  const Matrix xz = random_matrix(1, 9, rng);
  const Matrix hz = random_matrix(1, 9, rng);
  const Matrix h = random_matrix(1, 3, rng);
  EXPECT_LT(check_unary(
                [&](Graph& g, Var a) { return gru_cell(a, g.input(hz), g.input(h)); },
                xz),
            1e-6);
  EXPECT_LT(check_unary(
                [&](Graph& g, Var a) { return gru_cell(g.input(xz), a, g.input(h)); },
                hz),
            1e-6);
  EXPECT_LT(check_unary(
                [&](Graph& g, Var a) { return gru_cell(g.input(xz), g.input(hz), a); },
                h),
            1e-6);
}

TEST(AutodiffTest, ReplicatePaddingRepeatsEdgeFrames) {
  Graph g(false);
  Matrix x(2, 1);
  x << 1.0, 2.0;
  Matrix expected(2, 3);
  expected << 1.0, 1.0, 2.0,  //
      1.0, 2.0, 2.0;
  EXPECT_EQ(im2col(g.constant(x), 3, 1, true).value(), expected);
}

TEST(AutodiffTest, GrlIsIdentityForwardAndNegatedBackward) {
  Graph g;
  Matrix x(1, 2);
  x << 1.5, -2.0;
  Var in = g.input(x);
  Var out = grl(in, 0.5);
  EXPECT_EQ(out.value(), x);
  Matrix w(1, 2);
  w << 0.3, 0.4;
  g.backward(sum(mul(out, g.constant(w))));
  const Matrix dx = g.grad(in);
  EXPECT_DOUBLE_EQ(dx(0, 0), -0.15);
  EXPECT_DOUBLE_EQ(dx(0, 1), -0.2);
}

TEST(AutodiffTest, NllClampsAndFlags) {
  Graph g;
  Matrix p(1, 3);
  p << 0.0, 0.5, 0.5;
  bool clamped = false;
  const int target[] = {0};
  Var loss = nll_of_probs(g.input(p), target, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_NEAR(loss.scalar(), -std::log(1e-12), 1e-9);
}

TEST(AutodiffTest, ParamGradientsAccumulateAcrossBackwardCalls) {
  ParamStore store;
  Rng rng(8);
  Linear lin(store, "lin", 3, 2, rng);
  const Matrix x = random_matrix(2, 3, rng);
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(sum(lin(g, g.constant(x))));
  }
  // d/dW sum(xW + b) = x^T * ones, twice.
  const Matrix expected = 2.0 * x.transpose() * Matrix::Ones(2, 2);
  EXPECT_TRUE(lin.weight().grad.isApprox(expected));
  EXPECT_TRUE(lin.bias()->grad.isApprox(Matrix::Constant(1, 2, 4.0)));
}

TEST(AutodiffTest, FrozenParamsReceiveNoGradient) {
  ParamStore store;
  Rng rng(9);
  Linear lin(store, "lin", 2, 2, rng);
  Graph g;
  g.freeze(lin.weight());
  g.backward(sum(lin(g, g.constant(Matrix::Ones(1, 2)))));
  EXPECT_TRUE(lin.weight().grad.isZero());
  EXPECT_FALSE(lin.bias()->grad.isZero());
}

TEST(AutodiffTest, SequenceLayersMatchFiniteDifferences) {
  ParamStore store;
  Rng rng(10);
  Lstm lstm(store, "lstm", 3, 4, rng);
  Gru gru(store, "gru", 4, 2, rng);
  Conv1d conv(store, "conv", 3, 3, 3, rng);
  const Matrix x = random_matrix(5, 3, rng);
  auto build = [&](Graph& g) {
    Var h = lstm.sequence(g, conv(g, g.constant(x)), true);
    return sum(tanh(gru.sequence(g, h)));
  };
  store.zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  for (Param* p : store.all()) {
    const Matrix analytic = p->grad;
    auto eval = [&]() {
      Graph h(false);
      return build(h).scalar();
    };
    EXPECT_LT(max_rel(finite_difference(p->value, analytic, eval,
                                        test::all_indices(p->value))),
              1e-5)
        << p->name;
  }
}

TEST(AutodiffTest, RejectsMismatchedShapes) {
  Graph g;
  Var a = g.constant(Matrix::Zero(2, 3));
  Var b = g.constant(Matrix::Zero(3, 2));
  EXPECT_THROW(add(a, b), std::invalid_argument);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
  const Segment empty[] = {{1, 1}};
  EXPECT_THROW(segment_mean(a, empty), std::invalid_argument);
}

}  // namespace
}  // namespace msma
