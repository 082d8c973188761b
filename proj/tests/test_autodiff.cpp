// Copyright 2026 The PVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pvae/autodiff.hpp"

namespace pvae::ad {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Reduces a tensor to a scalar with fixed random weights so that every
// element receives a distinct, O(1) gradient.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 99) {
  return sum(mul(t, random_tensor(t.shape(), seed, 0.5, 1.5)));
}

constexpr double kStep = 1e-6;
constexpr double kPrimitiveTol = 1e-6;

void expect_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                 double tol = kPrimitiveTol) {
  const auto r = grad_check(f, x, kStep, tol);
  EXPECT_TRUE(r.passed) << "max rel error " << r.max_rel_error << " at " << r.worst_index
                        << " analytic " << r.analytic_at_worst << " numeric "
                        << r.numeric_at_worst;
}

TEST(AutodiffGrad, ElementwiseUnaryOps) {
  const auto x = random_tensor({3, 4}, 1);
  const auto pos = random_tensor({3, 4}, 2, 0.2, 2.0);
  expect_grad([](const Tensor& t) { return weighted_sum(exp(t)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(log(t)); }, pos);
  expect_grad([](const Tensor& t) { return weighted_sum(sqrt(t)); }, pos);
  expect_grad([](const Tensor& t) { return weighted_sum(tanh(t)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(sigmoid(t)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(square(t)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(scale(t, -2.5)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(add_scalar(t, 3.0)); }, x);
  expect_grad([](const Tensor& t) { return mean(t); }, x);
}

TEST(AutodiffGrad, ReluAndClampAwayFromKinks) {
  // Values bounded away from 0 / the floor so central differences never
  // straddle a kink.
  auto x = random_tensor({4, 5}, 3, 0.1, 1.0);
  auto d = x.mutable_data();
  for (std::size_t i = 0; i < d.size(); i += 2) d[i] = -d[i];
  expect_grad([](const Tensor& t) { return weighted_sum(relu(t)); }, x);
  expect_grad([](const Tensor& t) { return weighted_sum(clamp_min(t, 0.0)); }, x);
}

TEST(AutodiffGrad, BinaryOps) {
  const auto b = random_tensor({3, 4}, 5, 0.5, 2.0);
  const auto x = random_tensor({3, 4}, 4);
  expect_grad([&](const Tensor& t) { return weighted_sum(add(t, b)); }, x);
  expect_grad([&](const Tensor& t) { return weighted_sum(sub(b, t)); }, x);
  expect_grad([&](const Tensor& t) { return weighted_sum(mul(t, b)); }, x);
  expect_grad([&](const Tensor& t) { return weighted_sum(div(b, add_scalar(square(t), 1.0))); },
              x);
  expect_grad([&](const Tensor& t) { return weighted_sum(div(t, b)); }, x);
  // Same tensor on both sides exercises gradient accumulation.
  expect_grad([](const Tensor& t) { return weighted_sum(mul(t, t)); }, x);
}

TEST(AutodiffGrad, MatrixOps) {
  const auto a = random_tensor({3, 4}, 6);
  const auto b = random_tensor({4, 5}, 7);
  const auto row = random_tensor({5}, 8);
  const auto v = random_tensor({6}, 9);
  expect_grad([&](const Tensor& t) { return weighted_sum(matmul(t, b)); }, a);
  expect_grad([&](const Tensor& t) { return weighted_sum(matmul(a, t)); }, b);
  expect_grad([](const Tensor& t) { return weighted_sum(transpose(t)); }, a);
  expect_grad([&](const Tensor& t) { return weighted_sum(outer_product(t, row)); }, v);
  expect_grad([&](const Tensor& t) { return weighted_sum(add_bias(matmul(a, b), t)); }, row);
  expect_grad([&](const Tensor& t) {
    const Tensor parts[] = {t, square(t)};
    return weighted_sum(concat(parts, 1));
  }, a);
  expect_grad([&](const Tensor& t) {
    const Tensor parts[] = {t, exp(t)};
    return weighted_sum(concat(parts, 0));
  }, a);
  expect_grad([](const Tensor& t) { return weighted_sum(slice(t, 1, 1, 3)); }, a);
  expect_grad([](const Tensor& t) { return weighted_sum(slice(t, 0, 1, 2)); }, a);
}

TEST(AutodiffGrad, ComposedExpression) {
  const auto x = random_tensor({2, 3}, 10);
  expect_grad([](const Tensor& t) {
    Tensor h = tanh(matmul(t, transpose(t)));
    return sum(mul(sigmoid(h), exp(scale(h, 0.5))));
  }, x);
}

TEST(Autodiff, MatmulForwardMatchesHandComputation) {
  const auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(c.at(0, 0), 58.0);
  EXPECT_EQ(c.at(0, 1), 64.0);
  EXPECT_EQ(c.at(1, 0), 139.0);
  EXPECT_EQ(c.at(1, 1), 154.0);
}

TEST(Autodiff, MatmulRowsDoNotDependOnRowCount) {
  // The recurrent layers rely on this for bit-exact causality.
  const auto a = random_tensor({7, 33}, 11);
  const auto b = random_tensor({33, 19}, 12);
  const auto full = matmul(a, b);
  const auto head = matmul(slice(a, 0, 0, 3), b);
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_EQ(head.at(i), full.at(i));
}

TEST(Autodiff, GradientsAccumulateAcrossBackwardCalls) {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  backward(sum(square(x)));
  backward(sum(square(x)));
  ASSERT_TRUE(x.has_grad());
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(square(x));
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  backward(y);
  EXPECT_FALSE(x.has_grad());
}

TEST(Autodiff, DetachCutsHistory) {
  auto x = Tensor::from({1}, {3.0}, true);
  auto y = mul(x, x).detach();
  backward(sum(mul(y, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 9.0);
}

TEST(Autodiff, LogRejectsNonPositiveInput) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), std::domain_error);
  EXPECT_THROW(log(Tensor::from({1}, {-1.0})), std::domain_error);
}

TEST(Autodiff, ShapeMismatchIsRejected) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), std::invalid_argument);
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Autodiff, NonFiniteLeafGradientRaises) {
  auto x = Tensor::from({1}, {800.0}, true);  // exp overflows to inf
  EXPECT_THROW(backward(sum(exp(x))), NumericError);
}

TEST(Autodiff, BackwardRequiresScalar) {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(square(x)), std::invalid_argument);
}

TEST(Autodiff, GradCheckDetectsAWrongGradient) {
  // A function whose recorded gradient is deliberately inconsistent with its
  // value: detach hides the dependence on x from backward.
  const auto x = random_tensor({3}, 13);
  const auto r = grad_check(
      [](const Tensor& t) { return sum(add(t, square(t).detach())); }, x, kStep, 1e-6);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 1e-2);
}

}  // namespace
}  // namespace pvae::ad
