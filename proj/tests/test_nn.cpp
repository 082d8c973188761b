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

#include "pvae/nn.hpp"

namespace pvae::nn {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double amp = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor::from({r, c}, std::move(v));
}

Tensor weighted_sum(const Tensor& t) {
  return ad::sum(ad::mul(t, random_matrix(t.rows(), t.cols(), 77, 1.0)));
}

constexpr double kLayerTol = 1e-4;

TEST(Nn, GlorotBoundsAndDeterminism) {
  Rng a(3), b(3);
  const auto w = init_parameters(3, 3, a);
  EXPECT_EQ(w.shape(), (ad::Shape{3, 3}));
  for (double v : w.data()) EXPECT_LE(std::abs(v), 1.0);
  const auto w2 = init_parameters(3, 3, b);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w.at(i), w2.at(i));
}

TEST(Nn, GlorotVarianceMatchesUniformFormula) {
  Rng rng(4);
  const auto w = init_parameters(400, 250, rng);  // 10^5 draws
  double s = 0.0, s2 = 0.0;
  for (double v : w.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (2.0 / 650.0), 1.0, 0.05);
}

TEST(Nn, LinearKnownCases) {
  LinearLayer zero = make_zero_linear(3, 2);
  zero.activation = Activation::kRelu;
  const auto x = random_matrix(4, 3, 5);
  const auto zy = zero.forward(x);
  for (double v : zy.data()) EXPECT_EQ(v, 0.0);

  LinearLayer id = make_zero_linear(3, 3);
  for (std::size_t i = 0; i < 3; ++i) id.weight.mutable_data()[i * 3 + i] = 1.0;
  const auto y = id.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.at(i), x.at(i));

  Rng rng(6);
  const auto layer = make_linear(3, 5, Activation::kRelu, rng);
  ad::Tensor bias = layer.bias;
  bias.mutable_data()[0] = 0.3;
  LinearLayer l2 = layer;
  l2.bias = bias;
  const auto out = l2.forward(x);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t o = 0; o < 5; ++o) {
      double acc = l2.bias.at(o);
      for (std::size_t i = 0; i < 3; ++i) acc += x.at(r, i) * l2.weight.at(o, i);
      EXPECT_NEAR(out.at(r, o), std::max(acc, 0.0), 1e-15);
    }
  }
  EXPECT_THROW(l2.forward(random_matrix(4, 2, 7)), std::invalid_argument);
}

TEST(Nn, LinearGradientCheck) {
  Rng rng(8);
  auto layer = make_linear(4, 3, Activation::kNone, rng);
  const auto x = random_matrix(5, 4, 9);
  auto r = ad::grad_check([&](const Tensor& t) { return weighted_sum(layer.forward(t)); }, x,
                          1e-6, kLayerTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  r = ad::grad_check(
      [&](const Tensor& w) {
        LinearLayer l = layer;
        l.weight = w;
        return weighted_sum(l.forward(x));
      },
      layer.weight, 1e-6, kLayerTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

GruLayer zero_gru(std::size_t in, std::size_t hidden) {
  GruLayer g;
  g.w_r = g.w_z = g.w_h = Tensor::zeros({hidden, in});
  g.u_r = g.u_z = g.u_h = Tensor::zeros({hidden, hidden});
  g.b_r = g.b_z = g.b_h = Tensor::zeros({hidden});
  return g;
}

TEST(Nn, GruZeroWeightsHalveTheState) {
  const auto g = zero_gru(3, 4);
  const auto x = random_matrix(2, 3, 10);
  const auto h0 = g.step(x, Tensor::zeros({2, 4}));
  for (double v : h0.data()) EXPECT_EQ(v, 0.0);
  const auto h = random_matrix(2, 4, 11);
  const auto out = g.step(x, h);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(out.at(i), 0.5 * h.at(i));
  EXPECT_THROW(g.step(random_matrix(2, 2, 1), h), std::invalid_argument);
}

TEST(Nn, GruOutputStaysInConvexHull) {
  Rng rng(12);
  const auto g = make_gru(3, 6, rng);
  auto h = random_matrix(4, 6, 13, 2.0);
  for (int t = 0; t < 10; ++t) {
    const auto next = g.step(random_matrix(4, 3, 100 + t, 3.0), h);
    for (std::size_t i = 0; i < h.size(); ++i) {
      EXPECT_LE(std::abs(next.at(i)), std::max(std::abs(h.at(i)), 1.0) + 1e-12);
    }
    h = next;
  }
}

TEST(Nn, GruThreeStepGradientCheck) {
  Rng rng(14);
  const auto g = make_gru(3, 4, rng);
  const auto x = random_matrix(3 * 2, 3, 15);
  auto r = ad::grad_check(
      [&](const Tensor& t) { return weighted_sum(g.forward_sequence(t, 3, 2)); }, x, 1e-6,
      kLayerTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  r = ad::grad_check(
      [&](const Tensor& u) {
        GruLayer gg = g;
        gg.u_h = u;
        return weighted_sum(gg.forward_sequence(x, 3, 2));
      },
      g.u_h, 1e-6, kLayerTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  r = ad::grad_check(
      [&](const Tensor& w) {
        GruLayer gg = g;
        gg.w_z = w;
        return weighted_sum(gg.forward_sequence(x, 3, 2));
      },
      g.w_z, 1e-6, kLayerTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Nn, GruSequenceMatchesChainedSteps) {
  Rng rng(16);
  const auto g = make_gru(3, 4, rng);
  const auto x = random_matrix(5 * 2, 3, 17);
  const auto seq = g.forward_sequence(x, 5, 2);
  auto h = Tensor::zeros({2, 4});
  for (std::size_t t = 0; t < 5; ++t) {
    h = g.step(ad::slice(x, 0, 2 * t, 2 * t + 2), h);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(seq.at(2 * t + b, j), h.at(b, j));
    }
  }
}

TEST(Nn, AdamFirstStepIsMinusLearningRate) {
  std::vector<Tensor> params = {Tensor::from({1}, {0.25}, true)};
  AdamState st;
  const std::vector<std::vector<double>> grads = {{1.0}};
  adam_step(params, grads, st);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
  EXPECT_DOUBLE_EQ(params[0].at(0), 0.25 - 1e-4 / (1.0 + 1e-8));
  EXPECT_EQ(st.t, 1u);
}

TEST(Nn, AdamZeroGradientLeavesParameters) {
  std::vector<Tensor> params = {random_matrix(2, 2, 18)};
  const std::vector<double> before(params[0].data().begin(), params[0].data().end());
  AdamState st;
  const std::vector<std::vector<double>> grads = {{0.0, 0.0, 0.0, 0.0}};
  adam_step(params, grads, st);
  adam_step(params, std::vector<std::vector<double>>{{}}, st);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(params[0].at(i), before[i]);
  EXPECT_THROW(adam_step(params, std::vector<std::vector<double>>{{1.0}}, st),
               std::invalid_argument);
}

TEST(Nn, AdamDescendsOnAParabola) {
  std::vector<Tensor> params = {Tensor::from({1}, {1.0}, true)};
  AdamState st;
  st.lr = 0.01;
  double prev = 1.0;
  for (int i = 0; i < 100; ++i) {
    params[0].zero_grad();
    ad::backward(ad::sum(ad::square(params[0])));
    adam_step(params, st);
    const double now = std::abs(params[0].at(0));
    if (i >= 5) EXPECT_LT(now, prev) << "step " << i;
    prev = now;
  }
}

TEST(Nn, ClipGradNormRescales) {
  std::vector<Tensor> params = {Tensor::from({2}, {1.0, 1.0}, true),
                                Tensor::from({1}, {1.0}, true)};
  ad::backward(ad::add(ad::sum(ad::scale(params[0], 3.0)),
                       ad::sum(ad::scale(params[1], 4.0))));
  // Gradient (3, 3, 4): norm sqrt(34).
  const double norm = clip_grad_norm(params, 5.0);
  EXPECT_DOUBLE_EQ(norm, std::sqrt(34.0));
  const double f = 5.0 / std::sqrt(34.0);
  EXPECT_NEAR(params[0].grad()[0], 3.0 * f, 1e-15);
  EXPECT_NEAR(params[1].grad()[0], 4.0 * f, 1e-15);
  EXPECT_NEAR(clip_grad_norm(params, 10.0), 5.0, 1e-12);
  EXPECT_NEAR(params[1].grad()[0], 4.0 * f, 1e-15);
}

}  // namespace
}  // namespace pvae::nn
