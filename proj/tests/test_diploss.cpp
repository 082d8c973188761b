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

#include "pvae/analysis.hpp"
#include "pvae/diploss.hpp"
#include "test_support.hpp"

namespace pvae::diploss {
namespace {

using namespace pvae::testing;
using vae::GaussianParams;
using vae::Rng;

std::vector<std::vector<double>> random_means(std::size_t b, std::size_t l, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.5, 2.0);
  std::vector<std::vector<double>> out(b, std::vector<double>(l));
  for (auto& row : out)
    for (auto& v : row) v = g(rng);
  return out;
}

TEST(DipLoss, AblationSettings) {
  EXPECT_EQ(ablation_setting(1), (LossWeights{1.0, 0.0, 0.0}));
  EXPECT_EQ(ablation_setting(2), (LossWeights{1.0, 1e4, 1e2}));
  EXPECT_EQ(ablation_setting(3), (LossWeights{0.0, 0.0, 0.0}));
  EXPECT_EQ(ablation_setting(4), (LossWeights{0.0, 1e4, 1e2}));
  EXPECT_THROW(ablation_setting(5), std::invalid_argument);
  EXPECT_THROW((LossWeights{-1.0, 0.0, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{1.0, std::nan(""), 0.0}.validate()), std::invalid_argument);
}

TEST(DipLoss, MeanCovarianceKnownCases) {
  const std::vector<std::vector<double>> same(4, {1.0, 2.0, 3.0});
  for (double v : mean_covariance(same).values) EXPECT_EQ(v, 0.0);

  const std::vector<std::vector<double>> pair = {{1.0, 0.0}, {-1.0, 0.0}};
  const auto c = mean_covariance(pair);
  EXPECT_EQ(c.values, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));

  const std::vector<std::vector<double>> one = {{1.0, 2.0}};
  EXPECT_THROW(mean_covariance(one), std::invalid_argument);
}

TEST(DipLoss, MeanCovarianceMatchesTwoPassOracle) {
  const auto mus = random_means(37, 5, 1);
  const auto c = mean_covariance(mus);
  std::vector<double> mean(5, 0.0);
  for (const auto& m : mus)
    for (std::size_t i = 0; i < 5; ++i) mean[i] += m[i] / 37.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (const auto& m : mus) acc += (m[i] - mean[i]) * (m[j] - mean[j]);
      EXPECT_NEAR(c.at(i, j), acc / 37.0, 1e-12);
      EXPECT_NEAR(c.at(i, j), c.at(j, i), 1e-9);
    }
    EXPECT_GE(c.at(i, i), 0.0);
  }
  // The differentiable form agrees with the plain one.
  std::vector<double> flat;
  for (const auto& m : mus) flat.insert(flat.end(), m.begin(), m.end());
  const auto t = mean_covariance(ad::Tensor::from({37, 5}, flat));
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(t.at(i), c.values[i], 1e-12);
}

TEST(DipLoss, TotalCovarianceKnownCases) {
  const std::vector<GaussianParams> unit(5, GaussianParams{{0.3, -0.2}, {1.0, 1.0}});
  const auto c = total_covariance(unit);
  EXPECT_EQ(c.values, (std::vector<double>{1.0, 0.0, 0.0, 1.0}));

  const auto mus = random_means(6, 3, 2);
  std::vector<GaussianParams> tight;
  for (const auto& m : mus) tight.push_back({m, std::vector<double>(3, 0.0)});
  const auto a = total_covariance(tight);
  const auto b = mean_covariance(mus);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-15);
}

TEST(DipLoss, TotalCovarianceMatchesPooledSamples) {
  const std::size_t batch = 4, dim = 3;
  const auto mus = random_means(batch, dim, 3);
  std::vector<GaussianParams> params;
  Rng vr(4);
  std::uniform_real_distribution<double> uv(0.2, 3.0);
  for (const auto& m : mus) {
    std::vector<double> var(dim);
    for (auto& v : var) v = uv(vr);
    params.push_back({m, var});
  }
  const auto expect = total_covariance(params);

  // Draw 10^6 samples: pick a batch member uniformly, then sample its
  // posterior.
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, batch - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 1'000'000;
  std::vector<double> mean(dim, 0.0), second(dim * dim, 0.0);
  std::vector<double> z(dim);
  for (int s = 0; s < n; ++s) {
    const auto& p = params[pick(rng)];
    for (std::size_t i = 0; i < dim; ++i) z[i] = p.mu[i] + std::sqrt(p.var[i]) * g(rng);
    for (std::size_t i = 0; i < dim; ++i) {
      mean[i] += z[i];
      for (std::size_t j = 0; j < dim; ++j) second[i * dim + j] += z[i] * z[j];
    }
  }
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double emp = second[i * dim + j] / n - (mean[i] / n) * (mean[j] / n);
      diff2 += (emp - expect.at(i, j)) * (emp - expect.at(i, j));
      norm2 += expect.at(i, j) * expect.at(i, j);
    }
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 0.02);
}

TEST(DipLoss, TotalCovarianceIsPositiveSemiDefinite) {
  Rng rng(6);
  std::uniform_real_distribution<double> uv(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mus = random_means(2 + trial % 5, 4, 100 + trial);
    std::vector<GaussianParams> params;
    for (const auto& m : mus) {
      std::vector<double> var(4);
      for (auto& v : var) v = uv(rng);
      params.push_back({m, var});
    }
    const auto c = total_covariance(params);
    for (double e : analysis::symmetric_eigen(c.values, 4).values) EXPECT_GE(e, -1e-9);
  }
}

TEST(DipLoss, RegularizerValues) {
  const LossWeights w{1.0, 1e4, 1e2};
  CovMatrix id{2, {1.0, 0.0, 0.0, 1.0}};
  EXPECT_EQ(dip_regularizer(id, w), 0.0);
  CovMatrix c{2, {1.0, 0.5, 0.5, 1.0}};
  EXPECT_DOUBLE_EQ(dip_regularizer(c, w), 5000.0);
  CovMatrix d{2, {2.0, 0.0, 0.0, 0.5}};
  EXPECT_DOUBLE_EQ(dip_regularizer(d, w), 1e2 * (1.0 + 0.25));
  const auto t = dip_regularizer(ad::Tensor::from({2, 2}, {1.0, 0.5, 0.5, 1.0}), w);
  EXPECT_DOUBLE_EQ(t.item(), 5000.0);
}

TEST(DipLoss, ReducesToElboBitExactly) {
  Rng init(7);
  const auto m = vae::make_vae(vae::Role::kSpeech, kTiny, init);
  const auto batch = toy_batch(4, 3, 8);
  Rng a(9), b(9);
  const double elbo = vae::elbo_loss(m, batch, a).item();
  const double dip = dip_total_loss(m, batch, ablation_setting(1), b).item();
  EXPECT_EQ(elbo, dip);
}

TEST(DipLoss, NoKlSettingIsPureReconstruction) {
  Rng init(10);
  const auto m = vae::make_vae(vae::Role::kSpeech, kTiny, init);
  const auto batch = toy_batch(4, 3, 11);
  Rng a(12), b(12);
  const auto f = vae::run_vae(m, batch, a);
  const double loss = dip_total_loss(m, batch, ablation_setting(3), b).item();
  EXPECT_NEAR(loss, f.nll_sum.item() / 12.0, 1e-12);
}

TEST(DipLoss, RegularizerAddsCovariancePenaltyOfEncoderMeans) {
  Rng init(13);
  const auto m = vae::make_vae(vae::Role::kSpeech, kTiny, init);
  const auto batch = toy_batch(4, 3, 14);
  const LossWeights w = ablation_setting(2);
  Rng a(15), b(15);
  const auto f = vae::run_vae(m, batch, a);
  std::vector<std::vector<double>> mus;
  for (std::size_t r = 0; r < f.posterior.rows(); ++r) mus.push_back(f.posterior.row(r).mu);
  const double expect =
      (f.nll_sum.item() + f.kl_sum.item()) / 12.0 + dip_regularizer(mean_covariance(mus), w);
  EXPECT_NEAR(dip_total_loss(m, batch, w, b).item(), expect, 1e-9 * std::abs(expect));

  const auto single = toy_batch(1, 1, 16);
  Rng c(1);
  EXPECT_THROW(dip_total_loss(m, single, w, c), std::invalid_argument);
}

TEST(DipLoss, FullLossGradientCheck) {
  Rng init(17);
  const auto m = vae::make_vae(vae::Role::kSpeech, kTiny, init);
  jitter_biases(m.named_parameters(), 18);
  const auto batch = toy_batch(2, 4, 19);  // B = 8 frames
  auto params = m.parameters();
  // The setting-2 weights make the penalty dominate; smaller weights keep every
  // term visible in the check.
  for (const LossWeights w : {LossWeights{1.0, 1e4, 1e2}, LossWeights{0.5, 2.0, 3.0}}) {
    const auto r = ad::grad_check_params(
        [&] {
          Rng draw(20);
          return dip_total_loss(m, batch, w, draw);
        },
        params, kLossStep, kLossTol, kGradFloor);
    EXPECT_TRUE(r.passed) << "lambda_od " << w.lambda_od << " rel error " << r.max_rel_error
                          << " at " << r.worst_index << " analytic " << r.analytic_at_worst
                          << " numeric " << r.numeric_at_worst;
  }
}

}  // namespace
}  // namespace pvae::diploss
