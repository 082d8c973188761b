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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pvae/autodiff.hpp"
#include "pvae/vae.hpp"

namespace pvae::diploss {

using ad::Tensor;

/// Weights of the pretraining objective: beta scales the KL term,
/// lambda_od / lambda_d scale the off-diagonal / diagonal penalties on the
/// covariance of posterior means.
struct LossWeights {
  double beta = 1.0;
  double lambda_od = 0.0;
  double lambda_d = 0.0;

  /// Throws std::invalid_argument unless all weights are finite and >= 0.
  void validate() const;
  bool regularizer_active() const { return lambda_od > 0.0 || lambda_d > 0.0; }
  bool operator==(const LossWeights&) const = default;
};

/// The four ablation settings, numbered 1-4:
/// (1) standard VAE, (2) DIP-VAE, (3) no KL term, (4) DIP-VAE without KL.
LossWeights ablation_setting(int number);

struct CovMatrix {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major dim x dim

  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
};

/// Population covariance (1/B) of a batch of mean vectors; B >= 2.
CovMatrix mean_covariance(std::span<const std::vector<double>> mus);
/// diag(mean of variances) + mean_covariance(means).
CovMatrix total_covariance(std::span<const vae::GaussianParams> params);

/// Differentiable population covariance of the rows of a (B x L) matrix.
Tensor mean_covariance(const Tensor& mus);

/// lambda_od * sum_{i != j} C_ij^2 + lambda_d * sum_i (C_ii - 1)^2.
Tensor dip_regularizer(const Tensor& cov, const LossWeights& w);
double dip_regularizer(const CovMatrix& cov, const LossWeights& w);

/// Per-frame mean of [-log p(s|z) + beta * KL] plus the regularizer on the
/// batch covariance of the encoder means. With beta = 1 and both lambdas
/// zero this is the negative ELBO, computed through the same operations as
/// vae::elbo_loss.
Tensor dip_total_loss(const vae::VaeModel& model, const vae::SequenceBatch& batch,
                      const LossWeights& w, vae::Rng& rng);

}  // namespace pvae::diploss
