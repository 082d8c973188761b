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

#include "pvae/diploss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pvae::diploss {

void LossWeights::validate() const {
  for (double v : {beta, lambda_od, lambda_d}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("loss weights must be finite and non-negative");
    }
  }
}

LossWeights ablation_setting(int number) {
  switch (number) {
    case 1: return {1.0, 0.0, 0.0};
    case 2: return {1.0, 1e4, 1e2};
    case 3: return {0.0, 0.0, 0.0};
    case 4: return {0.0, 1e4, 1e2};
    default:
      throw std::invalid_argument("ablation setting must be 1-4, got " +
                                  std::to_string(number));
  }
}

CovMatrix mean_covariance(std::span<const std::vector<double>> mus) {
  if (mus.size() < 2) {
    throw std::invalid_argument("mean_covariance: need at least 2 samples");
  }
  const std::size_t dim = mus[0].size();
  const double inv_b = 1.0 / static_cast<double>(mus.size());
  std::vector<double> mean(dim, 0.0);
  for (const auto& m : mus) {
    if (m.size() != dim) throw std::invalid_argument("mean_covariance: ragged batch");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += m[i];
  }
  for (auto& v : mean) v *= inv_b;
  CovMatrix cov{dim, std::vector<double>(dim * dim, 0.0)};
  for (const auto& m : mus) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double di = m[i] - mean[i];
      for (std::size_t j = 0; j < dim; ++j) cov.values[i * dim + j] += di * (m[j] - mean[j]);
    }
  }
  for (auto& v : cov.values) v *= inv_b;
  return cov;
}

CovMatrix total_covariance(std::span<const vae::GaussianParams> params) {
  std::vector<std::vector<double>> mus;
  mus.reserve(params.size());
  for (const auto& p : params) mus.push_back(p.mu);
  CovMatrix cov = mean_covariance(mus);
  const double inv_b = 1.0 / static_cast<double>(params.size());
  for (const auto& p : params) {
    if (p.var.size() != cov.dim) throw std::invalid_argument("total_covariance: ragged batch");
    for (std::size_t i = 0; i < cov.dim; ++i) cov.values[i * cov.dim + i] += p.var[i] * inv_b;
  }
  return cov;
}

Tensor mean_covariance(const Tensor& mus) {
  if (mus.rank() != 2 || mus.rows() < 2) {
    throw std::invalid_argument("mean_covariance: need at least 2 samples");
  }
  const std::size_t b = mus.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  const Tensor ones_row = Tensor::full({1, b}, inv_b);
  const Tensor ones_col = Tensor::full({b, 1}, 1.0);
  Tensor mean = ad::matmul(ones_row, mus);                     // 1 x L
  Tensor centered = ad::sub(mus, ad::matmul(ones_col, mean));  // B x L
  return ad::scale(ad::matmul(ad::transpose(centered), centered), inv_b);
}

Tensor dip_regularizer(const Tensor& cov, const LossWeights& w) {
  w.validate();
  if (cov.rank() != 2 || cov.rows() != cov.cols()) {
    throw std::invalid_argument("dip_regularizer: expected a square matrix");
  }
  const std::size_t n = cov.rows();
  std::vector<double> diag_mask(n * n, 0.0), off_mask(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    diag_mask[i * n + i] = 1.0;
    off_mask[i * n + i] = 0.0;
  }
  const Tensor identity = Tensor::from({n, n}, diag_mask);
  const Tensor off = Tensor::from({n, n}, std::move(off_mask));
  Tensor off_term = ad::sum(ad::square(ad::mul(cov, off)));
  Tensor diag_term =
      ad::sum(ad::square(ad::sub(ad::mul(cov, identity), identity)));
  return ad::add(ad::scale(off_term, w.lambda_od), ad::scale(diag_term, w.lambda_d));
}

double dip_regularizer(const CovMatrix& cov, const LossWeights& w) {
  w.validate();
  double off = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < cov.dim; ++i) {
    for (std::size_t j = 0; j < cov.dim; ++j) {
      const double c = cov.at(i, j);
      if (i == j) {
        diag += (c - 1.0) * (c - 1.0);
      } else {
        off += c * c;
      }
    }
  }
  return w.lambda_od * off + w.lambda_d * diag;
}

Tensor dip_total_loss(const vae::VaeModel& model, const vae::SequenceBatch& batch,
                      const LossWeights& w, vae::Rng& rng) {
  w.validate();
  if (batch.num_frames() == 0) throw std::invalid_argument("dip_total_loss: empty batch");
  if (w.regularizer_active() && batch.num_frames() < 2) {
    throw std::invalid_argument("dip_total_loss: regularizer needs at least 2 frames");
  }
  auto f = vae::run_vae(model, batch, rng);
  Tensor kl = ad::scale(f.kl_sum, w.beta);
  Tensor loss = ad::scale(ad::add(f.nll_sum, kl),
                          1.0 / static_cast<double>(batch.num_frames()));
  if (w.regularizer_active()) {
    loss = ad::add(loss, dip_regularizer(mean_covariance(f.posterior.mu), w));
  }
  return loss;
}

}  // namespace pvae::diploss
