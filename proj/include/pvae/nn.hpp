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
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pvae/autodiff.hpp"

namespace pvae::nn {

using Rng = std::mt19937_64;
using ad::Tensor;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Glorot-uniform (fan_out x fan_in) matrix in +-sqrt(6/(fan_in+fan_out)).
Tensor init_parameters(std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class Activation { kNone, kRelu };

struct LinearLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
  Activation activation = Activation::kNone;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  /// x is (rows x in); returns activation(x W^T + b).
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

LinearLayer make_linear(std::size_t in, std::size_t out, Activation act, Rng& rng);
/// All-zero weight and bias; used for heads that must start at N(0, I).
LinearLayer make_zero_linear(std::size_t in, std::size_t out);

// Update convention: h_t = (1 - z) * h_prev + z * h_candidate.
struct GruLayer {
  Tensor w_r, w_z, w_h;  // hidden x in
  Tensor u_r, u_z, u_h;  // hidden x hidden
  Tensor b_r, b_z, b_h;  // hidden

  std::size_t in_dim() const { return w_r.cols(); }
  std::size_t hidden_dim() const { return w_r.rows(); }

  /// One step for a batch: x_t is (B x in), h_prev is (B x hidden).
  Tensor step(const Tensor& x_t, const Tensor& h_prev) const;

  /// Runs `steps` steps over a time-major (steps*batch x in) input whose row
  /// t*batch + b holds sequence b at time t. The state starts at zero.
  /// Returns hidden states in the same layout.
  Tensor forward_sequence(const Tensor& x, std::size_t steps,
                          std::size_t batch) const;

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

GruLayer make_gru(std::size_t in, std::size_t hidden, Rng& rng);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update. `grads[i]` must match `params[i]` in
/// size; an empty gradient is treated as zero.
void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state);

/// Uses each parameter's accumulated gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Rescales accumulated gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace pvae::nn
