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

#include "pvae/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pvae::nn {

Tensor init_parameters(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) {
    throw std::invalid_argument("init_parameters: dimensions must be positive");
  }
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor::from({fan_out, fan_in}, std::move(values), true);
}

Tensor LinearLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_dim()) {
    throw std::invalid_argument("linear: input width does not match layer (" +
                                std::to_string(in_dim()) + ")");
  }
  Tensor y = ad::add_bias(ad::matmul(x, ad::transpose(weight)), bias);
  return activation == Activation::kRelu ? ad::relu(y) : y;
}

void LinearLayer::collect(const std::string& prefix,
                          std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LinearLayer make_linear(std::size_t in, std::size_t out, Activation act,
                        Rng& rng) {
  return {init_parameters(in, out, rng), Tensor::zeros({out}, true), act};
}

LinearLayer make_zero_linear(std::size_t in, std::size_t out) {
  return {Tensor::zeros({out, in}, true), Tensor::zeros({out}, true),
          Activation::kNone};
}

namespace {

Tensor one_minus(const Tensor& z) { return ad::add_scalar(ad::scale(z, -1.0), 1.0); }

Tensor gate_update(const Tensor& z, const Tensor& h_prev, const Tensor& cand) {
  return ad::add(ad::mul(one_minus(z), h_prev), ad::mul(z, cand));
}

}  // namespace

Tensor GruLayer::step(const Tensor& x_t, const Tensor& h_prev) const {
  if (x_t.rank() != 2 || x_t.cols() != in_dim()) {
    throw std::invalid_argument("gru: input width does not match layer");
  }
  if (h_prev.rank() != 2 || h_prev.cols() != hidden_dim() ||
      h_prev.rows() != x_t.rows()) {
    throw std::invalid_argument("gru: state shape does not match layer");
  }
  auto proj = [&](const Tensor& w, const Tensor& b) {
    return ad::add_bias(ad::matmul(x_t, ad::transpose(w)), b);
  };
  Tensor r = ad::sigmoid(ad::add(proj(w_r, b_r),
                                 ad::matmul(h_prev, ad::transpose(u_r))));
  Tensor z = ad::sigmoid(ad::add(proj(w_z, b_z),
                                 ad::matmul(h_prev, ad::transpose(u_z))));
  Tensor cand = ad::tanh(ad::add(
      proj(w_h, b_h), ad::matmul(ad::mul(r, h_prev), ad::transpose(u_h))));
  return gate_update(z, h_prev, cand);
}

Tensor GruLayer::forward_sequence(const Tensor& x, std::size_t steps,
                                  std::size_t batch) const {
  if (x.rank() != 2 || x.cols() != in_dim() || x.rows() != steps * batch ||
      steps == 0 || batch == 0) {
    throw std::invalid_argument("gru: sequence input shape mismatch");
  }
  // Input projections for all steps at once; only the recurrence is serial.
  const Tensor xr = ad::add_bias(ad::matmul(x, ad::transpose(w_r)), b_r);
  const Tensor xz = ad::add_bias(ad::matmul(x, ad::transpose(w_z)), b_z);
  const Tensor xh = ad::add_bias(ad::matmul(x, ad::transpose(w_h)), b_h);
  const Tensor ur_t = ad::transpose(u_r);
  const Tensor uz_t = ad::transpose(u_z);
  const Tensor uh_t = ad::transpose(u_h);

  Tensor h = Tensor::zeros({batch, hidden_dim()});
  std::vector<Tensor> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t lo = t * batch, hi = lo + batch;
    Tensor r = ad::sigmoid(ad::add(ad::slice(xr, 0, lo, hi), ad::matmul(h, ur_t)));
    Tensor z = ad::sigmoid(ad::add(ad::slice(xz, 0, lo, hi), ad::matmul(h, uz_t)));
    Tensor cand = ad::tanh(
        ad::add(ad::slice(xh, 0, lo, hi), ad::matmul(ad::mul(r, h), uh_t)));
    h = gate_update(z, h, cand);
    states.push_back(h);
  }
  return ad::concat(states, 0);
}

void GruLayer::collect(const std::string& prefix,
                       std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_r", w_r});
  out.push_back({prefix + ".w_z", w_z});
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".u_r", u_r});
  out.push_back({prefix + ".u_z", u_z});
  out.push_back({prefix + ".u_h", u_h});
  out.push_back({prefix + ".b_r", b_r});
  out.push_back({prefix + ".b_z", b_z});
  out.push_back({prefix + ".b_h", b_h});
}

GruLayer make_gru(std::size_t in, std::size_t hidden, Rng& rng) {
  GruLayer g;
  g.w_r = init_parameters(in, hidden, rng);
  g.w_z = init_parameters(in, hidden, rng);
  g.w_h = init_parameters(in, hidden, rng);
  g.u_r = init_parameters(hidden, hidden, rng);
  g.u_z = init_parameters(hidden, hidden, rng);
  g.u_h = init_parameters(hidden, hidden, rng);
  g.b_r = Tensor::zeros({hidden}, true);
  g.b_z = Tensor::zeros({hidden}, true);
  g.b_h = Tensor::zeros({hidden}, true);
  return g;
}

void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state was built for other parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].empty() && grads[i].size() != params[i].size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    if (state.m[i].size() != params[i].size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch");
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[i].empty() ? 0.0 : grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
  adam_step(params, grads, state);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.node()->grad) g *= factor;
    }
  }
  return norm;
}

}  // namespace pvae::nn
