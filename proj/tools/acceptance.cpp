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

// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   pvae_acceptance [--desk-config FILE] [--work DIR] [--skip-desk]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pvae/analysis.hpp"
#include "pvae/checkpoint.hpp"
#include "pvae/cli.hpp"
#include "pvae/diploss.hpp"
#include "pvae/dsp.hpp"
#include "pvae/nn.hpp"
#include "pvae/nsvae.hpp"
#include "pvae/vae.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pvae;
using ad::Tensor;
using vae::Rng;

// Fixed-seed desk results of configs/desk.cfg (seed 0). The checks below
// accept values down to 90% of these.
constexpr double kPinnedImprovementDb = 6.685306;  // setting 3 SI-SNR gain
constexpr double kPinnedSeparationRatio = 4.106832;  // setting 3
constexpr double kMargin = 0.9;
constexpr double kMinImprovementDb = 3.0;

constexpr double kPrimitiveTol = 1e-6;
constexpr double kLayerTol = 1e-4;
constexpr double kPrimitiveStep = 1e-6;
// Loss-level checks: central differences of a loss L carry ~eps*|L|/step of
// rounding, so gradients below kGradFloor * max(1, |L|) are compared in
// absolute terms.
constexpr double kLossStep = 1e-5;
constexpr double kGradFloor = 1e-5;
constexpr double kOneMinute = 60.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Tensor random_tensor(ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Fixed positive weights give every element a distinct O(1) gradient.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 99) {
  return ad::sum(ad::mul(t, random_tensor(t.shape(), seed, 0.5, 1.5)));
}

std::vector<dsp::LpsFrame> random_frames(std::size_t n, std::size_t bins, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<dsp::LpsFrame> out(n, dsp::LpsFrame(bins));
  for (auto& f : out)
    for (auto& v : f) v = g(rng);
  return out;
}

vae::SequenceBatch toy_batch(std::size_t steps, std::size_t batch, std::size_t bins,
                             std::uint64_t seed) {
  std::vector<std::vector<dsp::LpsFrame>> seqs;
  for (std::size_t b = 0; b < batch; ++b) seqs.push_back(random_frames(steps, bins, seed + b));
  return vae::make_batch(seqs);
}

// Zero-initialized biases can leave a ReLU input at exactly 0 when a whole
// upstream layer is inactive, which puts a kink under the finite difference.
void jitter_biases(const std::vector<nn::NamedTensor>& named, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const auto& np : named) {
    if (np.name.ends_with("bias") || np.name.find(".b_") != std::string::npos) {
      auto t = np.tensor;
      for (auto& v : t.mutable_data()) v = u(rng);
    }
  }
}

// Tracks the worst relative error of a family of gradient checks.
struct GradTally {
  double tol;
  double worst = 0.0;
  std::string worst_name;
  int count = 0;
  bool pass = true;

  void add(const std::string& name, const ad::GradCheckReport& r) {
    ++count;
    pass = pass && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  }
  std::string summary(const char* what) const {
    return std::to_string(count) + " " + what + " worst " + fmt("%.2e", worst) + " (" +
           worst_name + ") tol " + fmt("%.0e", tol);
  }
};

Outcome criterion_gradients() {
  Timer timer;
  GradTally prim{kPrimitiveTol}, layer{kLayerTol}, loss{kLayerTol};
  auto p = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f,
               const Tensor& x) { prim.add(name, ad::grad_check(f, x, kPrimitiveStep, kPrimitiveTol)); };

  const auto x = random_tensor({3, 4}, 1);
  const auto pos = random_tensor({3, 4}, 2, 0.3, 2.0);
  const auto b = random_tensor({3, 4}, 3, 0.5, 2.0);
  p("exp", [](const Tensor& t) { return weighted_sum(ad::exp(t)); }, x);
  p("log", [](const Tensor& t) { return weighted_sum(ad::log(t)); }, pos);
  p("sqrt", [](const Tensor& t) { return weighted_sum(ad::sqrt(t)); }, pos);
  p("tanh", [](const Tensor& t) { return weighted_sum(ad::tanh(t)); }, x);
  p("sigmoid", [](const Tensor& t) { return weighted_sum(ad::sigmoid(t)); }, x);
  p("relu", [](const Tensor& t) { return weighted_sum(ad::relu(t)); }, x);
  p("square", [](const Tensor& t) { return weighted_sum(ad::square(t)); }, x);
  p("scale", [](const Tensor& t) { return weighted_sum(ad::scale(t, -2.5)); }, x);
  p("add_scalar", [](const Tensor& t) { return weighted_sum(ad::add_scalar(t, 3.0)); }, x);
  p("clamp_min", [](const Tensor& t) { return weighted_sum(ad::clamp_min(t, 0.0)); }, x);
  p("sum", [](const Tensor& t) { return ad::sum(ad::square(t)); }, x);
  p("mean", [](const Tensor& t) { return ad::mean(t); }, x);
  p("add", [&](const Tensor& t) { return weighted_sum(ad::add(t, b)); }, x);
  p("sub", [&](const Tensor& t) { return weighted_sum(ad::sub(b, t)); }, x);
  p("mul", [&](const Tensor& t) { return weighted_sum(ad::mul(t, b)); }, x);
  p("div", [&](const Tensor& t) { return weighted_sum(ad::div(t, b)); }, x);
  p("div_denominator",
    [&](const Tensor& t) { return weighted_sum(ad::div(b, ad::add_scalar(ad::square(t), 1.0))); }, x);
  const auto m = random_tensor({3, 4}, 4);
  const auto n = random_tensor({4, 5}, 5);
  const auto row = random_tensor({5}, 6);
  const auto v = random_tensor({6}, 7);
  p("matmul_lhs", [&](const Tensor& t) { return weighted_sum(ad::matmul(t, n)); }, m);
  p("matmul_rhs", [&](const Tensor& t) { return weighted_sum(ad::matmul(m, t)); }, n);
  p("transpose", [](const Tensor& t) { return weighted_sum(ad::transpose(t)); }, m);
  p("outer_product", [&](const Tensor& t) { return weighted_sum(ad::outer_product(t, row)); }, v);
  p("add_bias", [&](const Tensor& t) { return weighted_sum(ad::add_bias(ad::matmul(m, n), t)); }, row);
  p("concat", [](const Tensor& t) {
    const Tensor parts[] = {t, ad::square(t)};
    return weighted_sum(ad::concat(parts, 1));
  }, m);
  p("slice", [](const Tensor& t) { return weighted_sum(ad::slice(t, 1, 1, 3)); }, m);

  // Layers: gradients with respect to inputs and to every parameter tensor.
  Rng rng(10);
  auto l = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f,
               const Tensor& at) { layer.add(name, ad::grad_check(f, at, kPrimitiveStep, kLayerTol)); };
  for (auto act : {nn::Activation::kNone, nn::Activation::kRelu}) {
    auto fc = nn::make_linear(4, 3, act, rng);
    fc.bias = random_tensor({3}, 11, -0.1, 0.1);
    const auto in = random_tensor({5, 4}, 12);
    const std::string tag = act == nn::Activation::kRelu ? "fc_relu" : "fc";
    l(tag + ".input", [&](const Tensor& t) { return weighted_sum(fc.forward(t)); }, in);
    l(tag + ".weight", [&](const Tensor& w) {
      auto c = fc;
      c.weight = w;
      return weighted_sum(c.forward(in));
    }, fc.weight);
    l(tag + ".bias", [&](const Tensor& bb) {
      auto c = fc;
      c.bias = bb;
      return weighted_sum(c.forward(in));
    }, fc.bias);
  }
  const auto gru = nn::make_gru(3, 4, rng);
  std::vector<nn::NamedTensor> gru_params;
  gru.collect("gru", gru_params);
  jitter_biases(gru_params, 13);
  const auto seq = random_tensor({3 * 2, 3}, 14);
  l("gru.input", [&](const Tensor& t) { return weighted_sum(gru.forward_sequence(t, 3, 2)); }, seq);
  for (const auto& np : gru_params) {
    auto params = std::vector<Tensor>{np.tensor};
    layer.add(np.name, ad::grad_check_params(
                           [&] { return weighted_sum(gru.forward_sequence(seq, 3, 2)); }, params,
                           kPrimitiveStep, kLayerTol));
  }

  // Losses: ELBO, regularized ELBO in every ablation setting, covariance
  // penalty, and the NSVAE permutation loss in both KL directions.
  const vae::Topology tiny{6, 5, 3};
  Rng init(20);
  const auto model = vae::make_vae(vae::Role::kSpeech, tiny, init);
  jitter_biases(model.named_parameters(), 21);
  auto params = model.parameters();
  const auto batch = toy_batch(2, 4, tiny.num_bins, 22);
  auto check_loss = [&](const std::string& name, const std::function<Tensor()>& f,
                        std::span<Tensor> ps) {
    const double scale = std::max(1.0, std::abs(f().item()));
    loss.add(name, ad::grad_check_params(f, ps, kLossStep, kLayerTol, kGradFloor * scale));
  };
  check_loss("elbo", [&] {
    Rng draw(23);
    return vae::elbo_loss(model, batch, draw);
  }, params);
  for (int s = 1; s <= 4; ++s) {
    const auto w = diploss::ablation_setting(s);
    check_loss("dip_total_loss setting " + std::to_string(s), [&] {
      Rng draw(24);
      return diploss::dip_total_loss(model, batch, w, draw);
    }, params);
  }
  loss.add("dip_regularizer(mean_covariance)",
           ad::grad_check([](const Tensor& mus) {
             return diploss::dip_regularizer(diploss::mean_covariance(mus), {1.0, 2.0, 3.0});
           }, random_tensor({6, 3}, 25), kPrimitiveStep, kLayerTol));

  Rng ninit(30);
  const auto ns = nsvae::make_nsvae(tiny, ninit);
  jitter_biases(ns.named_parameters(), 31);
  const auto cvae = vae::make_vae(vae::Role::kSpeech, tiny, ninit);
  const auto nvae = vae::make_vae(vae::Role::kNoise, tiny, ninit);
  auto ns_params = ns.parameters();
  const auto y = toy_batch(2, 2, tiny.num_bins, 32), xs = toy_batch(2, 2, tiny.num_bins, 33),
             vs = toy_batch(2, 2, tiny.num_bins, 34);
  for (auto dir : {nsvae::KlDirection::kNoisyToClean, nsvae::KlDirection::kCleanToNoisy}) {
    check_loss(dir == nsvae::KlDirection::kNoisyToClean ? "permutation_loss" : "permutation_loss reverse",
               [&] { return nsvae::permutation_loss(ns, cvae, nvae, y, xs, vs, dir); }, ns_params);
  }

  const double secs = timer.seconds();
  Outcome o;
  o.pass = prim.pass && layer.pass && loss.pass && secs < kOneMinute;
  o.detail = prim.summary("primitives") + "; " + layer.summary("layer checks") + "; " +
             loss.summary("loss checks") + "; " + fmt("%.1f s", secs);
  return o;
}

Outcome criterion_oracles() {
  Timer timer;
  const int n = 1'000'000;
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_kl = 0.0;
  auto mc_kl = [&](const vae::GaussianParams& a, const vae::GaussianParams& b, double closed,
                   std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> z(a.mu.size());
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = a.mu[i] + std::sqrt(a.var[i]) * g(rng);
      acc += vae::gaussian_log_likelihood(z, a) - vae::gaussian_log_likelihood(z, b);
    }
    worst_kl = std::max(worst_kl, std::abs(acc / n / closed - 1.0));
  };
  const vae::GaussianParams q{{0.8, -0.5}, {0.6, 1.7}}, std_normal{{0.0, 0.0}, {1.0, 1.0}};
  mc_kl(q, std_normal, vae::kl_to_standard_normal(q), 1);
  const vae::GaussianParams p1{{0.3, -0.4}, {0.7, 1.8}}, p2{{-0.2, 0.5}, {1.5, 0.6}};
  mc_kl(p1, p2, nsvae::kl_diag_gaussians(p1, p2), 2);
  mc_kl(p2, p1, nsvae::kl_diag_gaussians(p2, p1), 3);

  // Pooled samples: pick a batch member uniformly, then sample its posterior.
  const std::size_t batch = 4, dim = 3;
  std::vector<vae::GaussianParams> params;
  Rng pr(4);
  std::uniform_real_distribution<double> um(-1.0, 1.0), uv(0.2, 3.0);
  for (std::size_t b = 0; b < batch; ++b) {
    vae::GaussianParams gp{std::vector<double>(dim), std::vector<double>(dim)};
    for (auto& m : gp.mu) m = um(pr);
    for (auto& v : gp.var) v = uv(pr);
    params.push_back(gp);
  }
  const auto expect = diploss::total_covariance(params);
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, batch - 1);
  std::vector<double> mean(dim, 0.0), second(dim * dim, 0.0), z(dim);
  for (int s = 0; s < n; ++s) {
    const auto& gp = params[pick(rng)];
    for (std::size_t i = 0; i < dim; ++i) z[i] = gp.mu[i] + std::sqrt(gp.var[i]) * g(rng);
    for (std::size_t i = 0; i < dim; ++i) {
      mean[i] += z[i];
      for (std::size_t j = 0; j < dim; ++j) second[i * dim + j] += z[i] * z[j];
    }
  }
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double c = second[i * dim + j] / n - (mean[i] / n) * (mean[j] / n);
      diff2 += (c - expect.at(i, j)) * (c - expect.at(i, j));
      norm2 += expect.at(i, j) * expect.at(i, j);
    }
  }
  const double frob = std::sqrt(diff2 / norm2);
  const double secs = timer.seconds();
  return {worst_kl < 0.01 && frob < 0.02 && secs < kOneMinute,
          "KL Monte-Carlo worst relative deviation " + fmt("%.4f", worst_kl) +
              " (< 0.01); total covariance Frobenius deviation " + fmt("%.4f", frob) +
              " (< 0.02); " + fmt("%.1f s", secs)};
}

Outcome criterion_reduction() {
  int mismatches = 0, trials = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng init(seed);
    const auto model = vae::make_vae(seed % 2 ? vae::Role::kNoise : vae::Role::kSpeech,
                                     {6 + seed % 3, 5, 3}, init);
    const auto batch = toy_batch(3 + seed % 4, 2 + seed % 3, 6 + seed % 3, 100 + seed);
    Rng a(seed + 7), b(seed + 7);
    const double elbo = vae::elbo_loss(model, batch, a).item();
    const double dip = diploss::dip_total_loss(model, batch, diploss::ablation_setting(1), b).item();
    ++trials;
    if (elbo != dip) ++mismatches;
  }
  return {mismatches == 0, std::to_string(trials - mismatches) + "/" + std::to_string(trials) +
                               " random models give bit-identical ELBO and (1,0,0) loss"};
}

Outcome criterion_dsp() {
  // Round trip on 100 seeded random signals, scored on the fully overlapped
  // interior (the first and last hop are covered by a single frame).
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    dsp::Waveform x;
    x.samples.resize(dsp::kFrameLen + 20 * dsp::kHop + seed * 7);
    for (auto& s : x.samples) s = u(rng);
    const auto y = dsp::istft(dsp::stft(x));
    double err = 0.0, ref = 0.0;
    for (std::size_t i = dsp::kHop; i + dsp::kHop < y.size(); ++i) {
      err += (y.samples[i] - x.samples[i]) * (y.samples[i] - x.samples[i]);
      ref += x.samples[i] * x.samples[i];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  const auto w = dsp::hann_window(dsp::kFrameLen);
  double cola = 0.0;
  for (std::size_t k = 0; k < dsp::kHop; ++k) cola = std::max(cola, std::abs(w[k] + w[k + dsp::kHop] - 1.0));

  // Masks from random log-power spectra reaching past the exponent clamp,
  // plus the two extreme corners.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lv(-50.0, 50.0);
  const double big = dsp::lps_to_magnitude(std::vector<double>{1e3})[0];
  const double small = dsp::lps_to_magnitude(std::vector<double>{-1e3})[0];
  double lo = dsp::wiener_mask(small, big), hi = dsp::wiener_mask(big, small);
  std::vector<double> sl(dsp::kNumBins), nl(dsp::kNumBins);
  for (int trial = 0; trial < 1000; ++trial) {
    for (std::size_t k = 0; k < dsp::kNumBins; ++k) {
      sl[k] = lv(rng);
      nl[k] = lv(rng);
    }
    const auto s = dsp::lps_to_magnitude(sl), nm = dsp::lps_to_magnitude(nl);
    for (std::size_t k = 0; k < dsp::kNumBins; ++k) {
      const double mask = dsp::wiener_mask(s[k], nm[k]);
      lo = std::min(lo, mask);
      hi = std::max(hi, mask);
    }
  }
  const bool pass = worst <= 1e-6 && cola <= 1e-15 && lo > 0.0 && hi < 1.0;
  return {pass, "round-trip worst relative error " + fmt("%.2e", worst) +
                    " on 100 signals; COLA deviation " + fmt("%.1e", cola) + "; mask range [" +
                    fmt("%.3e", lo) + ", 1 - " + fmt("%.2e", 1.0 - hi) + "]"};
}

Outcome criterion_si_snr() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  auto zero_mean_noise = [&](std::size_t len) {
    std::vector<double> v(len);
    for (auto& x : v) x = g(rng);
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(len);
    for (auto& x : v) x -= m;
    return v;
  };
  const auto s = zero_mean_noise(4096);
  auto n = zero_mean_noise(4096);
  double dot = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += s[i] * n[i];
    ss += s[i] * s[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) n[i] -= dot / ss * s[i];
  double nn = 0.0;
  for (double x : n) nn += x * x;
  const double gain = std::sqrt(ss / 10.0 / nn);
  std::vector<double> est(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) est[i] = s[i] + gain * n[i];
  const double ten = analysis::si_snr(est, s);

  // Power-of-two scalings are exact in floating point, so SI-SNR must be
  // bit-identical; other scalings agree to rounding.
  const auto other = zero_mean_noise(1000);
  const std::vector<double> ref(s.begin(), s.begin() + 1000);
  const double base = analysis::si_snr(other, ref);
  bool exact = true;
  double drift = 0.0;
  for (double alpha : {1.0 / 1024, 0.25, 2.0, 8.0, 1024.0, 0.3, 3.7, 1e3}) {
    std::vector<double> scaled(other);
    for (auto& x : scaled) x *= alpha;
    const double v = analysis::si_snr(scaled, ref);
    if (std::exp2(std::round(std::log2(alpha))) == alpha) {
      exact = exact && v == base;
    } else {
      drift = std::max(drift, std::abs(v - base));
    }
  }
  const bool pass = std::abs(ten - 10.0) <= 1e-9 && exact && drift <= 1e-10;
  return {pass, "orthogonal case " + fmt("%.12f", ten) + " dB; power-of-two scalings " +
                    (exact ? "bit-identical" : "DIFFER") + ", other scalings within " +
                    fmt("%.1e", drift) + " dB"};
}

int invoke(const std::vector<std::string>& args, std::ostream& log) {
  std::ostringstream out;
  const int code = cli::run(args, out, log);
  log << out.str();
  return code;
}

using Table = std::vector<std::map<std::string, std::string>>;

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> header;
  Table rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (std::getline(in, line)) header = split(line);
  while (std::getline(in, line)) {
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

Outcome criterion_desk(const std::string& config, const fs::path& work, std::ostream& log) {
  Timer timer;
  const auto dir = work / "desk";
  if (invoke({"pvae", "ablation", "--config", config, "--settings", "1,2,3,4", "--out",
              dir.string()}, log) != cli::kExitOk) {
    return {false, "ablation run failed, see " + (work / "acceptance.log").string()};
  }
  const auto table = read_csv(dir / "comparison.csv");
  std::map<int, std::map<std::string, std::string>> by_setting;
  for (const auto& row : table) by_setting[std::stoi(row.at("setting"))] = row;
  if (by_setting.size() != 4) return {false, "comparison.csv lacks four settings"};
  auto num = [&](int s, const char* col) { return std::stod(by_setting.at(s).at(col)); };

  const double improvement = num(3, "si_snr_improvement");
  const double need_a = std::max(kMinImprovementDb, kMargin * kPinnedImprovementDb);
  const bool a = improvement >= need_a;
  const double r1 = num(1, "separation_ratio"), r3 = num(3, "separation_ratio");
  const double need_b = kMargin * kPinnedSeparationRatio;
  const bool b = r3 > r1 && r3 >= need_b;
  int best = 1;
  for (int s = 2; s <= 4; ++s) {
    if (num(s, "si_snr_enhanced") > num(best, "si_snr_enhanced")) best = s;
  }
  const bool c = num(best, "beta") == 0.0;
  const double secs = timer.seconds();
  std::ostringstream d;
  d << "(a) setting 3 improvement " << fmt("%.3f", improvement) << " dB >= " << fmt("%.3f", need_a)
    << (a ? " ok" : " NOT MET") << "; (b) separation ratio setting 3 " << fmt("%.3f", r3)
    << " vs setting 1 " << fmt("%.3f", r1) << ", floor " << fmt("%.3f", need_b)
    << (b ? " ok" : " NOT MET") << "; (c) best setting " << best << (c ? " (beta=0) ok" : " NOT MET")
    << "; " << fmt("%.0f s", secs);
  return {a && b && c, d.str()};
}

// A reduced desk run: the same topology and pipeline with fewer clips and
// epochs, training the four settings on concurrent threads.
constexpr const char* kDeterminismConfig =
    "seed = 11\nhidden = 64\nlatent = 16\n"
    "speech_clips = 6\nnoise_clips = 6\nmixture_clips = 6\neval_clips = 2\n"
    "clip_seconds = 2.064\nmax_epochs = 3\npatience = 2\nbatch_size = 8\nlr = 1e-3\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_tensors(const fs::path& a, const fs::path& b) {
  const auto ta = pipeline::read_checkpoint(a.string()).tensors;
  const auto tb = pipeline::read_checkpoint(b.string()).tensors;
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].shape != tb[i].shape ||
        std::memcmp(ta[i].values.data(), tb[i].values.data(),
                    ta[i].values.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

// Files of `a` that differ from their counterpart in `b`, skipping the run
// manifest (it records the output path). Checkpoints embed the run config;
// with `tensors_only` they are compared on their tensors alone.
std::vector<std::string> differing_files(const fs::path& a, const fs::path& b,
                                         std::map<std::string, int>* counts, bool tensors_only) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (rel.filename() == "manifest.txt") continue;
    if (counts) ++(*counts)[rel.extension().string()];
    bool same = fs::exists(b / rel);
    if (same && tensors_only && rel.extension() == ".ckpt") {
      same = same_tensors(e.path(), b / rel);
    } else if (same) {
      same = slurp(e.path()) == slurp(b / rel);
    }
    if (!same) out.push_back(rel.string());
  }
  return out;
}

Outcome criterion_determinism(const fs::path& work, std::ostream& log) {
  const auto dir = work / "determinism";
  fs::create_directories(dir);
  std::ofstream(dir / "threads4.cfg") << kDeterminismConfig << "threads = 4\n";
  std::ofstream(dir / "threads1.cfg") << kDeterminismConfig << "threads = 1\n";
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"a", "threads4.cfg"}, {"b", "threads4.cfg"}, {"c", "threads1.cfg"}};
  for (const auto& [out, cfg] : runs) {
    if (invoke({"pvae", "ablation", "--config", (dir / cfg).string(), "--settings", "1,2,3,4",
                "--out", (dir / out).string()}, log) != cli::kExitOk) {
      return {false, "ablation run failed"};
    }
  }
  std::map<std::string, int> compared;
  const auto rerun = differing_files(dir / "a", dir / "b", &compared, false);
  const auto threads = differing_files(dir / "a", dir / "c", nullptr, true);
  std::ostringstream d;
  d << "same-config rerun:";
  for (const auto& [ext, count] : compared) d << " " << count << " " << ext;
  d << " files, " << rerun.size() << " differ";
  for (const auto& f : rerun) d << " " << f;
  d << "; 1 vs 4 threads: " << threads.size() << " differ";
  for (const auto& f : threads) d << " " << f;
  const bool covered = compared[".ckpt"] > 0 && compared[".csv"] > 0 && compared[".wav"] > 0;
  return {rerun.empty() && threads.empty() && covered, d.str()};
}

Outcome criterion_checkpoint() {
  Rng rng(8);
  const vae::Topology topo{dsp::kNumBins, 64, 16};
  pipeline::ModelBundle bundle;
  bundle.cvae = vae::make_vae(vae::Role::kSpeech, topo, rng);
  bundle.nvae = vae::make_vae(vae::Role::kNoise, topo, rng);
  bundle.nsvae = nsvae::make_nsvae(topo, rng);
  bundle.cvae_weights = bundle.nvae_weights = diploss::ablation_setting(3);
  const auto bytes = pipeline::encode_checkpoint(pipeline::to_checkpoint(bundle));
  const auto back = pipeline::bundle_from_checkpoint(pipeline::decode_checkpoint(bytes));
  const bool round_trip = pipeline::encode_checkpoint(pipeline::to_checkpoint(back)) == bytes;

  // Flip one byte at a time at a spread of positions covering the header,
  // names, shapes, values, and checksum.
  std::size_t flips = 0, detected = 0, by_checksum = 0;
  const std::size_t stride = std::max<std::size_t>(1, bytes.size() / 5000);
  for (std::size_t i = 0; i < bytes.size(); i += (i < 256 ? 1 : stride)) {
    auto bad = bytes;
    bad[i] ^= static_cast<unsigned char>(1u << (i % 8));
    ++flips;
    try {
      pipeline::decode_checkpoint(bad);
    } catch (const pipeline::LoadError& e) {
      ++detected;
      if (std::string(e.section()) == "checksum") ++by_checksum;
    }
  }
  auto last = bytes;
  last.back() ^= 0x80;
  try {
    pipeline::decode_checkpoint(last);
  } catch (const pipeline::LoadError&) {
    ++detected;
  }
  ++flips;
  return {round_trip && detected == flips,
          std::string("bundle round trip ") + (round_trip ? "bit-exact" : "DIFFERS") + " (" +
              std::to_string(bytes.size()) + " bytes); " + std::to_string(detected) + "/" +
              std::to_string(flips) + " single-byte corruptions detected (" +
              std::to_string(by_checksum) + " by checksum)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the pvae engine", "pvae_acceptance"};
  std::string desk_config = PVAE_SOURCE_DIR "/configs/desk.cfg";
  std::string work = (fs::temp_directory_path() / "pvae_acceptance").string();
  bool skip_desk = false;
  app.add_option("--desk-config", desk_config, "configuration of the desk-scale run")
      ->check(CLI::ExistingFile);
  app.add_option("--work", work, "scratch directory for run outputs");
  app.add_flag("--skip-desk", skip_desk, "skip the desk-scale training run");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  std::ofstream log(fs::path(work) / "acceptance.log");

  bool all = true;
  auto report = [&](int number, const char* title, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << number << " " << (o.pass ? "PASS" : "FAIL") << "  " << title
              << ": " << o.detail << std::endl;
  };
  report(1, "gradient checks", criterion_gradients);
  report(2, "closed-form oracles", criterion_oracles);
  report(3, "reduction identity", criterion_reduction);
  report(4, "DSP", criterion_dsp);
  report(5, "SI-SNR properties", criterion_si_snr);
  if (skip_desk) {
    std::cout << "criterion 6 SKIP  desk-scale ablation: --skip-desk given" << std::endl;
  } else {
    report(6, "desk-scale ablation", [&] { return criterion_desk(desk_config, work, log); });
  }
  report(7, "determinism", [&] { return criterion_determinism(work, log); });
  report(8, "checkpoint robustness", criterion_checkpoint);
  return all ? 0 : 1;
}
