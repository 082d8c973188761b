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

#include "pvae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace pvae::analysis {
namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

double si_snr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("si_snr: length mismatch");
  }
  if (reference.empty()) throw std::invalid_argument("si_snr: empty signals");
  const double n = static_cast<double>(reference.size());
  const double est_mean = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  const double ref_mean = std::accumulate(reference.begin(), reference.end(), 0.0) / n;

  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = reference[i] - ref_mean;
    dot += (estimate[i] - est_mean) * s;
    ref_energy += s * s;
  }
  if (ref_energy == 0.0) {
    throw std::invalid_argument("si_snr: reference has zero energy");
  }
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, error_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * (reference[i] - ref_mean);
    const double e = (estimate[i] - est_mean) - t;
    target_energy += t * t;
    error_energy += e * e;
  }
  if (error_energy == 0.0) return kPerfectSiSnrDb;
  if (target_energy == 0.0) return -kPerfectSiSnrDb;
  return 10.0 * std::log10(target_energy / error_energy);
}

double si_snr(const dsp::Waveform& estimate, const dsp::Waveform& reference) {
  return si_snr(estimate.samples, reference.samples);
}

double log_spectral_distance(const dsp::Waveform& estimate,
                             const dsp::Waveform& reference) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("log_spectral_distance: length mismatch");
  }
  const auto est = dsp::lps(dsp::stft(estimate));
  const auto ref = dsp::lps(dsp::stft(reference));
  double total = 0.0;
  for (std::size_t n = 0; n < est.size(); ++n) {
    double acc = 0.0;
    for (std::size_t f = 0; f < est[n].size(); ++f) {
      const double d = 10.0 * (est[n][f] - ref[n][f]);
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(est[n].size()));
  }
  return total / static_cast<double>(est.size());
}

MeanStdErr mean_std_err(std::span<const double> values) {
  MeanStdErr out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

std::string to_string(LatentLabel label) {
  return label == LatentLabel::kSpeech ? "speech" : "noise";
}

std::array<double, 2> PcaModel::project(std::span<const double> point) const {
  if (point.size() != mean.size()) throw std::invalid_argument("project: dimension mismatch");
  std::array<double, 2> out{};
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < point.size(); ++i) {
      out[k] += (point[i] - mean[i]) * components[k][i];
    }
  }
  return out;
}

EigenDecomposition symmetric_eigen(std::span<const double> matrix, std::size_t n) {
  if (matrix.size() != n * n) throw std::invalid_argument("symmetric_eigen: size mismatch");
  std::vector<double> a(matrix.begin(), matrix.end());
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) s += a[i * n + j] * a[i * n + j];
      }
    }
    return s;
  };
  double scale = 0.0;
  for (double x : a) scale += x * x;

  for (int sweep = 0; sweep < 100 && off_norm() > 1e-30 * std::max(scale, 1e-300); ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x * n + x] > a[y * n + y];
  });
  EigenDecomposition out;
  for (std::size_t k : order) {
    out.values.push_back(a[k * n + k]);
    std::vector<double> vec(n);
    for (std::size_t i = 0; i < n; ++i) vec[i] = v[i * n + k];
    out.vectors.push_back(std::move(vec));
  }
  return out;
}

PcaModel pca_fit(std::span<const std::vector<double>> points) {
  if (points.size() < 3) throw std::invalid_argument("pca_fit: need at least 3 points");
  const std::size_t dim = points[0].size();
  if (dim < 2) throw std::invalid_argument("pca_fit: dimension must be >= 2");
  PcaModel model;
  model.mean.assign(dim, 0.0);
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("pca_fit: ragged points");
    for (std::size_t i = 0; i < dim; ++i) model.mean[i] += p[i];
  }
  const double inv_n = 1.0 / static_cast<double>(points.size());
  for (auto& m : model.mean) m *= inv_n;
  std::vector<double> cov(dim * dim, 0.0);
  for (const auto& p : points) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double di = p[i] - model.mean[i];
      for (std::size_t j = i; j < dim; ++j) cov[i * dim + j] += di * (p[j] - model.mean[j]);
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      cov[i * dim + j] *= inv_n;
      cov[j * dim + i] = cov[i * dim + j];
    }
  }
  auto eig = symmetric_eigen(cov, dim);
  for (std::size_t k = 0; k < 2; ++k) {
    auto vec = eig.vectors[k];
    double norm = 0.0;
    for (double x : vec) norm += x * x;
    norm = std::sqrt(norm);
    auto largest = std::max_element(vec.begin(), vec.end(), [](double x, double y) {
      return std::abs(x) < std::abs(y);
    });
    const double sign = *largest < 0.0 ? -1.0 : 1.0;
    for (auto& x : vec) x *= sign / norm;
    model.components[k] = std::move(vec);
    model.explained_variance[k] = std::max(eig.values[k], 0.0);
  }
  return model;
}

PcaModel pca_fit(std::span<const LatentCloud> clouds) {
  std::vector<std::vector<double>> all;
  for (const auto& c : clouds) all.insert(all.end(), c.points.begin(), c.points.end());
  return pca_fit(all);
}

namespace {

std::vector<double> centroid(const LatentCloud& cloud) {
  std::vector<double> c(cloud.points[0].size(), 0.0);
  for (const auto& p : cloud.points) {
    if (p.size() != c.size()) throw std::invalid_argument("separation_stats: ragged cloud");
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += p[i];
  }
  for (auto& x : c) x /= static_cast<double>(cloud.points.size());
  return c;
}

double rms_spread(const LatentCloud& cloud, const std::vector<double>& c) {
  double acc = 0.0;
  for (const auto& p : cloud.points) {
    for (std::size_t i = 0; i < c.size(); ++i) acc += (p[i] - c[i]) * (p[i] - c[i]);
  }
  return std::sqrt(acc / static_cast<double>(cloud.points.size()));
}

}  // namespace

SeparationStats separation_stats(const LatentCloud& speech, const LatentCloud& noise) {
  if (speech.points.empty() || noise.points.empty()) {
    throw std::invalid_argument("separation_stats: empty cloud");
  }
  const auto cs = centroid(speech);
  const auto cn = centroid(noise);
  if (cs.size() != cn.size()) throw std::invalid_argument("separation_stats: dimension mismatch");
  SeparationStats s;
  double d2 = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) d2 += (cs[i] - cn[i]) * (cs[i] - cn[i]);
  s.centroid_distance = std::sqrt(d2);
  s.mean_within_spread = 0.5 * (rms_spread(speech, cs) + rms_spread(noise, cn));
  s.ratio = s.mean_within_spread > 0.0 ? s.centroid_distance / s.mean_within_spread : 0.0;
  return s;
}

void write_latent_csv(const std::string& path, std::span<const LatentPoint> points) {
  auto out = open_out(path);
  out << "frame,label,pc1,pc2\n";
  for (const auto& p : points) {
    out << p.frame << ',' << to_string(p.label) << ',' << fmt(p.pc1) << ','
        << fmt(p.pc2) << '\n';
  }
}

void write_latent_svg(const std::string& path, std::span<const LatentPoint> points,
                      const std::string& title) {
  constexpr double kW = 640, kH = 480, kMargin = 60;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points[0].pc1;
    ymin = ymax = points[0].pc2;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.pc1);
      xmax = std::max(xmax, p.pc1);
      ymin = std::min(ymin, p.pc2);
      ymax = std::max(ymax, p.pc2);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  auto sx = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * (kW - 2 * kMargin); };
  auto sy = [&](double y) { return kH - kMargin - (y - ymin) / (ymax - ymin) * (kH - 2 * kMargin); };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 20
      << "\" text-anchor=\"middle\" font-size=\"13\">PC 1</text>\n";
  out << "<text x=\"18\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << kH / 2 << ")\">PC 2</text>\n";
  for (const auto& p : points) {
    const char* color = p.label == LatentLabel::kSpeech ? "#1f77b4" : "#d62728";
    out << "<circle cx=\"" << fmt(sx(p.pc1), "%.2f") << "\" cy=\"" << fmt(sy(p.pc2), "%.2f")
        << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
  }
  out << "<circle cx=\"" << kW - 140 << "\" cy=\"50\" r=\"5\" fill=\"#1f77b4\"/>"
      << "<text x=\"" << kW - 128 << "\" y=\"55\" font-size=\"13\">speech z_x</text>\n";
  out << "<circle cx=\"" << kW - 140 << "\" cy=\"70\" r=\"5\" fill=\"#d62728\"/>"
      << "<text x=\"" << kW - 128 << "\" y=\"75\" font-size=\"13\">noise z_v</text>\n";
  out << "</svg>\n";
}

void write_metrics_csv(const std::string& path, std::span<const ClipMetrics> rows) {
  auto out = open_out(path);
  out << "clip_id,si_snr_noisy,si_snr_enhanced,lsd_noisy,lsd_enhanced\n";
  for (const auto& r : rows) {
    out << r.clip_id << ',' << fmt(r.si_snr_noisy) << ',' << fmt(r.si_snr_enhanced) << ','
        << fmt(r.lsd_noisy) << ',' << fmt(r.lsd_enhanced) << '\n';
  }
}

}  // namespace pvae::analysis
