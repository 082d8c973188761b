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

#include "pvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pvae/diploss.hpp"

namespace pvae::pipeline {
namespace {

using Segments = std::vector<std::vector<dsp::LpsFrame>>;

std::vector<std::vector<double>> snapshot(std::span<const Tensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void restore(std::span<Tensor> params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

std::size_t validation_count(std::size_t n, double fraction) {
  if (n < 2) throw std::invalid_argument("training needs at least 2 clips");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

vae::SequenceBatch gather(const Segments& segments, std::span<const std::size_t> idx) {
  Segments picked;
  picked.reserve(idx.size());
  for (auto i : idx) picked.push_back(segments[i]);
  return vae::make_batch(picked);
}

// Frame-weighted mean of `loss_of` over consecutive chunks of the items.
template <typename LossOf>
double chunked_mean(std::size_t num_items, std::size_t chunk, LossOf loss_of) {
  ad::NoGradGuard no_grad;
  double total = 0.0;
  std::size_t weight = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < num_items; start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(num_items, start + chunk); ++i) idx.push_back(i);
    total += loss_of(idx) * static_cast<double>(idx.size());
    weight += idx.size();
  }
  return total / static_cast<double>(weight);
}

constexpr std::uint64_t kValidationSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::string log_csv(const TrainLog& log) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[128];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
    out += buf;
  }
  return out;
}

void write_log_csv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << log_csv(log);
}

TrainLog fit(std::span<Tensor> params, const TrainConfig& cfg, std::size_t num_items,
             const BatchLossFn& batch_loss, const ValidationFn& validation, Rng& rng,
             const EpochCallback& on_epoch) {
  cfg.validate();
  if (num_items == 0) throw std::invalid_argument("fit: no training items");
  nn::AdamState adam;
  adam.lr = cfg.lr;

  TrainLog log;
  log.best_val_loss = std::numeric_limits<double>::infinity();
  auto best = snapshot(params);
  int since_best = 0;

  std::vector<std::size_t> order(num_items);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < num_items; start += cfg.batch_size) {
      const std::size_t end = std::min(num_items, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      for (auto& p : params) p.zero_grad();
      Tensor loss = batch_loss(idx, rng);
      if (!std::isfinite(loss.item())) {
        throw ad::NumericError("fit: non-finite training loss at epoch " +
                               std::to_string(epoch));
      }
      ad::backward(loss);
      nn::clip_grad_norm(params, cfg.grad_clip);
      nn::adam_step(params, adam);
      total += loss.item() * static_cast<double>(idx.size());
    }
    for (auto& p : params) p.zero_grad();

    EpochRecord rec{epoch, total / static_cast<double>(num_items), validation()};
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < log.best_val_loss) {
      log.best_val_loss = rec.val_loss;
      log.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      log.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return log;
}

PretrainResult pretrain_vae(vae::Role role, std::span<const dsp::Waveform> clips,
                            const TrainConfig& cfg, const vae::Topology& topology,
                            const EpochCallback& on_epoch) {
  if (clips.empty()) throw std::invalid_argument("pretrain_vae: dataset is empty");
  cfg.validate();
  const std::size_t n_val = validation_count(clips.size(), cfg.val_fraction);
  Segments train, val;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    auto segs = segment(waveform_lps(clips[i]), cfg.segment_len);
    auto& dst = i < clips.size() - n_val ? train : val;
    dst.insert(dst.end(), segs.begin(), segs.end());
  }
  if (train.empty() || val.empty()) {
    throw std::invalid_argument("pretrain_vae: clips too short for segment_len");
  }

  Rng rng(cfg.seed);
  PretrainResult result{vae::make_vae(role, topology, rng), {}};
  auto& model = result.model;
  const auto weights = cfg.loss_weights;

  auto batch_loss = [&](std::span<const std::size_t> idx, Rng& r) {
    return diploss::dip_total_loss(model, gather(train, idx), weights, r);
  };
  auto validation = [&] {
    Rng val_rng(cfg.seed ^ kValidationSalt);
    return chunked_mean(val.size(), cfg.batch_size, [&](std::span<const std::size_t> idx) {
      return diploss::dip_total_loss(model, gather(val, idx), weights, val_rng).item();
    });
  };
  auto params = model.parameters();
  result.log = fit(params, cfg, train.size(), batch_loss, validation, rng, on_epoch);
  return result;
}

NsvaeResult train_nsvae(const vae::VaeModel& cvae, const vae::VaeModel& nvae,
                        std::span<const MixTriple> triples, const TrainConfig& cfg,
                        nsvae::KlDirection direction, const EpochCallback& on_epoch) {
  if (triples.empty()) throw std::invalid_argument("train_nsvae: no training mixtures");
  if (cvae.topology.latent != nvae.topology.latent ||
      cvae.topology.num_bins != nvae.topology.num_bins) {
    throw std::invalid_argument("train_nsvae: pretrained models disagree on dimensions");
  }
  cfg.validate();
  const std::size_t n_val = validation_count(triples.size(), cfg.val_fraction);
  struct Aligned {
    Segments y, x, v;
  } train, val;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto& dst = i < triples.size() - n_val ? train : val;
    auto y = segment(waveform_lps(triples[i].mixture), cfg.segment_len);
    auto x = segment(waveform_lps(triples[i].speech), cfg.segment_len);
    auto v = segment(waveform_lps(triples[i].noise), cfg.segment_len);
    dst.y.insert(dst.y.end(), y.begin(), y.end());
    dst.x.insert(dst.x.end(), x.begin(), x.end());
    dst.v.insert(dst.v.end(), v.begin(), v.end());
  }
  if (train.y.empty() || val.y.empty()) {
    throw std::invalid_argument("train_nsvae: clips too short for segment_len");
  }

  Rng rng(cfg.seed);
  vae::Topology topo = cvae.topology;
  NsvaeResult result{nsvae::make_nsvae(topo, rng), {}};
  auto& model = result.model;

  auto loss_on = [&](const Aligned& set, std::span<const std::size_t> idx) {
    return nsvae::permutation_loss(model, cvae, nvae, gather(set.y, idx), gather(set.x, idx),
                                   gather(set.v, idx), direction);
  };
  auto batch_loss = [&](std::span<const std::size_t> idx, Rng&) { return loss_on(train, idx); };
  auto validation = [&] {
    return chunked_mean(val.y.size(), cfg.batch_size, [&](std::span<const std::size_t> idx) {
      return loss_on(val, idx).item();
    });
  };
  auto params = model.parameters();
  result.log = fit(params, cfg, train.y.size(), batch_loss, validation, rng, on_epoch);
  return result;
}

SeedPlan derive_seeds(std::uint64_t seed) {
  return {seed, seed + 101, seed + 202, seed + 303, seed + 404};
}

}  // namespace pvae::pipeline
