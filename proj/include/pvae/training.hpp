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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pvae/config.hpp"
#include "pvae/dataset.hpp"
#include "pvae/nsvae.hpp"
#include "pvae/vae.hpp"

namespace pvae::pipeline {

using ad::Tensor;

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// CSV with header `epoch,train_loss,val_loss`.
std::string log_csv(const TrainLog& log);
void write_log_csv(const std::string& path, const TrainLog& log);

using BatchLossFn = std::function<Tensor(std::span<const std::size_t>, Rng&)>;
using ValidationFn = std::function<double()>;
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam with global-norm clipping. Items are shuffled each epoch;
/// training stops after `patience` epochs without a new validation minimum
/// and the parameters of the best epoch are restored.
TrainLog fit(std::span<Tensor> params, const TrainConfig& cfg, std::size_t num_items,
             const BatchLossFn& batch_loss, const ValidationFn& validation,
             Rng& rng, const EpochCallback& on_epoch = nullptr);

struct PretrainResult {
  vae::VaeModel model;
  TrainLog log;
};

/// Trains a CVAE/NVAE on the given clips with the configured loss weights.
/// The last val_fraction of clips (at least one) is held out.
PretrainResult pretrain_vae(vae::Role role, std::span<const dsp::Waveform> clips,
                            const TrainConfig& cfg, const vae::Topology& topology,
                            const EpochCallback& on_epoch = nullptr);

struct NsvaeResult {
  nsvae::NsvaeModel model;
  TrainLog log;
};

/// Trains the noisy-speech encoder against frozen pretrained encoders.
NsvaeResult train_nsvae(const vae::VaeModel& cvae, const vae::VaeModel& nvae,
                        std::span<const MixTriple> triples, const TrainConfig& cfg,
                        nsvae::KlDirection direction = nsvae::KlDirection::kNoisyToClean,
                        const EpochCallback& on_epoch = nullptr);

/// Seeds for the sub-jobs of one run, derived from the run seed.
struct SeedPlan {
  std::uint64_t data;
  std::uint64_t cvae;
  std::uint64_t nvae;
  std::uint64_t nsvae;
  std::uint64_t eval;
};
SeedPlan derive_seeds(std::uint64_t seed);

}  // namespace pvae::pipeline
