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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvae/analysis.hpp"
#include "pvae/checkpoint.hpp"
#include "pvae/config.hpp"
#include "pvae/dataset.hpp"
#include "pvae/enhance.hpp"
#include "pvae/training.hpp"

namespace pvae::pipeline {

/// Synthetic corpus of one run. Pretraining clips feed the CVAE/NVAE and are
/// remixed for NSVAE training; evaluation mixtures come from separately
/// generated clips at a single SNR.
struct Corpus {
  std::vector<dsp::Waveform> speech;
  std::vector<dsp::Waveform> noise;
  std::vector<MixTriple> train_mixtures;
  std::vector<MixTriple> eval_mixtures;
};

Corpus synth_corpus(const DataConfig& cfg, std::uint64_t seed);

struct EvalSummary {
  std::vector<analysis::ClipMetrics> clips;
  analysis::MeanStdErr si_snr_noisy;
  analysis::MeanStdErr si_snr_enhanced;
  analysis::MeanStdErr si_snr_improvement;
  analysis::MeanStdErr lsd_noisy;
  analysis::MeanStdErr lsd_enhanced;
  analysis::SeparationStats separation;
  double min_mask = 0.0;
  double max_mask = 0.0;
};

/// Enhances every evaluation mixture and scores it against its clean
/// component over the fully overlapped interior of the reconstruction (the
/// first and last hop are excluded). Latent separation is measured
/// on the NSVAE posterior means of all evaluation frames.
EvalSummary evaluate_bundle(const ModelBundle& bundle, std::span<const MixTriple> eval,
                            const EnhanceOptions& options = {});

/// Speech and noise clouds of NSVAE posterior means over the given mixtures.
std::pair<analysis::LatentCloud, analysis::LatentCloud> latent_clouds(
    const nsvae::NsvaeModel& model, std::span<const MixTriple> mixtures);

struct TrainedSetting {
  ModelBundle bundle;
  TrainLog cvae_log;
  TrainLog nvae_log;
  TrainLog nsvae_log;
};

using ProgressFn = std::function<void(const std::string& stage, const EpochRecord&)>;

/// Pretrains both VAEs with `weights`, then trains the NSVAE against them.
/// Every setting of a run uses the same initialization seeds so that only
/// the loss weights differ.
TrainedSetting train_setting(const ExperimentConfig& cfg, const Corpus& corpus,
                             const diploss::LossWeights& weights,
                             const ProgressFn& progress = nullptr);

struct SettingReport {
  int setting = 0;
  diploss::LossWeights weights;
  TrainedSetting trained;
  EvalSummary eval;
};

/// Trains and evaluates each numbered ablation setting. With cfg.threads > 1
/// settings run concurrently; results do not depend on the thread count.
std::vector<SettingReport> run_ablation(const ExperimentConfig& cfg, const Corpus& corpus,
                                        const std::vector<int>& settings,
                                        const ProgressFn& progress = nullptr);

/// One row per setting:
/// setting,beta,lambda_od,lambda_d,si_snr_noisy,si_snr_enhanced,
/// si_snr_improvement,si_snr_improvement_stderr,lsd_noisy,lsd_enhanced,
/// separation_ratio,centroid_distance,within_spread
std::string comparison_csv(std::span<const SettingReport> reports);

/// Index into `reports` of the highest mean enhanced SI-SNR.
std::size_t best_setting(std::span<const SettingReport> reports);

}  // namespace pvae::pipeline
