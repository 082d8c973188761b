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

#include "pvae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace pvae::pipeline {
namespace {

// Samples [hop, n - hop): the span where every sample is covered by two
// frames, i.e. where synthesis is exact.
dsp::Waveform interior(const dsp::Waveform& wav, std::size_t n) {
  if (n < 2 * dsp::kHop + dsp::kFrameLen || wav.size() < n) {
    throw std::invalid_argument("evaluate: clip too short to score");
  }
  dsp::Waveform out;
  out.sample_rate = wav.sample_rate;
  out.samples.assign(wav.samples.begin() + static_cast<std::ptrdiff_t>(dsp::kHop),
                     wav.samples.begin() + static_cast<std::ptrdiff_t>(n - dsp::kHop));
  return out;
}

std::vector<double> improvement(std::span<const analysis::ClipMetrics> clips) {
  std::vector<double> out;
  for (const auto& c : clips) out.push_back(c.si_snr_enhanced - c.si_snr_noisy);
  return out;
}

template <typename Field>
analysis::MeanStdErr summarize(std::span<const analysis::ClipMetrics> clips, Field field) {
  std::vector<double> v;
  for (const auto& c : clips) v.push_back(c.*field);
  return analysis::mean_std_err(v);
}

}  // namespace

Corpus synth_corpus(const DataConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Corpus c;
  c.speech = synth_dataset(SignalKind::kSpeechLike, cfg.speech_clips, cfg.clip_seconds, rng);
  c.noise = synth_dataset(SignalKind::kNoiseLike, cfg.noise_clips, cfg.clip_seconds, rng);
  c.train_mixtures = make_mixtures(c.speech, c.noise, cfg.mixture_clips, cfg.snr_min_db,
                                   cfg.snr_max_db, rng);
  const auto eval_speech =
      synth_dataset(SignalKind::kSpeechLike, cfg.eval_clips, cfg.clip_seconds, rng);
  const auto eval_noise =
      synth_dataset(SignalKind::kNoiseLike, cfg.eval_clips, cfg.clip_seconds, rng);
  c.eval_mixtures = make_mixtures(eval_speech, eval_noise, cfg.eval_clips, cfg.eval_snr_db,
                                  cfg.eval_snr_db, rng);
  return c;
}

std::pair<analysis::LatentCloud, analysis::LatentCloud> latent_clouds(
    const nsvae::NsvaeModel& model, std::span<const MixTriple> mixtures) {
  analysis::LatentCloud speech{{}, analysis::LatentLabel::kSpeech};
  analysis::LatentCloud noise{{}, analysis::LatentLabel::kNoise};
  for (const auto& m : mixtures) {
    auto means = latent_means(model, m.mixture);
    std::move(means.speech.begin(), means.speech.end(), std::back_inserter(speech.points));
    std::move(means.noise.begin(), means.noise.end(), std::back_inserter(noise.points));
  }
  return {std::move(speech), std::move(noise)};
}

EvalSummary evaluate_bundle(const ModelBundle& bundle, std::span<const MixTriple> eval,
                            const EnhanceOptions& options) {
  if (eval.empty()) throw std::invalid_argument("evaluate_bundle: no evaluation mixtures");
  EvalSummary s;
  s.min_mask = std::numeric_limits<double>::infinity();
  s.max_mask = -std::numeric_limits<double>::infinity();
  analysis::LatentCloud speech{{}, analysis::LatentLabel::kSpeech};
  analysis::LatentCloud noise{{}, analysis::LatentLabel::kNoise};
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto trace = enhance_traced(bundle, eval[i].mixture, options);
    const std::size_t n = trace.enhanced.size();
    const auto clean = interior(eval[i].speech, n);
    const auto noisy = interior(eval[i].mixture, n);
    const auto enhanced = interior(trace.enhanced, n);
    char id[32];
    std::snprintf(id, sizeof(id), "eval_%03zu", i);
    s.clips.push_back({id, analysis::si_snr(noisy, clean), analysis::si_snr(enhanced, clean),
                       analysis::log_spectral_distance(noisy, clean),
                       analysis::log_spectral_distance(enhanced, clean)});
    for (double m : trace.mask) {
      s.min_mask = std::min(s.min_mask, m);
      s.max_mask = std::max(s.max_mask, m);
    }
    speech.points.insert(speech.points.end(), trace.speech_mean.begin(), trace.speech_mean.end());
    noise.points.insert(noise.points.end(), trace.noise_mean.begin(), trace.noise_mean.end());
  }
  using analysis::ClipMetrics;
  s.si_snr_noisy = summarize(s.clips, &ClipMetrics::si_snr_noisy);
  s.si_snr_enhanced = summarize(s.clips, &ClipMetrics::si_snr_enhanced);
  s.si_snr_improvement = analysis::mean_std_err(improvement(s.clips));
  s.lsd_noisy = summarize(s.clips, &ClipMetrics::lsd_noisy);
  s.lsd_enhanced = summarize(s.clips, &ClipMetrics::lsd_enhanced);
  s.separation = analysis::separation_stats(speech, noise);
  return s;
}

TrainedSetting train_setting(const ExperimentConfig& cfg, const Corpus& corpus,
                             const diploss::LossWeights& weights, const ProgressFn& progress) {
  weights.validate();
  const SeedPlan seeds = derive_seeds(cfg.train.seed);
  auto stage = [&](const char* name) -> EpochCallback {
    if (!progress) return nullptr;
    return [&progress, name](const EpochRecord& r) { progress(name, r); };
  };

  TrainConfig pre = cfg.train;
  pre.loss_weights = weights;
  pre.seed = seeds.cvae;
  auto cvae = pretrain_vae(vae::Role::kSpeech, corpus.speech, pre, cfg.topology, stage("cvae"));
  pre.seed = seeds.nvae;
  auto nvae = pretrain_vae(vae::Role::kNoise, corpus.noise, pre, cfg.topology, stage("nvae"));

  TrainConfig ns = cfg.train;
  ns.seed = seeds.nsvae;
  const auto direction =
      cfg.reverse_kl ? nsvae::KlDirection::kCleanToNoisy : nsvae::KlDirection::kNoisyToClean;
  auto nsvae = train_nsvae(cvae.model, nvae.model, corpus.train_mixtures, ns, direction,
                           stage("nsvae"));

  TrainedSetting out;
  out.bundle.cvae = std::move(cvae.model);
  out.bundle.nvae = std::move(nvae.model);
  out.bundle.nsvae = std::move(nsvae.model);
  out.bundle.cvae_weights = weights;
  out.bundle.nvae_weights = weights;
  ExperimentConfig snapshot = cfg;
  snapshot.train.loss_weights = weights;
  out.bundle.run_config = snapshot.to_key_values();
  out.cvae_log = std::move(cvae.log);
  out.nvae_log = std::move(nvae.log);
  out.nsvae_log = std::move(nsvae.log);
  return out;
}

std::vector<SettingReport> run_ablation(const ExperimentConfig& cfg, const Corpus& corpus,
                                        const std::vector<int>& settings,
                                        const ProgressFn& progress) {
  if (settings.empty()) throw std::invalid_argument("run_ablation: no settings");
  for (int s : settings) diploss::ablation_setting(s);  // validates numbering up front

  std::vector<SettingReport> reports(settings.size());
  EnhanceOptions options;
  options.sampled = cfg.sampled_inference;
  options.seed = derive_seeds(cfg.train.seed).eval;

  std::mutex progress_mutex;
  auto job = [&](std::size_t i) {
    const int number = settings[i];
    ProgressFn tagged;
    if (progress) {
      tagged = [&, number](const std::string& stage, const EpochRecord& r) {
        std::lock_guard lock(progress_mutex);
        progress("setting" + std::to_string(number) + "/" + stage, r);
      };
    }
    auto& rep = reports[i];
    rep.setting = number;
    rep.weights = diploss::ablation_setting(number);
    rep.trained = train_setting(cfg, corpus, rep.weights, tagged);
    rep.eval = evaluate_bundle(rep.trained.bundle, corpus.eval_mixtures, options);
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.threads)), settings.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < settings.size(); ++i) job(i);
    return reports;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(settings.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < settings.size(); i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

std::string comparison_csv(std::span<const SettingReport> reports) {
  std::string out =
      "setting,beta,lambda_od,lambda_d,si_snr_noisy,si_snr_enhanced,si_snr_improvement,"
      "si_snr_improvement_stderr,lsd_noisy,lsd_enhanced,separation_ratio,"
      "centroid_distance,within_spread\n";
  char buf[512];
  for (const auto& r : reports) {
    const auto& e = r.eval;
    std::snprintf(buf, sizeof(buf),
                  "%d,%g,%g,%g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.setting,
                  r.weights.beta, r.weights.lambda_od, r.weights.lambda_d, e.si_snr_noisy.mean,
                  e.si_snr_enhanced.mean, e.si_snr_improvement.mean,
                  e.si_snr_improvement.std_err, e.lsd_noisy.mean, e.lsd_enhanced.mean,
                  e.separation.ratio, e.separation.centroid_distance,
                  e.separation.mean_within_spread);
    out += buf;
  }
  return out;
}

std::size_t best_setting(std::span<const SettingReport> reports) {
  if (reports.empty()) throw std::invalid_argument("best_setting: no reports");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].eval.si_snr_enhanced.mean > reports[best].eval.si_snr_enhanced.mean) best = i;
  }
  return best;
}

}  // namespace pvae::pipeline
