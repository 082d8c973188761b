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

#include "pvae/cli.hpp"

#include <fftw3.h>
#include <zlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "pvae/experiment.hpp"

namespace pvae::cli {
namespace {

namespace fs = std::filesystem;
using pipeline::ExperimentConfig;

// Raised for command-line problems found after parsing (bad value lists,
// missing inputs named on the command line).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string role;
  std::string settings = "1,2,3,4";
  std::string bundle;
  std::string in;
};

ExperimentConfig load_config(const Options& o) {
  pipeline::KeyValueConfig kv;
  if (!o.config.empty()) kv = pipeline::KeyValueConfig::load(o.config);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  return ExperimentConfig::from(kv);
}

std::vector<int> parse_settings(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.size() != 1 || item[0] < '1' || item[0] > '4') {
      throw UsageError("--settings: '" + item + "' is not one of 1,2,3,4");
    }
    const int n = item[0] - '0';
    if (std::find(out.begin(), out.end(), n) != out.end()) {
      throw UsageError("--settings: setting " + item + " listed twice");
    }
    out.push_back(n);
  }
  if (out.empty()) throw UsageError("--settings: empty list");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

// Written before any work starts so interrupted runs can be diagnosed.
void write_manifest(const fs::path& path, const std::string& command,
                    const std::vector<std::string>& args, const ExperimentConfig* cfg) {
  pipeline::KeyValueConfig kv;
  std::string argv;
  for (std::size_t i = 1; i < args.size(); ++i) argv += (i > 1 ? " " : "") + args[i];
  kv.set("command", command);
  kv.set("argv", argv);
  kv.set("pvae_version", kVersion);
  kv.set("compiler", __VERSION__);
  kv.set("fftw_version", fftw_version);
  kv.set("zlib_version", ZLIB_VERSION);
  if (cfg) {
    kv.set("seed", std::to_string(cfg->train.seed));
    const auto cfg_kv = cfg->to_key_values();
    for (const auto& [k, v] : cfg_kv.values()) kv.set("config." + k, v);
  }
  write_text(path, "# pvae run manifest\n" + kv.to_text());
}

fs::path prepare_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::string clip_name(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.wav", stem, i);
  return buf;
}

std::vector<dsp::Waveform> read_wav_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("--in: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<dsp::Waveform> out;
  for (const auto& f : files) out.push_back(dsp::read_wav(f.string()));
  if (out.empty()) throw std::invalid_argument("no .wav files in " + dir);
  return out;
}

pipeline::ProgressFn progress_printer(std::ostream& err) {
  return [&err](const std::string& stage, const pipeline::EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % 10 == 0) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s epoch %d train %.4f val %.4f\n", stage.c_str(),
                    r.epoch, r.train_loss, r.val_loss);
      err << buf << std::flush;
    }
  };
}

pipeline::EpochCallback stage_printer(std::ostream& err, const std::string& stage) {
  auto p = progress_printer(err);
  return [p, stage](const pipeline::EpochRecord& r) { p(stage, r); };
}

void write_latent_outputs(const fs::path& dir, const nsvae::NsvaeModel& model,
                          std::span<const pipeline::MixTriple> mixtures, const std::string& title,
                          std::ostream& out) {
  auto [speech, noise] = pipeline::latent_clouds(model, mixtures);
  const analysis::LatentCloud clouds[] = {speech, noise};
  const auto pca = analysis::pca_fit(clouds);
  std::vector<analysis::LatentPoint> points;
  for (const auto& cloud : clouds) {
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      const auto p = pca.project(cloud.points[i]);
      points.push_back({i, cloud.label, p[0], p[1]});
    }
  }
  analysis::write_latent_csv((dir / "latent.csv").string(), points);
  analysis::write_latent_svg((dir / "latent.svg").string(), points, title);
  const auto sep = analysis::separation_stats(speech, noise);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "centroid_distance = %.6f\nmean_within_spread = %.6f\nratio = %.6f\n",
                sep.centroid_distance, sep.mean_within_spread, sep.ratio);
  write_text(dir / "separation.txt", buf);
  out << buf;
}

// --- commands ----------------------------------------------------------

int cmd_synth_data(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "synth-data", args, &cfg);
  const auto corpus = pipeline::synth_corpus(cfg.data, pipeline::derive_seeds(cfg.train.seed).data);
  auto dump = [&](const fs::path& sub, const char* stem, std::span<const dsp::Waveform> clips) {
    fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      dsp::write_wav((dir / sub / clip_name(stem, i)).string(), clips[i]);
    }
  };
  auto dump_mix = [&](const fs::path& sub, std::span<const pipeline::MixTriple> mixes) {
    fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < mixes.size(); ++i) {
      dsp::write_wav((dir / sub / clip_name("mix", i)).string(), mixes[i].mixture);
      dsp::write_wav((dir / sub / clip_name("clean", i)).string(), mixes[i].speech);
      dsp::write_wav((dir / sub / clip_name("noise", i)).string(), mixes[i].noise);
    }
  };
  dump("speech", "speech", corpus.speech);
  dump("noise", "noise", corpus.noise);
  dump_mix("train_mixtures", corpus.train_mixtures);
  dump_mix("eval", corpus.eval_mixtures);
  out << "wrote corpus to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Options& o, const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
  const auto role = vae::role_from_string(o.role);
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "pretrain", args, &cfg);
  const auto seeds = pipeline::derive_seeds(cfg.train.seed);
  std::vector<dsp::Waveform> clips;
  if (!o.in.empty()) {
    clips = read_wav_dir(o.in);
  } else {
    auto corpus = pipeline::synth_corpus(cfg.data, seeds.data);
    clips = role == vae::Role::kSpeech ? std::move(corpus.speech) : std::move(corpus.noise);
  }
  auto tc = cfg.train;
  tc.seed = role == vae::Role::kSpeech ? seeds.cvae : seeds.nvae;
  const std::string name = role == vae::Role::kSpeech ? "cvae" : "nvae";
  auto result = pipeline::pretrain_vae(role, clips, tc, cfg.topology, stage_printer(err, name));
  pipeline::save_vae((dir / (name + ".ckpt")).string(), {result.model, tc.loss_weights});
  pipeline::write_log_csv((dir / (name + "_log.csv")).string(), result.log);
  out << name << ": best epoch " << result.log.best_epoch << " of " << result.log.epochs.size()
      << "\n";
  return kExitOk;
}

int cmd_train_nsvae(const Options& o, const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err) {
  const fs::path in(o.in);
  for (const char* f : {"cvae.ckpt", "nvae.ckpt"}) {
    if (!fs::exists(in / f)) throw UsageError("--in: missing " + (in / f).string());
  }
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "train-nsvae", args, &cfg);
  auto cvae = pipeline::load_vae((in / "cvae.ckpt").string());
  auto nvae = pipeline::load_vae((in / "nvae.ckpt").string());
  if (cvae.model.role != vae::Role::kSpeech || nvae.model.role != vae::Role::kNoise) {
    throw std::invalid_argument("cvae.ckpt must hold a speech model and nvae.ckpt a noise model");
  }
  const auto seeds = pipeline::derive_seeds(cfg.train.seed);
  const auto corpus = pipeline::synth_corpus(cfg.data, seeds.data);
  auto tc = cfg.train;
  tc.seed = seeds.nsvae;
  const auto direction =
      cfg.reverse_kl ? nsvae::KlDirection::kCleanToNoisy : nsvae::KlDirection::kNoisyToClean;
  auto result = pipeline::train_nsvae(cvae.model, nvae.model, corpus.train_mixtures, tc,
                                      direction, stage_printer(err, "nsvae"));
  pipeline::ModelBundle bundle;
  bundle.cvae = std::move(cvae.model);
  bundle.nvae = std::move(nvae.model);
  bundle.nsvae = std::move(result.model);
  bundle.cvae_weights = cvae.weights;
  bundle.nvae_weights = nvae.weights;
  bundle.run_config = cfg.to_key_values();
  pipeline::save_bundle((dir / "bundle.ckpt").string(), bundle);
  pipeline::write_log_csv((dir / "nsvae_log.csv").string(), result.log);
  out << "nsvae: best epoch " << result.log.best_epoch << " of " << result.log.epochs.size()
      << "\n";
  return kExitOk;
}

int cmd_enhance(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path target(o.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_manifest(fs::path(o.out + ".manifest.txt"), "enhance", args, nullptr);
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto noisy = dsp::read_wav(o.in);
  pipeline::EnhanceOptions opts;
  opts.seed = o.seed.value_or(0);
  const auto clean = pipeline::enhance(bundle, noisy, opts);
  dsp::write_wav(o.out, clean);
  out << "wrote " << clean.size() << " samples to " << o.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "evaluate", args, &cfg);
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto seeds = pipeline::derive_seeds(cfg.train.seed);
  const auto corpus = pipeline::synth_corpus(cfg.data, seeds.data);
  pipeline::EnhanceOptions opts{cfg.sampled_inference, seeds.eval};
  const auto eval = pipeline::evaluate_bundle(bundle, corpus.eval_mixtures, opts);
  analysis::write_metrics_csv((dir / "metrics.csv").string(), eval.clips);
  char buf[400];
  std::snprintf(buf, sizeof(buf),
                "si_snr_noisy = %.6f\nsi_snr_enhanced = %.6f\nsi_snr_improvement = %.6f\n"
                "si_snr_improvement_stderr = %.6f\nlsd_noisy = %.6f\nlsd_enhanced = %.6f\n"
                "separation_ratio = %.6f\n",
                eval.si_snr_noisy.mean, eval.si_snr_enhanced.mean, eval.si_snr_improvement.mean,
                eval.si_snr_improvement.std_err, eval.lsd_noisy.mean, eval.lsd_enhanced.mean,
                eval.separation.ratio);
  write_text(dir / "summary.txt", buf);
  out << buf;
  return kExitOk;
}

int cmd_latent_viz(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "latent-viz", args, &cfg);
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto corpus = pipeline::synth_corpus(cfg.data, pipeline::derive_seeds(cfg.train.seed).data);
  write_latent_outputs(dir, bundle.nsvae, corpus.eval_mixtures, "NSVAE posterior means (PCA)",
                       out);
  return kExitOk;
}

int cmd_ablation(const Options& o, const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
  const auto settings = parse_settings(o.settings);
  const auto cfg = load_config(o);
  const auto dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", "ablation", args, &cfg);
  const auto corpus = pipeline::synth_corpus(cfg.data, pipeline::derive_seeds(cfg.train.seed).data);
  const auto reports = pipeline::run_ablation(cfg, corpus, settings, progress_printer(err));

  const auto& first = corpus.eval_mixtures.front();
  dsp::write_wav((dir / "eval_000_noisy.wav").string(), first.mixture);
  dsp::write_wav((dir / "eval_000_clean.wav").string(), first.speech);
  pipeline::EnhanceOptions opts{cfg.sampled_inference, pipeline::derive_seeds(cfg.train.seed).eval};
  for (const auto& r : reports) {
    const auto sub = dir / ("setting" + std::to_string(r.setting));
    fs::create_directories(sub);
    pipeline::save_bundle((sub / "bundle.ckpt").string(), r.trained.bundle);
    pipeline::write_log_csv((sub / "cvae_log.csv").string(), r.trained.cvae_log);
    pipeline::write_log_csv((sub / "nvae_log.csv").string(), r.trained.nvae_log);
    pipeline::write_log_csv((sub / "nsvae_log.csv").string(), r.trained.nsvae_log);
    analysis::write_metrics_csv((sub / "metrics.csv").string(), r.eval.clips);
    dsp::write_wav((sub / "eval_000_enhanced.wav").string(),
                   pipeline::enhance(r.trained.bundle, first.mixture, opts));
    std::ostringstream sink;
    write_latent_outputs(sub, r.trained.bundle.nsvae, corpus.eval_mixtures,
                         "Setting " + std::to_string(r.setting) + ": NSVAE posterior means (PCA)",
                         sink);
  }
  const auto table = pipeline::comparison_csv(reports);
  write_text(dir / "comparison.csv", table);
  out << table;
  out << "best setting by enhanced SI-SNR: " << reports[pipeline::best_setting(reports)].setting
      << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Permutation-VAE speech enhancement engine", "pvae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "master seed, overrides the config");
  };
  auto* synth = app.add_subcommand("synth-data", "write the synthetic corpus as WAV files");
  add_config(synth);
  synth->add_option("--out", o.out, "output directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the speech or noise VAE");
  add_config(pretrain);
  pretrain->add_option("--role", o.role, "speech|noise")
      ->required()
      ->check(CLI::IsMember({"speech", "noise"}));
  pretrain->add_option("--in", o.in, "directory of training WAVs (default: synthesize)");
  pretrain->add_option("--out", o.out, "output directory")->required();

  auto* nsvae_cmd = app.add_subcommand("train-nsvae", "train the noisy encoder");
  add_config(nsvae_cmd);
  nsvae_cmd->add_option("--in", o.in, "directory holding cvae.ckpt and nvae.ckpt")->required();
  nsvae_cmd->add_option("--out", o.out, "output directory")->required();

  auto* enhance = app.add_subcommand("enhance", "enhance one noisy WAV");
  enhance->add_option("--bundle", o.bundle, "bundle checkpoint")->required()->check(CLI::ExistingFile);
  enhance->add_option("--in", o.in, "noisy 16 kHz mono 16-bit WAV")->required()->check(CLI::ExistingFile);
  enhance->add_option("--out", o.out, "output WAV path")->required();
  enhance->add_option("--seed", o.seed, "seed for sampled inference");

  auto* evaluate = app.add_subcommand("evaluate", "score a bundle on the evaluation mixtures");
  add_config(evaluate);
  evaluate->add_option("--bundle", o.bundle, "bundle checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", o.out, "output directory")->required();

  auto* latent = app.add_subcommand("latent-viz", "PCA view of NSVAE latent means");
  add_config(latent);
  latent->add_option("--bundle", o.bundle, "bundle checkpoint")->required()->check(CLI::ExistingFile);
  latent->add_option("--out", o.out, "output directory")->required();

  auto* ablation = app.add_subcommand("ablation", "train and compare the numbered loss settings");
  add_config(ablation);
  ablation->add_option("--settings", o.settings, "comma-separated subset of 1,2,3,4");
  ablation->add_option("--out", o.out, "output directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(o, args, out);
    if (pretrain->parsed()) return cmd_pretrain(o, args, out, err);
    if (nsvae_cmd->parsed()) return cmd_train_nsvae(o, args, out, err);
    if (enhance->parsed()) return cmd_enhance(o, args, out);
    if (evaluate->parsed()) return cmd_evaluate(o, args, out);
    if (latent->parsed()) return cmd_latent_viz(o, args, out);
    if (ablation->parsed()) return cmd_ablation(o, args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace pvae::cli
