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
#include <map>
#include <string>

#include "pvae/diploss.hpp"
#include "pvae/vae.hpp"

namespace pvae::pipeline {

/// Flat `key = value` text with `#` comments. Keys are kept sorted so that
/// to_text() is canonical.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  int max_epochs = 500;
  int patience = 20;
  std::size_t batch_size = 128;  // sequences per minibatch
  double lr = 1e-4;
  std::uint64_t seed = 0;
  diploss::LossWeights loss_weights;
  std::size_t segment_len = 64;  // frames per training sequence
  double grad_clip = 5.0;
  double val_fraction = 0.1;

  /// Throws std::invalid_argument on non-positive sizes or patience >=
  /// max_epochs.
  void validate() const;
};

/// Parameters of the synthetic desk-scale corpus.
struct DataConfig {
  std::size_t speech_clips = 48;   // CVAE pretraining
  std::size_t noise_clips = 48;    // NVAE pretraining
  std::size_t mixture_clips = 48;  // NSVAE training
  std::size_t eval_clips = 12;
  double clip_seconds = 2.0;
  double snr_min_db = -10.0;
  double snr_max_db = 15.0;
  double eval_snr_db = 0.0;

  void validate() const;
};

struct ExperimentConfig {
  TrainConfig train;
  vae::Topology topology;
  DataConfig data;
  bool sampled_inference = false;
  bool reverse_kl = false;
  int threads = 1;

  /// Unknown keys are rejected so that typos do not silently fall back to
  /// defaults.
  static ExperimentConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_key_values() const;
};

}  // namespace pvae::pipeline
