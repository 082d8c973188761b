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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pvae/config.hpp"
#include "pvae/diploss.hpp"
#include "pvae/nsvae.hpp"
#include "pvae/vae.hpp"

// Binary layout (all integers little-endian):
//   "PVAE" | u32 version | u32 kind | u32 n + n bytes of config text |
//   u32 count | count x { u32 n + name | u32 rank | rank x u64 dim |
//                         prod(dims) x f64 } | u32 crc32 of all prior bytes
namespace pvae::pipeline {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raised by every load path; section() names the part of the file that
/// failed (file, magic, version, kind, config, tensors, checksum, contents).
class LoadError : public std::runtime_error {
 public:
  LoadError(std::string section, const std::string& what)
      : std::runtime_error("checkpoint " + section + ": " + what),
        section_(std::move(section)) {}
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};

enum class CheckpointKind : std::uint32_t { kEmpty = 0, kVae = 1, kNsvae = 2, kBundle = 3 };

struct StoredTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kEmpty;
  std::uint32_t version = kCheckpointVersion;
  KeyValueConfig config;
  std::vector<StoredTensor> tensors;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// A pretrained VAE together with the loss weights it was trained with.
struct TrainedVae {
  vae::VaeModel model;
  diploss::LossWeights weights;
};

/// The three trained networks plus the settings used to produce them.
struct ModelBundle {
  vae::VaeModel cvae;
  vae::VaeModel nvae;
  nsvae::NsvaeModel nsvae;
  diploss::LossWeights cvae_weights;
  diploss::LossWeights nvae_weights;
  KeyValueConfig run_config;
  std::uint32_t format_version = kCheckpointVersion;

  /// Throws std::invalid_argument when the latent sizes or bin counts of the
  /// three models disagree.
  void validate() const;
};

Checkpoint to_checkpoint(const TrainedVae& vae);
Checkpoint to_checkpoint(const nsvae::NsvaeModel& model);
Checkpoint to_checkpoint(const ModelBundle& bundle);

TrainedVae vae_from_checkpoint(const Checkpoint& ckpt);
nsvae::NsvaeModel nsvae_from_checkpoint(const Checkpoint& ckpt);
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

void save_vae(const std::string& path, const TrainedVae& vae);
TrainedVae load_vae(const std::string& path);
void save_nsvae(const std::string& path, const nsvae::NsvaeModel& model);
nsvae::NsvaeModel load_nsvae(const std::string& path);
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

}  // namespace pvae::pipeline
