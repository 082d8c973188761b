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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "pvae/checkpoint.hpp"

namespace pvae::pipeline {
namespace {

using vae::Rng;

constexpr vae::Topology kSmall{dsp::kNumBins, 8, 4};

ModelBundle make_bundle(std::uint64_t seed) {
  Rng rng(seed);
  ModelBundle b;
  b.cvae = vae::make_vae(vae::Role::kSpeech, kSmall, rng);
  b.nvae = vae::make_vae(vae::Role::kNoise, kSmall, rng);
  b.nsvae = nsvae::make_nsvae(kSmall, rng);
  b.cvae_weights = diploss::ablation_setting(4);
  b.nvae_weights = diploss::ablation_setting(4);
  b.run_config.set("seed", "7");
  return b;
}

std::string section_of(const std::vector<unsigned char>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    return e.section();
  }
  return "none";
}

TEST(Checkpoint, BundleRoundTripIsBitExact) {
  const auto b = make_bundle(1);
  const auto bytes = encode_checkpoint(to_checkpoint(b));
  const auto back = bundle_from_checkpoint(decode_checkpoint(bytes));
  EXPECT_EQ(encode_checkpoint(to_checkpoint(back)), bytes);
  const auto pa = b.nsvae.named_parameters(), pb = back.nsvae.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(0, std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(),
                             pa[i].tensor.size() * sizeof(double)));
  }
  EXPECT_EQ(back.cvae_weights, b.cvae_weights);
  EXPECT_EQ(back.run_config.raw("seed"), "7");
  EXPECT_EQ(back.cvae.role, vae::Role::kSpeech);
  EXPECT_EQ(back.nvae.role, vae::Role::kNoise);
}

TEST(Checkpoint, FilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pvae_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto b = make_bundle(2);
  save_bundle((dir / "b.ckpt").string(), b);
  const auto back = load_bundle((dir / "b.ckpt").string());
  EXPECT_EQ(encode_checkpoint(to_checkpoint(back)), encode_checkpoint(to_checkpoint(b)));

  const TrainedVae v{b.cvae, diploss::ablation_setting(2)};
  save_vae((dir / "v.ckpt").string(), v);
  const auto vb = load_vae((dir / "v.ckpt").string());
  EXPECT_EQ(vb.weights, v.weights);
  EXPECT_EQ(encode_checkpoint(to_checkpoint(vb)), encode_checkpoint(to_checkpoint(v)));

  save_nsvae((dir / "n.ckpt").string(), b.nsvae);
  EXPECT_EQ(encode_checkpoint(to_checkpoint(load_nsvae((dir / "n.ckpt").string()))),
            encode_checkpoint(to_checkpoint(b.nsvae)));
  EXPECT_THROW(load_bundle((dir / "missing.ckpt").string()), LoadError);
  // A VAE checkpoint is not a bundle.
  EXPECT_THROW(load_bundle((dir / "v.ckpt").string()), LoadError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, EverySingleByteCorruptionIsDetected) {
  const auto bytes = encode_checkpoint(to_checkpoint(TrainedVae{make_bundle(3).cvae, {}}));
  // Flip one byte at a time across the whole file (strided to keep it fast,
  // always including the first and last bytes).
  for (std::size_t i = 0; i < bytes.size(); i += (i < 64 ? 1 : 97)) {
    auto bad = bytes;
    bad[i] ^= 0x5A;
    EXPECT_THROW(decode_checkpoint(bad), LoadError) << "byte " << i;
  }
  auto last = bytes;
  last.back() ^= 0x01;
  EXPECT_EQ(section_of(last), "checksum");
  // A flipped tensor value passes every structural check and is caught by
  // the checksum alone.
  auto value = bytes;
  value[value.size() - 4 - 3] ^= 0x10;
  EXPECT_EQ(section_of(value), "checksum");
}

TEST(Checkpoint, HeaderErrorsNameTheirSection) {
  const auto bytes = encode_checkpoint(to_checkpoint(make_bundle(4).nsvae));
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(section_of(magic), "magic");
  auto version = bytes;
  version[4] = 9;
  EXPECT_EQ(section_of(version), "version");
  for (std::size_t cut : {std::size_t{2}, std::size_t{6}, std::size_t{30}, bytes.size() / 2,
                          bytes.size() - 1}) {
    const std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + cut);
    EXPECT_NE(section_of(truncated), "none") << cut;
  }
  EXPECT_EQ(section_of({bytes.begin(), bytes.begin() + 2}), "magic");
  EXPECT_EQ(section_of({bytes.begin(), bytes.begin() + 6}), "version");
}

TEST(Checkpoint, EmptyStubIsMinimal) {
  const Checkpoint stub;
  const auto bytes = encode_checkpoint(stub);
  // magic + version + kind + config length + tensor count + crc
  EXPECT_EQ(bytes.size(), 4u + 4u + 4u + 4u + 4u + 4u);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.kind, CheckpointKind::kEmpty);
  EXPECT_TRUE(back.tensors.empty());
}

TEST(Checkpoint, ShapeAndNameMismatchesAreRejected) {
  auto ck = to_checkpoint(make_bundle(5).nsvae);
  auto renamed = ck;
  renamed.tensors[0].name = "bogus";
  EXPECT_THROW(nsvae_from_checkpoint(renamed), LoadError);
  auto missing = ck;
  missing.tensors.pop_back();
  EXPECT_THROW(nsvae_from_checkpoint(missing), LoadError);
  auto reshaped = ck;
  reshaped.tensors[0].shape = {reshaped.tensors[0].values.size(), 1};
  EXPECT_THROW(nsvae_from_checkpoint(reshaped), LoadError);
}

TEST(Checkpoint, BundleValidationCatchesLatentMismatch) {
  auto b = make_bundle(6);
  EXPECT_NO_THROW(b.validate());
  vae::Topology other = kSmall;
  other.latent = 5;
  Rng rng(1);
  b.nvae = vae::make_vae(vae::Role::kNoise, other, rng);
  EXPECT_THROW(b.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace pvae::pipeline
