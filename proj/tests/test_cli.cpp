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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pvae/cli.hpp"
#include "pvae/dsp.hpp"

namespace pvae::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "pvae");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pvae_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << "# tiny end-to-end run\n"
                                        "hidden = 8\nlatent = 4\n"
                                        "speech_clips = 3\nnoise_clips = 3\n"
                                        "mixture_clips = 3\neval_clips = 2\n"
                                        "clip_seconds = 1.0\n"
                                        "max_epochs = 3\npatience = 2\n"
                                        "batch_size = 4\nsegment_len = 16\nlr = 1e-3\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitWithOne) {
  auto r = call({});
  EXPECT_EQ(r.code, kExitUsage);
  r = call({"pretrain", "--bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("pretrain"), std::string::npos);  // usage text
  r = call({"pretrain", "--role", "music", "--out", path("x")});
  EXPECT_EQ(r.code, kExitUsage);
  r = call({"ablation", "--settings", "1,7", "--out", path("x")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(call({"--version"}).code, kExitOk);
  EXPECT_EQ(call({"--help"}).code, kExitOk);
}

TEST_F(CliTest, RuntimeFailuresExitWithTwo) {
  std::ofstream(dir_ / "bad.ckpt") << "not a checkpoint";
  std::ofstream(dir_ / "bad.wav") << "not a wav";
  const auto r = call({"enhance", "--bundle", path("bad.ckpt"), "--in", path("bad.wav"), "--out",
                       path("o.wav")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos) << r.err;
}

TEST_F(CliTest, TinyEndToEndRun) {
  const auto cfg = path("tiny.cfg");
  ASSERT_EQ(call({"pretrain", "--role", "speech", "--config", cfg, "--out", path("run")}).code,
            kExitOk);
  ASSERT_EQ(call({"pretrain", "--role", "noise", "--config", cfg, "--out", path("run")}).code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "cvae.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "nvae_log.csv"));
  ASSERT_EQ(call({"train-nsvae", "--config", cfg, "--in", path("run"), "--out", path("run")}).code,
            kExitOk);
  const auto bundle = path("run/bundle.ckpt");
  ASSERT_TRUE(fs::exists(bundle));

  ASSERT_EQ(call({"synth-data", "--config", cfg, "--out", path("data")}).code, kExitOk);
  fs::path noisy;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "data")) {
    if (e.path().extension() == ".wav" && e.path().string().find("mix") != std::string::npos) {
      noisy = e.path();
      break;
    }
  }
  ASSERT_FALSE(noisy.empty());
  ASSERT_EQ(call({"enhance", "--bundle", bundle, "--in", noisy.string(), "--out",
                  path("clean.wav")})
                .code,
            kExitOk);
  const auto wav = dsp::read_wav(path("clean.wav"));
  EXPECT_EQ(wav.sample_rate, 16000);
  EXPECT_EQ(wav.size(), dsp::reconstructed_length(dsp::frame_count(dsp::read_wav(noisy.string()).size())));

  ASSERT_EQ(call({"evaluate", "--config", cfg, "--bundle", bundle, "--out", path("eval")}).code,
            kExitOk);
  EXPECT_EQ(slurp(dir_ / "eval" / "metrics.csv").substr(0, 7), "clip_id");
  ASSERT_EQ(call({"latent-viz", "--config", cfg, "--bundle", bundle, "--out", path("viz")}).code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "viz" / "latent.svg"));
  EXPECT_NE(slurp(dir_ / "viz" / "manifest.txt").find("command"), std::string::npos);
}

TEST_F(CliTest, AblationIsByteReproducible) {
  const auto cfg = path("tiny.cfg");
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(call({"ablation", "--config", cfg, "--settings", "1,3", "--out", path(out)}).code,
              kExitOk);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir_ / "a");
    if (rel.filename() == "manifest.txt") continue;  // records the differing --out
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10u);
  const auto csv = slurp(dir_ / "a" / "comparison.csv");
  EXPECT_EQ(csv.substr(0, 17), "setting,beta,lamb");
}

}  // namespace
}  // namespace pvae::cli
