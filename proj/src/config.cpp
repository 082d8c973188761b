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

#include "pvae/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pvae::pipeline {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("config: missing key " + key);
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config: " + key + " = '" + v + "' is not a number");
  }
  return out;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw(key);
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config: " + key + " = '" + v + "' is not an integer");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " = '" + v + "' is not a boolean");
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void TrainConfig::validate() const {
  if (max_epochs <= 0 || patience <= 0 || batch_size == 0 || segment_len == 0 ||
      !(lr > 0.0) || !(grad_clip > 0.0)) {
    throw std::invalid_argument("train config: sizes and rates must be positive");
  }
  if (patience >= max_epochs) {
    throw std::invalid_argument("train config: patience must be below max_epochs");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("train config: val_fraction must be in (0, 1)");
  }
  loss_weights.validate();
}

void DataConfig::validate() const {
  if (speech_clips < 2 || noise_clips < 2 || mixture_clips < 2 || eval_clips == 0) {
    throw std::invalid_argument("data config: need at least 2 clips per training set");
  }
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("data config: clip_seconds must be positive");
  if (snr_min_db > snr_max_db) throw std::invalid_argument("data config: snr_min_db > snr_max_db");
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  static const std::set<std::string> known = {
      "seed", "max_epochs", "patience", "batch_size", "lr", "segment_len",
      "grad_clip", "val_fraction", "beta", "lambda_od", "lambda_d", "hidden",
      "latent", "speech_clips", "noise_clips", "mixture_clips", "eval_clips",
      "clip_seconds", "snr_min_db", "snr_max_db", "eval_snr_db",
      "sampled_inference", "reverse_kl", "threads"};
  for (const auto& [k, v] : kv.values()) {
    if (!known.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
  }
  ExperimentConfig c;
  auto& t = c.train;
  t.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  t.max_epochs = static_cast<int>(kv.get_int("max_epochs", t.max_epochs));
  t.patience = static_cast<int>(kv.get_int("patience", t.patience));
  const auto batch = kv.get_int("batch_size", static_cast<long long>(t.batch_size));
  const auto seg = kv.get_int("segment_len", static_cast<long long>(t.segment_len));
  if (batch <= 0 || seg <= 0) throw std::invalid_argument("config: batch_size and segment_len must be positive");
  t.batch_size = static_cast<std::size_t>(batch);
  t.segment_len = static_cast<std::size_t>(seg);
  t.lr = kv.get_double("lr", t.lr);
  t.grad_clip = kv.get_double("grad_clip", t.grad_clip);
  t.val_fraction = kv.get_double("val_fraction", t.val_fraction);
  t.loss_weights.beta = kv.get_double("beta", t.loss_weights.beta);
  t.loss_weights.lambda_od = kv.get_double("lambda_od", t.loss_weights.lambda_od);
  t.loss_weights.lambda_d = kv.get_double("lambda_d", t.loss_weights.lambda_d);

  const auto hidden = kv.get_int("hidden", static_cast<long long>(c.topology.hidden));
  const auto latent = kv.get_int("latent", static_cast<long long>(c.topology.latent));
  if (hidden <= 0 || latent <= 0) throw std::invalid_argument("config: hidden and latent must be positive");
  c.topology.hidden = static_cast<std::size_t>(hidden);
  c.topology.latent = static_cast<std::size_t>(latent);

  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw std::invalid_argument(std::string("config: ") + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  auto& d = c.data;
  d.speech_clips = count("speech_clips", d.speech_clips);
  d.noise_clips = count("noise_clips", d.noise_clips);
  d.mixture_clips = count("mixture_clips", d.mixture_clips);
  d.eval_clips = count("eval_clips", d.eval_clips);
  d.clip_seconds = kv.get_double("clip_seconds", d.clip_seconds);
  d.snr_min_db = kv.get_double("snr_min_db", d.snr_min_db);
  d.snr_max_db = kv.get_double("snr_max_db", d.snr_max_db);
  d.eval_snr_db = kv.get_double("eval_snr_db", d.eval_snr_db);

  c.sampled_inference = kv.get_bool("sampled_inference", false);
  c.reverse_kl = kv.get_bool("reverse_kl", false);
  c.threads = static_cast<int>(kv.get_int("threads", 1));
  if (c.threads < 1) throw std::invalid_argument("config: threads must be >= 1");

  t.validate();
  d.validate();
  return c;
}

KeyValueConfig ExperimentConfig::to_key_values() const {
  KeyValueConfig kv;
  kv.set("seed", std::to_string(train.seed));
  kv.set("max_epochs", std::to_string(train.max_epochs));
  kv.set("patience", std::to_string(train.patience));
  kv.set("batch_size", std::to_string(train.batch_size));
  kv.set("segment_len", std::to_string(train.segment_len));
  kv.set("lr", num(train.lr));
  kv.set("grad_clip", num(train.grad_clip));
  kv.set("val_fraction", num(train.val_fraction));
  kv.set("beta", num(train.loss_weights.beta));
  kv.set("lambda_od", num(train.loss_weights.lambda_od));
  kv.set("lambda_d", num(train.loss_weights.lambda_d));
  kv.set("hidden", std::to_string(topology.hidden));
  kv.set("latent", std::to_string(topology.latent));
  kv.set("speech_clips", std::to_string(data.speech_clips));
  kv.set("noise_clips", std::to_string(data.noise_clips));
  kv.set("mixture_clips", std::to_string(data.mixture_clips));
  kv.set("eval_clips", std::to_string(data.eval_clips));
  kv.set("clip_seconds", num(data.clip_seconds));
  kv.set("snr_min_db", num(data.snr_min_db));
  kv.set("snr_max_db", num(data.snr_max_db));
  kv.set("eval_snr_db", num(data.eval_snr_db));
  kv.set("sampled_inference", sampled_inference ? "true" : "false");
  kv.set("reverse_kl", reverse_kl ? "true" : "false");
  kv.set("threads", std::to_string(threads));
  return kv;
}

}  // namespace pvae::pipeline
