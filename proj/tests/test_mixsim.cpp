// tests/test_mixsim.cpp

// Copyright 2026  The bsskit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bsskit/mixsim.hpp"
#include "bsskit/stft.hpp"

using namespace bsskit;

namespace {

double rms(const std::vector<double> &x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Power-weighted mean frequency in Hz.
double spectral_centroid(const std::vector<double> &x,
                         std::uint32_t sample_rate) {
  ComplexSpectrogram spec = stft(x, sample_rate, 256, 128);
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < spec.n_freq; ++f) {
    double hz = static_cast<double>(f) * sample_rate / 256.0;
    for (std::size_t n = 0; n < spec.n_frames; ++n) {
      double p = spec.power(f, n);
      num += hz * p;
      den += p;
    }
  }
  return num / den;
}

std::filesystem::path temp_dir(const char *tag) {
  std::filesystem::path p =
      std::filesystem::temp_directory_path() /
      (std::string("bsskit_mixsim_") + tag);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("gen_utterance is deterministic per seed and unit RMS") {
  auto classes = default_classes();
  std::vector<double> a = gen_utterance(classes[0], 0.5, 4000, 7);
  std::vector<double> b = gen_utterance(classes[0], 0.5, 4000, 7);
  std::vector<double> c = gen_utterance(classes[0], 0.5, 4000, 8);
  REQUIRE(a.size() == 2000);
  REQUIRE(a == b);
  REQUIRE(a != c);
  REQUIRE(std::abs(rms(a) - 1.0) < 1e-12);
  REQUIRE(std::abs(rms(c) - 1.0) < 1e-12);
}

TEST_CASE("gen_utterance validates its configuration") {
  auto classes = default_classes();
  SourceClassSpec bad = classes[0];
  bad.pitch_min_hz = 40.0;  // outside (50, 500)
  REQUIRE_THROWS_AS(gen_utterance(bad, 0.5, 4000, 1), ConfigError);
  bad = classes[0];
  bad.pitch_max_hz = 600.0;
  REQUIRE_THROWS_AS(gen_utterance(bad, 0.5, 4000, 1), ConfigError);
  bad = classes[0];
  bad.pitch_min_hz = 300.0;
  bad.pitch_max_hz = 200.0;
  REQUIRE_THROWS_AS(gen_utterance(bad, 0.5, 4000, 1), ConfigError);
  REQUIRE_THROWS_AS(gen_utterance(classes[0], 0.0, 4000, 1), ConfigError);
  REQUIRE_THROWS_AS(gen_utterance(classes[0], 0.5, 100, 1), ConfigError);
}

TEST_CASE("low-pitch classes have lower spectral centroids") {
  auto classes = default_classes();
  // classes: 0 alto, 1 soprano, 2 bass, 3 tenor.
  double mean_alto = 0, mean_sop = 0, mean_bass = 0, mean_tenor = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    double bass = spectral_centroid(gen_utterance(classes[2], 0.5, 4000, seed),
                                    4000);
    double sop = spectral_centroid(gen_utterance(classes[1], 0.5, 4000, seed),
                                   4000);
    REQUIRE(bass < sop);  // extremes must order on every single draw
    mean_bass += bass;
    mean_sop += sop;
    mean_alto += spectral_centroid(gen_utterance(classes[0], 0.5, 4000, seed),
                                   4000);
    mean_tenor += spectral_centroid(gen_utterance(classes[3], 0.5, 4000, seed),
                                    4000);
  }
  REQUIRE(mean_bass < mean_tenor);
  REQUIRE(mean_tenor < mean_alto);
  REQUIRE(mean_alto < mean_sop);
}

TEST_CASE("instantaneous mix: images are exact scalings and sum bitwise") {
  auto classes = default_classes();
  std::vector<TimeSignal> srcs(2);
  for (std::size_t j = 0; j < 2; ++j) {
    srcs[j].sample_rate = 4000;
    srcs[j].channels.push_back(
        gen_utterance(classes[j], 0.25, 4000, 100 + j));
  }
  MixSpec spec;
  spec.mixing = NdArray::from({2, 2}, {1.0, 0.5, 0.25, 1.0});
  MixResult r = mix(srcs, spec);

  REQUIRE(r.mixture.num_channels() == 2);
  REQUIRE(r.images.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double g = spec.mixing(i, j);
      for (std::size_t t = 0; t < srcs[j].length(); ++t)
        REQUIRE(r.images[j].channels[i][t] == g * srcs[j].channels[0][t]);
    }
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < srcs[0].length(); ++t)
      REQUIRE(r.mixture.channels[i][t] ==
              r.images[0].channels[i][t] + r.images[1].channels[i][t]);
}

TEST_CASE("mix rejects ill-conditioned and mismatched inputs") {
  auto classes = default_classes();
  std::vector<TimeSignal> srcs(2);
  for (std::size_t j = 0; j < 2; ++j) {
    srcs[j].sample_rate = 4000;
    srcs[j].channels.push_back(gen_utterance(classes[j], 0.25, 4000, j + 1));
  }
  MixSpec spec;
  spec.mixing = NdArray::from({2, 2}, {1.0, 1.0, 1.0, 1.0});  // singular
  REQUIRE_THROWS_AS(mix(srcs, spec), ContractError);
  spec.mixing = NdArray::from({2, 2}, {1.0, 1.0, 1.0, 1.0 + 1e-9});
  REQUIRE_THROWS_AS(mix(srcs, spec), ContractError);  // cond ~ 4e9
  spec.mixing = NdArray::from({2, 3}, {1, 0, 0, 0, 1, 0});
  REQUIRE_THROWS_AS(mix(srcs, spec), DimensionError);

  MixSpec ok;
  std::vector<TimeSignal> short2 = srcs;
  short2[1].channels[0].resize(srcs[1].length() / 2);
  REQUIRE_THROWS_AS(mix(short2, ok), ContractError);
  REQUIRE_THROWS_AS(mix({}, ok), ContractError);
}

TEST_CASE("single-tap impulse responses reproduce the instantaneous mix") {
  auto classes = default_classes();
  std::vector<TimeSignal> srcs(2);
  for (std::size_t j = 0; j < 2; ++j) {
    srcs[j].sample_rate = 4000;
    srcs[j].channels.push_back(
        gen_utterance(classes[j], 0.25, 4000, 40 + j));
  }
  MixSpec inst;
  inst.mixing = NdArray::from({2, 2}, {1.0, 0.4, 0.3, 1.0});
  MixResult ri = mix(srcs, inst);

  MixSpec conv;
  conv.mode = MixMode::kConvolutive;
  conv.rirs = {{{1.0}, {0.4}}, {{0.3}, {1.0}}};
  MixResult rc = mix(srcs, conv);

  for (std::size_t i = 0; i < 2; ++i)
    REQUIRE(rc.mixture.channels[i] == ri.mixture.channels[i]);
}

TEST_CASE("convolutive mix applies causal delays") {
  TimeSignal s;
  s.sample_rate = 4000;
  s.channels.push_back({1.0, 2.0, 3.0, 4.0, 0.0, 0.0});
  MixSpec conv;
  conv.mode = MixMode::kConvolutive;
  conv.rirs = {{{0.0, 0.0, 1.0}}};  // pure 2-sample delay
  MixResult r = mix({s}, conv);
  std::vector<double> want{0.0, 0.0, 1.0, 2.0, 3.0, 4.0};
  REQUIRE(r.mixture.channels[0] == want);
}

TEST_CASE("generated impulse responses are deterministic and bounded") {
  auto classes = default_classes();
  std::vector<TimeSignal> srcs(2);
  for (std::size_t j = 0; j < 2; ++j) {
    srcs[j].sample_rate = 4000;
    srcs[j].channels.push_back(
        gen_utterance(classes[j], 0.25, 4000, 60 + j));
  }
  MixSpec conv;
  conv.mode = MixMode::kConvolutive;
  conv.seed = 5;
  MixResult a = mix(srcs, conv);
  MixResult b = mix(srcs, conv);
  conv.seed = 6;
  MixResult c = mix(srcs, conv);
  REQUIRE(a.mixture.channels[0] == b.mixture.channels[0]);
  REQUIRE(a.mixture.channels[0] != c.mixture.channels[0]);
  // Images still sum exactly to the mixture.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < srcs[0].length(); ++t)
      REQUIRE(a.mixture.channels[i][t] ==
              a.images[0].channels[i][t] + a.images[1].channels[i][t]);
}

TEST_CASE("sensor noise lands near the requested level") {
  auto classes = default_classes();
  std::vector<TimeSignal> srcs(2);
  for (std::size_t j = 0; j < 2; ++j) {
    srcs[j].sample_rate = 4000;
    srcs[j].channels.push_back(gen_utterance(classes[j], 2.0, 4000, 9 + j));
  }
  MixSpec spec;
  spec.noise_snr_db = 20.0;
  MixResult noisy = mix(srcs, spec);
  spec.noise_snr_db = std::numeric_limits<double>::infinity();
  MixResult clean = mix(srcs, spec);

  double sig = 0.0, err = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < srcs[0].length(); ++t) {
      double cv = clean.mixture.channels[i][t];
      double d = noisy.mixture.channels[i][t] - cv;
      sig += cv * cv;
      err += d * d;
      ++total;
    }
  REQUIRE(total > 0);
  double snr = 10.0 * std::log10(sig / err);
  REQUIRE(std::abs(snr - 20.0) < 1.0);
}

TEST_CASE("gen_corpus writes a readable manifest with an 80/20 split") {
  auto classes = default_classes();
  CorpusConfig cfg;
  cfg.utterances_per_class = 10;
  cfg.duration_s = 0.25;
  cfg.base_seed = 3;
  std::filesystem::path dir = temp_dir("corpus");
  std::vector<CorpusEntry> entries = gen_corpus(classes, cfg, dir.string());

  REQUIRE(entries.size() == 40);
  std::size_t n_eval = 0;
  for (const CorpusEntry &e : entries) {
    if (e.split == "eval") ++n_eval;
    REQUIRE(std::filesystem::exists(dir / e.path));
  }
  REQUIRE(n_eval == 8);  // exactly one in five

  std::vector<CorpusEntry> back =
      read_manifest((dir / "manifest.jsonl").string());
  REQUIRE(back.size() == entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    REQUIRE(back[i].class_id == entries[i].class_id);
    REQUIRE(back[i].path == entries[i].path);
    REQUIRE(back[i].split == entries[i].split);
    REQUIRE(back[i].seed == entries[i].seed);
  }

  // Audio on disk matches a regeneration from the manifest seed: float32
  // storage means equality after one float round trip.
  const CorpusEntry &e0 = entries[13];
  TimeSignal stored = read_wav((dir / e0.path).string());
  std::vector<double> regen =
      gen_utterance(classes[e0.class_id], cfg.duration_s, cfg.sample_rate,
                    e0.seed);
  REQUIRE(stored.length() == regen.size());
  for (std::size_t t = 0; t < regen.size(); ++t)
    REQUIRE(stored.channels[0][t] ==
            static_cast<double>(static_cast<float>(regen[t])));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus regeneration is byte-stable") {
  auto classes = default_classes();
  CorpusConfig cfg;
  cfg.utterances_per_class = 5;
  cfg.duration_s = 0.25;
  std::filesystem::path d1 = temp_dir("rep1");
  std::filesystem::path d2 = temp_dir("rep2");
  gen_corpus(classes, cfg, d1.string());
  gen_corpus(classes, cfg, d2.string());
  for (const char *name : {"class0_utt000.wav", "class3_utt004.wav",
                           "manifest.jsonl"}) {
    std::ifstream f1(d1 / name, std::ios::binary);
    std::ifstream f2(d2 / name, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    REQUIRE(!b1.empty());
    REQUIRE(b1 == b2);
  }
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
