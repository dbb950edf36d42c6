// bsskit/mixsim.hpp

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

// Synthetic corpus and mixture generation.  Utterances are harmonic tones
// with class-dependent pitch range and spectral envelope, slow pitch drift
// plus vibrato, and amplitude modulation.  The moving pitch matters: it
// makes the short-time spectra poorly low-rank, which is the regime where a
// trained source model outperforms a basis-times-activation one.

#ifndef BSSKIT_MIXSIM_HPP_
#define BSSKIT_MIXSIM_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsskit/ndarray.hpp"
#include "bsskit/wav.hpp"

namespace bsskit {

struct Resonance {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
  double gain = 0.0;
};

struct SourceClassSpec {
  std::size_t class_id = 0;
  std::string name;
  double pitch_min_hz = 0.0;
  double pitch_max_hz = 0.0;
  std::vector<Resonance> envelope;
  double am_rate_min_hz = 0.0;
  double am_rate_max_hz = 0.0;
  std::size_t harmonics = 0;

  void validate() const {
    if (!(pitch_min_hz > 50.0 && pitch_max_hz < 500.0 &&
          pitch_min_hz < pitch_max_hz))
      throw ConfigError("SourceClassSpec: pitch range must sit inside "
                        "(50, 500) Hz, got [" + std::to_string(pitch_min_hz) +
                        ", " + std::to_string(pitch_max_hz) + "]");
    if (harmonics == 0)
      throw ConfigError("SourceClassSpec: needs at least one harmonic");
    if (!(am_rate_min_hz > 0.0 && am_rate_min_hz <= am_rate_max_hz))
      throw ConfigError("SourceClassSpec: bad AM rate range");
  }
};

// Two high-pitch and two low-pitch classes with distinct envelopes, all
// compatible with a 4 kHz sample rate.
inline std::vector<SourceClassSpec> default_classes() {
  std::vector<SourceClassSpec> c(4);
  c[0] = {0, "alto",
          190.0, 260.0,
          {{500.0, 150.0, 1.0}, {1400.0, 250.0, 0.7}},
          3.0, 5.0, 9};
  c[1] = {1, "soprano",
          260.0, 380.0,
          {{800.0, 200.0, 1.0}, {1900.0, 300.0, 0.8}},
          5.0, 8.0, 7};
  c[2] = {2, "bass",
          85.0, 125.0,
          {{350.0, 120.0, 1.0}, {1000.0, 220.0, 0.6}},
          2.0, 4.0, 18};
  c[3] = {3, "tenor",
          125.0, 180.0,
          {{450.0, 140.0, 1.0}, {1200.0, 240.0, 0.7}},
          4.0, 6.0, 14};
  return c;
}

namespace mixsim_detail {

inline double envelope_at(const SourceClassSpec &spec, double hz) {
  double g = 0.02;  // spectral floor keeps every harmonic audible
  for (const Resonance &r : spec.envelope) {
    double d = (hz - r.center_hz) / r.bandwidth_hz;
    g += r.gain * std::exp(-0.5 * d * d);
  }
  return g;
}

// Piecewise-cosine interpolation through `points` control values over [0,1).
inline double smooth_track(const std::vector<double> &points, double pos) {
  std::size_t segs = points.size() - 1;
  double x = pos * static_cast<double>(segs);
  std::size_t i = std::min(static_cast<std::size_t>(x), segs - 1);
  double frac = x - static_cast<double>(i);
  double s = 0.5 - 0.5 * std::cos(M_PI * frac);
  return points[i] * (1.0 - s) + points[i + 1] * s;
}

}  // namespace mixsim_detail

// One deterministic utterance: seeded pitch contour (drift + vibrato),
// envelope-shaped harmonics with random phases, amplitude modulation, short
// edge ramps, exact unit RMS.
inline std::vector<double> gen_utterance(const SourceClassSpec &spec,
                                         double duration_s,
                                         std::uint32_t sample_rate,
                                         std::uint64_t seed) {
  spec.validate();
  if (!(duration_s > 0.0)) throw ConfigError("gen_utterance: duration <= 0");
  if (sample_rate < 1000)
    throw ConfigError("gen_utterance: sample rate too low");
  std::size_t len = static_cast<std::size_t>(duration_s * sample_rate);
  if (len < 32) throw ConfigError("gen_utterance: fewer than 32 samples");

  Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (spec.class_id + 1)));

  double base = rng.uniform(spec.pitch_min_hz, spec.pitch_max_hz);
  double vib_rate = rng.uniform(4.5, 6.5);
  double vib_depth = rng.uniform(0.01, 0.03);
  double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> drift(8);
  for (double &d : drift) d = rng.uniform(-0.08, 0.08);

  std::size_t n_harm = spec.harmonics;
  std::vector<double> phase(n_harm), amp(n_harm);
  for (std::size_t k = 0; k < n_harm; ++k) {
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    amp[k] = 1.0 / std::sqrt(static_cast<double>(k + 1));
  }

  double am_rate = rng.uniform(spec.am_rate_min_hz, spec.am_rate_max_hz);
  double am_depth = rng.uniform(0.25, 0.5);
  double am_phase = rng.uniform(0.0, 2.0 * M_PI);

  double nyq_guard = 0.48 * static_cast<double>(sample_rate);
  std::size_t ramp = sample_rate / 100;  // 10 ms
  std::vector<double> x(len, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    double pos = static_cast<double>(t) / static_cast<double>(len);
    double ts = static_cast<double>(t) / static_cast<double>(sample_rate);
    double f0 = base * (1.0 + mixsim_detail::smooth_track(drift, pos) +
                        vib_depth *
                            std::sin(2.0 * M_PI * vib_rate * ts + vib_phase));
    f0 = std::min(std::max(f0, spec.pitch_min_hz), spec.pitch_max_hz);

    double s = 0.0;
    for (std::size_t k = 0; k < n_harm; ++k) {
      double hk = f0 * static_cast<double>(k + 1);
      if (hk >= nyq_guard) break;
      s += amp[k] * mixsim_detail::envelope_at(spec, hk) * std::sin(phase[k]);
      phase[k] += 2.0 * M_PI * hk / static_cast<double>(sample_rate);
      if (phase[k] > 2.0 * M_PI) phase[k] -= 2.0 * M_PI;
    }
    double am = 1.0 + am_depth * std::sin(2.0 * M_PI * am_rate * ts +
                                          am_phase);
    double edge = 1.0;
    if (t < ramp) edge = static_cast<double>(t) / static_cast<double>(ramp);
    if (len - 1 - t < ramp)
      edge = std::min(edge, static_cast<double>(len - 1 - t) /
                                static_cast<double>(ramp));
    x[t] = s * am * edge;
  }

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(len));
  if (!(rms > 0.0)) throw Error("gen_utterance: degenerate silent signal");
  for (double &v : x) v /= rms;
  return x;
}

struct CorpusEntry {
  std::size_t class_id = 0;
  std::string path;  // relative to the manifest directory
  std::string split; // "train" or "eval"
  std::uint64_t seed = 0;
};

struct CorpusConfig {
  std::size_t utterances_per_class = 50;
  double duration_s = 0.5;
  std::uint32_t sample_rate = 4000;
  std::uint64_t base_seed = 1;
};

// Deterministic utterance seed; distinct per (base, class, index) for any
// sane corpus size.
inline std::uint64_t corpus_utterance_seed(std::uint64_t base,
                                           std::size_t class_id,
                                           std::size_t idx) {
  return base + class_id * 1000003ULL + idx * 17ULL;
}

// Writes float32 WAVs plus manifest.jsonl ({class_id, path, split, seed} per
// line) into out_dir.  Every fifth utterance per class goes to the eval
// split (80/20), independent of everything else.
inline std::vector<CorpusEntry> gen_corpus(
    const std::vector<SourceClassSpec> &classes, const CorpusConfig &cfg,
    const std::string &out_dir) {
  if (classes.empty()) throw ConfigError("gen_corpus: no classes");
  if (cfg.utterances_per_class == 0)
    throw ConfigError("gen_corpus: utterances_per_class == 0");
  std::filesystem::create_directories(out_dir);

  std::vector<CorpusEntry> entries;
  for (const SourceClassSpec &spec : classes) {
    for (std::size_t idx = 0; idx < cfg.utterances_per_class; ++idx) {
      CorpusEntry e;
      e.class_id = spec.class_id;
      e.seed = corpus_utterance_seed(cfg.base_seed, spec.class_id, idx);
      e.split = (idx % 5 == 4) ? "eval" : "train";
      char name[64];
      std::snprintf(name, sizeof(name), "class%zu_utt%03zu.wav",
                    spec.class_id, idx);
      e.path = name;

      TimeSignal sig;
      sig.sample_rate = cfg.sample_rate;
      sig.channels.push_back(
          gen_utterance(spec, cfg.duration_s, cfg.sample_rate, e.seed));
      write_wav((std::filesystem::path(out_dir) / e.path).string(), sig,
                WavFormat::kFloat32);
      entries.push_back(std::move(e));
    }
  }

  std::ofstream mf(std::filesystem::path(out_dir) / "manifest.jsonl",
                   std::ios::trunc);
  if (!mf) throw FormatError("gen_corpus: cannot write manifest");
  for (const CorpusEntry &e : entries) {
    nlohmann::json j{{"class_id", e.class_id},
                     {"path", e.path},
                     {"split", e.split},
                     {"seed", e.seed}};
    mf << j.dump() << "\n";
  }
  return entries;
}

inline std::vector<CorpusEntry> read_manifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_manifest: cannot open " + path);
  std::vector<CorpusEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("class_id") || !j.contains("path") ||
        !j.contains("split") || !j.contains("seed"))
      throw FormatError("read_manifest: malformed line " +
                        std::to_string(lineno) + " in " + path);
    CorpusEntry e;
    e.class_id = j["class_id"].get<std::size_t>();
    e.path = j["path"].get<std::string>();
    e.split = j["split"].get<std::string>();
    e.seed = j["seed"].get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  return entries;
}

enum class MixMode { kInstantaneous, kConvolutive };

struct MixSpec {
  MixMode mode = MixMode::kInstantaneous;
  NdArray mixing;  // channels x sources, instantaneous mode
  // Explicit impulse responses [channel][source]; generated from the seed
  // when empty in convolutive mode.
  std::vector<std::vector<std::vector<double>>> rirs;
  std::uint64_t seed = 0;
  double rir_decay_ms = 60.0;
  double rir_tail_gain = 0.35;
  std::size_t rir_max_taps = 2048;
  // Sensor noise, off by default.  With noise the images no longer sum to
  // the mixture exactly.
  double noise_snr_db = std::numeric_limits<double>::infinity();
};

struct MixResult {
  TimeSignal mixture;               // channels = sources
  std::vector<TimeSignal> images;   // per source, same channel count
};

// Deterministic well-conditioned default mixing matrix.
inline NdArray default_mixing(std::size_t n) {
  NdArray a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(i, j) = 1.0 / (1.0 + static_cast<double>(i > j ? i - j : j - i));
  return a;
}

namespace mixsim_detail {

// Frobenius condition estimate ||A||_F ||A^-1||_F (an upper bound on the
// 2-norm condition number), via real Gaussian elimination.
inline double cond_frobenius(const NdArray &a) {
  std::size_t n = a.dim(0);
  std::vector<double> m(n * n), inv(n * n, 0.0);
  for (std::size_t i = 0; i < n * n; ++i) m[i] = a[i];
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
    if (std::abs(m[piv * n + col]) < 1e-300)
      return std::numeric_limits<double>::infinity();
    if (piv != col)
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(m[piv * n + c], m[col * n + c]);
        std::swap(inv[piv * n + c], inv[col * n + c]);
      }
    double d = m[col * n + col];
    for (std::size_t c = 0; c < n; ++c) {
      m[col * n + c] /= d;
      inv[col * n + c] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = m[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        m[r * n + c] -= f * m[col * n + c];
        inv[r * n + c] -= f * inv[col * n + c];
      }
    }
  }
  double na = 0.0, ni = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    na += a[i] * a[i];
    ni += inv[i] * inv[i];
  }
  return std::sqrt(na) * std::sqrt(ni);
}

inline std::vector<double> generate_rir(Rng &rng, std::uint32_t sample_rate,
                                        double decay_ms, double tail_gain,
                                        std::size_t max_taps) {
  std::size_t delay = static_cast<std::size_t>(rng.integer(9));
  std::size_t decay_taps = std::max<std::size_t>(
      1, static_cast<std::size_t>(decay_ms * 1e-3 * sample_rate));
  std::size_t len = std::min(max_taps, delay + decay_taps + 1);
  std::vector<double> h(len, 0.0);
  h[delay] = 1.0;
  for (std::size_t t = delay + 1; t < len; ++t) {
    double rel = static_cast<double>(t - delay) /
                 static_cast<double>(decay_taps);
    h[t] = tail_gain * std::pow(10.0, -3.0 * rel) * rng.normal();
  }
  return h;
}

}  // namespace mixsim_detail

// Mixes J equal-length single-channel sources into a determined J-channel
// observation.  Ground-truth per-channel source images are returned and sum
// to the mixture exactly (bitwise) when noise is off, because the mixture is
// accumulated from the images themselves.
inline MixResult mix(const std::vector<TimeSignal> &sources,
                     const MixSpec &spec) {
  if (sources.empty()) throw ContractError("mix: no sources");
  std::size_t n_src = sources.size();
  std::size_t len = sources[0].length();
  std::uint32_t rate = sources[0].sample_rate;
  for (const TimeSignal &s : sources) {
    s.validate();
    if (s.num_channels() != 1)
      throw ContractError("mix: sources must be single-channel");
    if (s.length() != len || s.sample_rate != rate)
      throw ContractError("mix: sources must share length and sample rate");
  }
  std::size_t n_ch = n_src;  // determined

  MixResult out;
  out.images.assign(n_src, TimeSignal{});
  for (std::size_t j = 0; j < n_src; ++j) {
    out.images[j].sample_rate = rate;
    out.images[j].channels.assign(n_ch, std::vector<double>(len, 0.0));
  }

  if (spec.mode == MixMode::kInstantaneous) {
    NdArray a = spec.mixing.size() ? spec.mixing : default_mixing(n_src);
    if (a.rank() != 2 || a.dim(0) != n_ch || a.dim(1) != n_src)
      throw DimensionError("mix: mixing matrix must be " +
                           std::to_string(n_ch) + "x" +
                           std::to_string(n_src));
    double cond = mixsim_detail::cond_frobenius(a);
    if (!(cond < 1e6))
      throw ContractError("mix: mixing matrix condition " +
                          std::to_string(cond) + " exceeds 1e6");
    for (std::size_t j = 0; j < n_src; ++j)
      for (std::size_t i = 0; i < n_ch; ++i) {
        double g = a(i, j);
        const std::vector<double> &s = sources[j].channels[0];
        std::vector<double> &img = out.images[j].channels[i];
        for (std::size_t t = 0; t < len; ++t) img[t] = g * s[t];
      }
  } else {
    std::vector<std::vector<std::vector<double>>> rirs = spec.rirs;
    if (rirs.empty()) {
      Rng rng(spec.seed);
      rirs.assign(n_ch, std::vector<std::vector<double>>(n_src));
      for (std::size_t i = 0; i < n_ch; ++i)
        for (std::size_t j = 0; j < n_src; ++j)
          rirs[i][j] = mixsim_detail::generate_rir(
              rng, rate, spec.rir_decay_ms, spec.rir_tail_gain,
              spec.rir_max_taps);
    }
    if (rirs.size() != n_ch)
      throw DimensionError("mix: need one impulse-response row per channel");
    for (std::size_t i = 0; i < n_ch; ++i) {
      if (rirs[i].size() != n_src)
        throw DimensionError("mix: need one impulse response per source");
      for (std::size_t j = 0; j < n_src; ++j) {
        const std::vector<double> &h = rirs[i][j];
        if (h.empty() || h.size() > spec.rir_max_taps)
          throw ContractError("mix: impulse response length out of range");
        const std::vector<double> &s = sources[j].channels[0];
        std::vector<double> &img = out.images[j].channels[i];
        for (std::size_t t = 0; t < len; ++t) {
          double acc = 0.0;
          std::size_t kmax = std::min(h.size(), t + 1);
          for (std::size_t k = 0; k < kmax; ++k) acc += h[k] * s[t - k];
          img[t] = acc;
        }
      }
    }
  }

  out.mixture.sample_rate = rate;
  out.mixture.channels.assign(n_ch, std::vector<double>(len, 0.0));
  for (std::size_t i = 0; i < n_ch; ++i) {
    std::vector<double> &mx = out.mixture.channels[i];
    for (std::size_t j = 0; j < n_src; ++j) {
      const std::vector<double> &img = out.images[j].channels[i];
      for (std::size_t t = 0; t < len; ++t) mx[t] += img[t];
    }
  }

  if (std::isfinite(spec.noise_snr_db)) {
    double power = 0.0;
    for (const auto &ch : out.mixture.channels)
      for (double v : ch) power += v * v;
    power /= static_cast<double>(n_ch * len);
    double sigma =
        std::sqrt(power / std::pow(10.0, spec.noise_snr_db / 10.0));
    Rng rng(spec.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    for (auto &ch : out.mixture.channels)
      for (double &v : ch) v += sigma * rng.normal();
  }
  return out;
}

}  // namespace bsskit

#endif  // BSSKIT_MIXSIM_HPP_
