// bsskit/stft.hpp

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

#ifndef BSSKIT_STFT_HPP_
#define BSSKIT_STFT_HPP_

#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "bsskit/common.hpp"
#include "bsskit/wav.hpp"

namespace bsskit {

using cplx = std::complex<double>;

namespace fft_detail {

// Iterative radix-2 Cooley-Tukey, in place.  n must be a power of two.
inline void fft_pow2(std::vector<cplx> &a, bool inverse) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1 : -1);
    cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        cplx u = a[i + j];
        cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto &x : a) x /= static_cast<double>(n);
}

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

// Bluestein chirp-z transform: evaluates an arbitrary-length DFT through a
// power-of-two linear convolution, so non-power-of-two frame lengths cost
// only a constant factor.
inline void fft_bluestein(std::vector<cplx> &a, bool inverse) {
  std::size_t n = a.size();
  double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large n.
    std::size_t k2 = (k * k) % (2 * n);
    double ang = sign * M_PI * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> fa(m, cplx(0.0, 0.0)), fb(m, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  for (std::size_t k = 0; k < n; ++k) {
    fb[k] = std::conj(chirp[k]);
    if (k) fb[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(fa, false);
  fft_pow2(fb, false);
  for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
  fft_pow2(fa, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * chirp[k];
  if (inverse)
    for (auto &x : a) x /= static_cast<double>(n);
}

}  // namespace fft_detail

// In-place DFT; inverse includes the 1/n scale.
inline void fft(std::vector<cplx> &a, bool inverse = false) {
  if (a.empty()) throw DimensionError("fft: empty input");
  if (fft_detail::is_pow2(a.size()))
    fft_detail::fft_pow2(a, inverse);
  else
    fft_detail::fft_bluestein(a, inverse);
}

// One-sided complex spectrogram of a single channel, bin-major storage.
struct ComplexSpectrogram {
  std::size_t n_freq = 0;    // frame_len / 2 + 1
  std::size_t n_frames = 0;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::uint32_t sample_rate = 0;
  std::vector<cplx> data;  // [f * n_frames + n]

  cplx &at(std::size_t f, std::size_t n) { return data[f * n_frames + n]; }
  const cplx &at(std::size_t f, std::size_t n) const {
    return data[f * n_frames + n];
  }
  double power(std::size_t f, std::size_t n) const {
    return std::norm(at(f, n));
  }
};

// Periodic Hamming window.  With 50% overlap consecutive windows sum to
// exactly 1.08 at every sample, which is what makes the overlap-add inverse
// below exact.
inline std::vector<double> hamming_periodic(std::size_t len) {
  std::vector<double> w(len);
  for (std::size_t k = 0; k < len; ++k)
    w[k] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(k) /
                                  static_cast<double>(len));
  return w;
}

inline constexpr double kHammingColaSum = 1.08;

namespace stft_detail {

inline void check_framing(std::size_t frame_len, std::size_t hop) {
  if (frame_len < 4 || frame_len % 2 != 0)
    throw ConfigError("stft: frame length must be even and >= 4, got " +
                      std::to_string(frame_len));
  if (hop != frame_len / 2)
    throw ConfigError("stft: hop must equal frame_len/2, got hop " +
                      std::to_string(hop) + " for frame " +
                      std::to_string(frame_len));
}

}  // namespace stft_detail

// Forward STFT of one channel.  The signal is zero-padded by one hop on each
// side, so every original sample is covered by exactly two frames and the
// first/last samples are not attenuated by the window edge.
inline ComplexSpectrogram stft(const std::vector<double> &samples,
                               std::uint32_t sample_rate,
                               std::size_t frame_len, std::size_t hop) {
  stft_detail::check_framing(frame_len, hop);
  if (samples.empty()) throw ContractError("stft: empty signal");
  std::size_t len = samples.size();
  std::size_t n_frames = (len - 1) / hop + 2;
  std::size_t n_freq = frame_len / 2 + 1;

  std::vector<double> window = hamming_periodic(frame_len);
  ComplexSpectrogram spec;
  spec.n_freq = n_freq;
  spec.n_frames = n_frames;
  spec.frame_len = frame_len;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.data.assign(n_freq * n_frames, cplx(0.0, 0.0));

  std::vector<cplx> buf(frame_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    // Frame t starts at t*hop - hop in unpadded sample coordinates.
    std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * hop) -
                           static_cast<std::ptrdiff_t>(hop);
    for (std::size_t k = 0; k < frame_len; ++k) {
      std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(k);
      double s = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len))
                     ? samples[static_cast<std::size_t>(idx)]
                     : 0.0;
      buf[k] = cplx(s * window[k], 0.0);
    }
    fft(buf, false);
    for (std::size_t f = 0; f < n_freq; ++f) spec.at(f, t) = buf[f];
  }
  return spec;
}

// Inverse STFT by plain overlap-add (no synthesis window) divided by the
// constant window sum.  Imaginary parts of the DC and Nyquist bins are
// discarded at synthesis since a real signal cannot carry them.
inline std::vector<double> istft(const ComplexSpectrogram &spec,
                                 std::size_t original_length) {
  stft_detail::check_framing(spec.frame_len, spec.hop);
  if (spec.n_freq != spec.frame_len / 2 + 1)
    throw DimensionError("istft: n_freq inconsistent with frame_len");
  if (spec.n_frames == 0) throw ContractError("istft: empty spectrogram");
  if (original_length == 0) throw ContractError("istft: zero output length");
  std::size_t expected = (original_length - 1) / spec.hop + 2;
  if (expected != spec.n_frames)
    throw DimensionError("istft: original_length " +
                         std::to_string(original_length) +
                         " inconsistent with " +
                         std::to_string(spec.n_frames) + " frames");

  std::size_t frame_len = spec.frame_len, hop = spec.hop;
  std::size_t padded = (spec.n_frames - 1) * hop + frame_len;
  std::vector<double> acc(padded, 0.0);

  std::vector<cplx> buf(frame_len);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    buf[0] = cplx(spec.at(0, t).real(), 0.0);
    buf[frame_len / 2] = cplx(spec.at(frame_len / 2, t).real(), 0.0);
    for (std::size_t f = 1; f < frame_len / 2; ++f) {
      buf[f] = spec.at(f, t);
      buf[frame_len - f] = std::conj(spec.at(f, t));
    }
    fft(buf, true);
    double *dst = acc.data() + t * hop;
    for (std::size_t k = 0; k < frame_len; ++k) dst[k] += buf[k].real();
  }

  std::vector<double> out(original_length);
  for (std::size_t i = 0; i < original_length; ++i)
    out[i] = acc[i + hop] / kHammingColaSum;
  return out;
}

inline std::vector<ComplexSpectrogram> stft_all(const TimeSignal &sig,
                                                std::size_t frame_len,
                                                std::size_t hop) {
  sig.validate();
  std::vector<ComplexSpectrogram> out;
  out.reserve(sig.num_channels());
  for (const auto &ch : sig.channels)
    out.push_back(stft(ch, sig.sample_rate, frame_len, hop));
  return out;
}

enum class SpectrogramDump { kComplex, kPower };

// CSV dump, one row per (frame, bin) pair with frames outermost.  Values are
// printed with 17 significant digits so they survive a parse round trip.
inline void dump_spectrogram_csv(const ComplexSpectrogram &spec,
                                 const std::string &path,
                                 SpectrogramDump mode) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("dump_spectrogram_csv: cannot open " + path);
  char line[128];
  out << (mode == SpectrogramDump::kComplex ? "f,n,re,im\n" : "f,n,power\n");
  for (std::size_t n = 0; n < spec.n_frames; ++n) {
    for (std::size_t f = 0; f < spec.n_freq; ++f) {
      if (mode == SpectrogramDump::kComplex) {
        std::snprintf(line, sizeof(line), "%zu,%zu,%.17g,%.17g\n", f, n,
                      spec.at(f, n).real(), spec.at(f, n).imag());
      } else {
        std::snprintf(line, sizeof(line), "%zu,%zu,%.17g\n", f, n,
                      spec.power(f, n));
      }
      out << line;
    }
  }
  if (!out) throw FormatError("dump_spectrogram_csv: write failed " + path);
}

}  // namespace bsskit

#endif  // BSSKIT_STFT_HPP_
