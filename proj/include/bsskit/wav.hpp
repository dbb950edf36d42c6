// bsskit/wav.hpp

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

#ifndef BSSKIT_WAV_HPP_
#define BSSKIT_WAV_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bsskit/common.hpp"

namespace bsskit {

// Multichannel time-domain audio, one f64 vector per channel, all equal
// length.
struct TimeSignal {
  std::uint32_t sample_rate = 0;
  std::vector<std::vector<double>> channels;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t length() const {
    return channels.empty() ? 0 : channels[0].size();
  }

  void validate() const {
    if (sample_rate == 0) throw ContractError("TimeSignal: zero sample rate");
    if (channels.empty()) throw ContractError("TimeSignal: no channels");
    for (const auto &c : channels)
      if (c.size() != channels[0].size())
        throw ContractError("TimeSignal: ragged channel lengths");
  }
};

enum class WavFormat { kPcm16, kFloat32 };

namespace wav_detail {

inline void put_u16(std::vector<unsigned char> &b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

inline void put_u32(std::vector<unsigned char> &b, std::uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}

inline std::uint16_t get_u16(const std::vector<unsigned char> &b,
                             std::size_t off) {
  return static_cast<std::uint16_t>(b[off]) |
         (static_cast<std::uint16_t>(b[off + 1]) << 8);
}

inline std::uint32_t get_u32(const std::vector<unsigned char> &b,
                             std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) |
         (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

}  // namespace wav_detail

// Quantize one sample to pcm16.  Scale 32768 in both directions keeps the
// round trip error within 2^-16 for in-range input.
inline std::int16_t pcm16_encode(double s) {
  double q = std::round(s * 32768.0);
  if (q > 32767.0) q = 32767.0;
  if (q < -32768.0) q = -32768.0;
  return static_cast<std::int16_t>(q);
}

inline double pcm16_decode(std::int16_t q) {
  return static_cast<double>(q) / 32768.0;
}

// Reads a RIFF/WAVE file holding PCM16 or IEEE float32 frames, 1..8
// channels.  Unknown chunks are skipped; structural problems raise
// FormatError carrying the byte offset of the offending field.
inline TimeSignal read_wav(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_wav: cannot open " + path);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());

  using wav_detail::get_u16;
  using wav_detail::get_u32;

  if (b.size() < 12) throw FormatError("read_wav: truncated header", 0);
  if (std::memcmp(b.data(), "RIFF", 4) != 0)
    throw FormatError("read_wav: missing RIFF tag", 0);
  if (std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw FormatError("read_wav: missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t format_code = 0, num_channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const char *id = reinterpret_cast<const char *>(b.data() + off);
    std::uint32_t len = get_u32(b, off + 4);
    std::size_t body = off + 8;
    if (body + len > b.size())
      throw FormatError("read_wav: chunk overruns file", off + 4);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("read_wav: fmt chunk too short", off);
      format_code = get_u16(b, body);
      num_channels = get_u16(b, body + 2);
      sample_rate = get_u32(b, body + 4);
      bits = get_u16(b, body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
      have_data = true;
    }
    off = body + len + (len & 1);
  }

  if (!have_fmt) throw FormatError("read_wav: no fmt chunk", 12);
  if (!have_data) throw FormatError("read_wav: no data chunk", 12);
  if (num_channels < 1 || num_channels > 8)
    throw FormatError("read_wav: unsupported channel count " +
                      std::to_string(num_channels));
  if (sample_rate == 0) throw FormatError("read_wav: zero sample rate");

  std::size_t bytes_per_sample;
  if (format_code == 1 && bits == 16) {
    bytes_per_sample = 2;
  } else if (format_code == 3 && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw FormatError("read_wav: unsupported format code " +
                      std::to_string(format_code) + " / " +
                      std::to_string(bits) + " bits");
  }

  std::size_t frame_bytes = bytes_per_sample * num_channels;
  if (data_len % frame_bytes != 0)
    throw FormatError("read_wav: data size not a whole number of frames",
                      data_off);
  std::size_t frames = data_len / frame_bytes;

  TimeSignal sig;
  sig.sample_rate = sample_rate;
  sig.channels.assign(num_channels, std::vector<double>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < num_channels; ++c) {
      std::size_t p = data_off + (f * num_channels + c) * bytes_per_sample;
      if (bytes_per_sample == 2) {
        std::int16_t q = static_cast<std::int16_t>(get_u16(b, p));
        sig.channels[c][f] = pcm16_decode(q);
      } else {
        std::uint32_t raw = get_u32(b, p);
        float v;
        std::memcpy(&v, &raw, 4);
        sig.channels[c][f] = static_cast<double>(v);
      }
    }
  }
  return sig;
}

inline void write_wav(const std::string &path, const TimeSignal &sig,
                      WavFormat format) {
  sig.validate();
  if (sig.num_channels() > 8)
    throw ContractError("write_wav: more than 8 channels");

  using wav_detail::put_u16;
  using wav_detail::put_u32;

  std::size_t frames = sig.length();
  std::size_t nch = sig.num_channels();
  std::size_t bps = (format == WavFormat::kPcm16) ? 2 : 4;
  std::uint32_t data_len = static_cast<std::uint32_t>(frames * nch * bps);

  std::vector<unsigned char> b;
  b.reserve(64 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  std::uint32_t fmt_len = (format == WavFormat::kPcm16) ? 16 : 18;
  std::uint32_t fact_len = (format == WavFormat::kPcm16) ? 0 : 12;
  put_u32(b, 4 + (8 + fmt_len) + fact_len + (8 + data_len));
  b.insert(b.end(), {'W', 'A', 'V', 'E'});

  b.insert(b.end(), {'f', 'm', 't', ' '});
  put_u32(b, fmt_len);
  put_u16(b, format == WavFormat::kPcm16 ? 1 : 3);
  put_u16(b, static_cast<std::uint16_t>(nch));
  put_u32(b, sig.sample_rate);
  put_u32(b, static_cast<std::uint32_t>(sig.sample_rate * nch * bps));
  put_u16(b, static_cast<std::uint16_t>(nch * bps));
  put_u16(b, static_cast<std::uint16_t>(bps * 8));
  if (format == WavFormat::kFloat32) {
    put_u16(b, 0);  // cbSize
    b.insert(b.end(), {'f', 'a', 'c', 't'});
    put_u32(b, 4);
    put_u32(b, static_cast<std::uint32_t>(frames));
  }

  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, data_len);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < nch; ++c) {
      double s = sig.channels[c][f];
      if (format == WavFormat::kPcm16) {
        put_u16(b, static_cast<std::uint16_t>(pcm16_encode(s)));
      } else {
        float v = static_cast<float>(s);
        std::uint32_t raw;
        std::memcpy(&raw, &v, 4);
        put_u32(b, raw);
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("write_wav: cannot open " + path);
  out.write(reinterpret_cast<const char *>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw FormatError("write_wav: write failed for " + path);
}

}  // namespace bsskit

#endif  // BSSKIT_WAV_HPP_
