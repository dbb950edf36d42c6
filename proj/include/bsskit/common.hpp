// bsskit/common.hpp

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

#ifndef BSSKIT_COMMON_HPP_
#define BSSKIT_COMMON_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsskit {

// Error taxonomy.  Every failure surfaces as one of these; callers that need
// to distinguish recoverable from fatal conditions catch the subtype.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Shape or size mismatch between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string &msg) : Error(msg) {}
};

// Malformed on-disk data (WAV, checkpoint, manifest).  Carries a byte offset
// when one is known; offset() is SIZE_MAX otherwise.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string &msg, std::size_t offset = SIZE_MAX)
      : Error(offset == SIZE_MAX
                  ? msg
                  : msg + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Invalid user-facing configuration (CLI flags, config file values).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &msg) : Error(msg) {}
};

// Operation invoked on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  explicit StateError(const std::string &msg) : Error(msg) {}
};

// Broken API precondition detected at a module boundary.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string &msg) : Error(msg) {}
};

// Variance floor shared by the NMF and decoder source models.
inline constexpr double kVarianceFloor = 1e-10;

inline bool is_finite(double x) { return std::isfinite(x); }

inline bool all_finite(const std::vector<double> &v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Deterministic random source.  All randomness in the library flows through
// this class; the standard distribution objects are never used because their
// output is not pinned across implementations, while the raw mt19937_64
// stream and the arithmetic below are.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second value of each pair is cached
  // so the stream consumes exactly one raw draw per two normals.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Uniform integer on [0, n).  Rejection-free modulo is acceptable here:
  // n is always tiny relative to 2^64 so the bias is far below any
  // tolerance in this library.
  std::uint64_t integer(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::integer: n must be positive");
    return gen_() % n;
  }

  // Fisher-Yates; identical order for identical seeds.
  template <typename T>
  void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).  Chainable: feed the
// previous return value back as `seed` to continue a running checksum.
inline std::uint32_t crc32(const void *data, std::size_t len,
                           std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const unsigned char *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < len; ++i)
    c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

}  // namespace bsskit

#endif  // BSSKIT_COMMON_HPP_
