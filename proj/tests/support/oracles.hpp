// tests/support/oracles.hpp

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

// Independent reference implementations used to pin expected test values.
// Everything here is deliberately naive: direct DFT, elementwise finite
// differences, brute-force reductions.  None of it shares code with the
// library under test.

#ifndef BSSKIT_TESTS_SUPPORT_ORACLES_HPP_
#define BSSKIT_TESTS_SUPPORT_ORACLES_HPP_

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "bsskit/autodiff.hpp"
#include "bsskit/ndarray.hpp"

namespace oracles {

// Central finite-difference check of the gradients currently produced by
// `grad` against the scalar function `value` of the parameter values.
// Error is |ad - fd| / max(1, |ad|, |fd|): relative where gradients are
// O(1) or larger, absolute below that so finite-difference roundoff noise
// on true zeros is not amplified.  Test functions are scaled to keep their
// gradients O(1).
inline double fd_max_err(const std::vector<bsskit::ad::Parameter *> &params,
                         const std::function<double()> &value,
                         const std::function<void()> &grad, double h = 1e-5) {
  for (auto *p : params) p->zero_grad();
  grad();
  double worst = 0.0;
  for (auto *p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double keep = p->value[i];
      p->value[i] = keep + h;
      double fp = value();
      p->value[i] = keep - h;
      double fm = value();
      p->value[i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double adv = p->grad[i];
      double err =
          std::abs(adv - fd) / std::max({1.0, std::abs(adv), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Direct O(n^2) DFT, the reference for every FFT path.
inline std::vector<std::complex<double>> dft(
    const std::vector<std::complex<double>> &x, bool inverse = false) {
  std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double ang = sign * 2.0 * M_PI * static_cast<double>(k) *
                   static_cast<double>(t) / static_cast<double>(n);
      s += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? s / static_cast<double>(n) : s;
  }
  return out;
}

// Direct cross-correlation convolution with zero padding, independent of the
// library's loop structure.
inline bsskit::NdArray conv1d_ref(const bsskit::NdArray &x,
                                  const bsskit::NdArray &w,
                                  const bsskit::NdArray &b, std::size_t stride,
                                  std::size_t pad) {
  std::size_t cin = x.dim(0), n = x.dim(1);
  std::size_t cout = w.dim(0), k = w.dim(2);
  std::size_t m = (n + 2 * pad - k) / stride + 1;
  bsskit::NdArray out({cout, m});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = b(co);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t kk = 0; kk < k; ++kk) {
          std::ptrdiff_t t = static_cast<std::ptrdiff_t>(j * stride + kk) -
                             static_cast<std::ptrdiff_t>(pad);
          if (t >= 0 && t < static_cast<std::ptrdiff_t>(n))
            acc += w(co, ci, kk) * x(ci, static_cast<std::size_t>(t));
        }
      out(co, j) = acc;
    }
  return out;
}

// Direct transposed convolution (scatter form).
inline bsskit::NdArray deconv1d_ref(const bsskit::NdArray &x,
                                    const bsskit::NdArray &w,
                                    const bsskit::NdArray &b,
                                    std::size_t stride, std::size_t pad) {
  std::size_t cin = x.dim(0), n = x.dim(1);
  std::size_t cout = w.dim(1), k = w.dim(2);
  std::size_t m = (n - 1) * stride + k - 2 * pad;
  bsskit::NdArray out({cout, m});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t t = 0; t < m; ++t) out(co, t) = b(co);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t j = 0; j < n; ++j) {
          std::ptrdiff_t t = static_cast<std::ptrdiff_t>(j * stride + kk) -
                             static_cast<std::ptrdiff_t>(pad);
          if (t >= 0 && t < static_cast<std::ptrdiff_t>(m))
            out(co, static_cast<std::size_t>(t)) += w(ci, co, kk) * x(ci, j);
        }
  return out;
}

inline void fill_uniform(bsskit::NdArray &a, bsskit::Rng &rng, double lo,
                         double hi) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
}

}  // namespace oracles

#endif  // BSSKIT_TESTS_SUPPORT_ORACLES_HPP_
