// bsskit/lgm.hpp

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

// Local Gaussian model core shared by the two separation algorithms: the
// per-frequency demixing system, its log-likelihood, the iterative-projection
// update of one demixing vector, and projection back of the separated
// spectrograms onto a reference channel.

#ifndef BSSKIT_LGM_HPP_
#define BSSKIT_LGM_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "bsskit/ndarray.hpp"
#include "bsskit/stft.hpp"

namespace bsskit {

// Small dense complex square matrix, row-major.  Sized for channel counts up
// to 8, so no blocking or pivot scaling heuristics are needed.
class CMat {
 public:
  CMat() = default;
  explicit CMat(std::size_t n) : n_(n), a_(n * n, cplx(0.0, 0.0)) {}

  static CMat identity(std::size_t n) {
    CMat m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = cplx(1.0, 0.0);
    return m;
  }

  std::size_t size() const { return n_; }
  cplx &operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  const cplx &operator()(std::size_t i, std::size_t j) const {
    return a_[i * n_ + j];
  }

  double trace_real() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n_; ++i) t += a_[i * n_ + i].real();
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (const cplx &v : a_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::vector<cplx> a_;
};

namespace lgm_detail {

// Solves A u = b by LU with partial pivoting on a copy.  Returns nullopt when
// a pivot is negligible relative to the matrix scale.
inline std::optional<std::vector<cplx>> solve(CMat a, std::vector<cplx> b) {
  std::size_t n = a.size();
  if (b.size() != n) throw DimensionError("solve: size mismatch");
  double scale = a.max_abs();
  if (scale == 0.0) return std::nullopt;
  double tiny = scale * 1e-13 * static_cast<double>(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) <= tiny) return std::nullopt;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      cplx f = a(r, col) / a(col, col);
      a(r, col) = f;
      for (std::size_t c = col + 1; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    cplx s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * b[c];
    b[i] = s / a(i, i);
  }
  return b;
}

// Hermitian Cholesky feasibility probe: true iff A is positive definite
// within rounding.  Works on a copy; only the lower triangle is touched.
inline bool cholesky_pd(CMat a) {
  std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      cplx s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * std::conj(a(j, k));
      if (i == j) {
        double d = s.real();
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        a(i, i) = cplx(std::sqrt(d), 0.0);
      } else {
        a(i, j) = s / a(j, j).real();
      }
    }
  }
  return true;
}

inline bool col_less(const CMat &m, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    const cplx &x = m(i, a), &y = m(i, b);
    if (x.real() != y.real()) return x.real() < y.real();
    if (x.imag() != y.imag()) return x.imag() < y.imag();
  }
  return false;
}

// log |det A| evaluated after sorting columns into a canonical order.  The
// value of |det| is invariant under column permutation; sorting first makes
// the computed floating-point result bitwise invariant as well, which the
// likelihood relies on for exact source-relabeling invariance.
inline double log_abs_det_canonical(const CMat &m) {
  std::size_t n = m.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&m](std::size_t a, std::size_t b) { return col_less(m, a, b); });
  CMat a(n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) a(i, j) = m(i, order[j]);

  double logdet = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    double p = std::abs(a(piv, col));
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (piv != col)
      for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
    logdet += std::log(std::abs(a(col, col)));
    for (std::size_t r = col + 1; r < n; ++r) {
      cplx f = a(r, col) / a(col, col);
      for (std::size_t c = col + 1; c < n; ++c) a(r, c) -= f * a(col, c);
    }
  }
  return logdet;
}

}  // namespace lgm_detail

// Demixing matrices, one per frequency bin.  Column j of w[f] is the
// demixing vector of source j, applied as y_j(f,n) = w_j(f)^H x(f,n).
struct DemixingSystem {
  std::size_t channels = 0;
  std::vector<CMat> w;  // n_freq matrices, each channels x channels

  static DemixingSystem identity(std::size_t n_freq, std::size_t channels) {
    DemixingSystem d;
    d.channels = channels;
    d.w.assign(n_freq, CMat::identity(channels));
    return d;
  }

  std::size_t n_freq() const { return w.size(); }
};

inline void check_spectrogram_stack(const std::vector<ComplexSpectrogram> &x,
                                    const char *who) {
  if (x.empty()) throw ContractError(std::string(who) + ": empty stack");
  for (const auto &s : x) {
    if (s.n_freq != x[0].n_freq || s.n_frames != x[0].n_frames ||
        s.frame_len != x[0].frame_len)
      throw DimensionError(std::string(who) +
                           ": mismatched spectrogram dimensions");
  }
}

// y_j(f,n) = sum_i conj(w[f](i,j)) x_i(f,n).
inline std::vector<ComplexSpectrogram> apply_demixing(
    const DemixingSystem &dem, const std::vector<ComplexSpectrogram> &x) {
  check_spectrogram_stack(x, "apply_demixing");
  std::size_t nch = x.size();
  if (dem.channels != nch || dem.n_freq() != x[0].n_freq)
    throw DimensionError("apply_demixing: demixing system does not match "
                         "input stack");
  std::size_t n_freq = x[0].n_freq, n_frames = x[0].n_frames;

  std::vector<ComplexSpectrogram> y(nch);
  for (std::size_t j = 0; j < nch; ++j) {
    y[j] = x[0];
    std::fill(y[j].data.begin(), y[j].data.end(), cplx(0.0, 0.0));
  }
  for (std::size_t f = 0; f < n_freq; ++f) {
    const CMat &w = dem.w[f];
    for (std::size_t j = 0; j < nch; ++j) {
      cplx *out = y[j].data.data() + f * n_frames;
      for (std::size_t i = 0; i < nch; ++i) {
        cplx wc = std::conj(w(i, j));
        const cplx *xi = x[i].data.data() + f * n_frames;
        for (std::size_t n = 0; n < n_frames; ++n) out[n] += wc * xi[n];
      }
    }
  }
  return y;
}

// Variance-weighted spatial covariance of one source:
//   Sigma_j(f) = (1/N) sum_n x(f,n) x(f,n)^H / v_j(f,n).
// Hermitian by construction (upper triangle computed, mirrored).
inline std::vector<CMat> weighted_covariance(
    const std::vector<ComplexSpectrogram> &x, const NdArray &v) {
  check_spectrogram_stack(x, "weighted_covariance");
  std::size_t nch = x.size();
  std::size_t n_freq = x[0].n_freq, n_frames = x[0].n_frames;
  if (v.rank() != 2 || v.dim(0) != n_freq || v.dim(1) != n_frames)
    throw DimensionError("weighted_covariance: variance map shape " +
                         v.shape_str() + " does not match spectrograms");

  std::vector<CMat> sig(n_freq, CMat(nch));
  std::vector<cplx> xn(nch);
  for (std::size_t f = 0; f < n_freq; ++f) {
    CMat &s = sig[f];
    for (std::size_t n = 0; n < n_frames; ++n) {
      double vv = std::max(v(f, n), kVarianceFloor);
      double inv = 1.0 / (vv * static_cast<double>(n_frames));
      for (std::size_t i = 0; i < nch; ++i)
        xn[i] = x[i].data[f * n_frames + n];
      for (std::size_t i = 0; i < nch; ++i)
        for (std::size_t j = i; j < nch; ++j)
          s(i, j) += xn[i] * std::conj(xn[j]) * inv;
    }
    for (std::size_t i = 0; i < nch; ++i) {
      s(i, i) = cplx(s(i, i).real(), 0.0);
      for (std::size_t j = i + 1; j < nch; ++j) s(j, i) = std::conj(s(i, j));
    }
  }
  return sig;
}

// Log-likelihood of the demixed local Gaussian model, constants dropped:
//   LL = 2N sum_f log|det W(f)| - sum_j sum_{f,n} (log v_j + |y_j|^2 / v_j).
// The per-source totals are summed in sorted order and the determinant uses
// a canonical column order, so relabeling sources leaves the returned value
// bitwise identical.
inline double log_likelihood(const DemixingSystem &dem,
                             const std::vector<ComplexSpectrogram> &x,
                             const std::vector<NdArray> &v) {
  check_spectrogram_stack(x, "log_likelihood");
  std::size_t nch = x.size();
  if (v.size() != nch)
    throw DimensionError("log_likelihood: need one variance map per source");
  std::size_t n_freq = x[0].n_freq, n_frames = x[0].n_frames;
  if (dem.channels != nch || dem.n_freq() != n_freq)
    throw DimensionError("log_likelihood: demixing system mismatch");

  double det_term = 0.0;
  for (std::size_t f = 0; f < n_freq; ++f) {
    double ld = lgm_detail::log_abs_det_canonical(dem.w[f]);
    if (std::isinf(ld)) return -std::numeric_limits<double>::infinity();
    det_term += ld;
  }
  det_term *= 2.0 * static_cast<double>(n_frames);

  std::vector<ComplexSpectrogram> y = apply_demixing(dem, x);
  std::vector<double> src_terms(nch, 0.0);
  for (std::size_t j = 0; j < nch; ++j) {
    const NdArray &vj = v[j];
    if (vj.rank() != 2 || vj.dim(0) != n_freq || vj.dim(1) != n_frames)
      throw DimensionError("log_likelihood: variance map shape mismatch");
    double acc = 0.0;
    for (std::size_t f = 0; f < n_freq; ++f)
      for (std::size_t n = 0; n < n_frames; ++n) {
        double vv = std::max(vj(f, n), kVarianceFloor);
        acc += std::log(vv) + std::norm(y[j].data[f * n_frames + n]) / vv;
      }
    src_terms[j] = acc;
  }
  std::sort(src_terms.begin(), src_terms.end());
  double src_total = 0.0;
  for (double t : src_terms) src_total += t;
  return det_term - src_total;
}

struct IpResult {
  bool updated = false;
};

// Iterative-projection update of demixing vector j at frequency f:
//   w_j = (W(f)^H Sigma)^{-1} e_j, then w_j /= sqrt(w_j^H Sigma w_j).
// Sigma is first nudged to positive definite if needed (ridge of
// 1e-10 trace/I).  A singular system or nonpositive normalizer skips the
// update, leaving the previous vector in place.
inline IpResult ip_update(DemixingSystem &dem, CMat sigma, std::size_t j,
                          std::size_t f) {
  std::size_t nch = dem.channels;
  if (sigma.size() != nch)
    throw DimensionError("ip_update: covariance size mismatch");
  if (j >= nch || f >= dem.n_freq())
    throw DimensionError("ip_update: index out of range");

  CMat probe = sigma;
  for (std::size_t i = 0; i < nch; ++i)
    probe(i, i) -= cplx(1e-12, 0.0);
  if (!lgm_detail::cholesky_pd(probe)) {
    double ridge = 1e-10 * sigma.trace_real() / static_cast<double>(nch);
    if (!(ridge > 0.0)) ridge = 1e-10;
    for (std::size_t i = 0; i < nch; ++i) sigma(i, i) += cplx(ridge, 0.0);
  }

  const CMat &w = dem.w[f];
  CMat m(nch);
  for (std::size_t r = 0; r < nch; ++r)
    for (std::size_t c = 0; c < nch; ++c) {
      cplx s(0.0, 0.0);
      for (std::size_t k = 0; k < nch; ++k)
        s += std::conj(w(k, r)) * sigma(k, c);
      m(r, c) = s;
    }

  std::vector<cplx> e(nch, cplx(0.0, 0.0));
  e[j] = cplx(1.0, 0.0);
  auto u = lgm_detail::solve(m, std::move(e));
  if (!u) return {false};

  // denom = u^H Sigma u, real for Hermitian Sigma.
  double denom = 0.0;
  for (std::size_t r = 0; r < nch; ++r) {
    cplx s(0.0, 0.0);
    for (std::size_t c = 0; c < nch; ++c) s += sigma(r, c) * (*u)[c];
    denom += (std::conj((*u)[r]) * s).real();
  }
  if (!(denom > 0.0) || !std::isfinite(denom)) return {false};

  double inv = 1.0 / std::sqrt(denom);
  bool finite = true;
  for (std::size_t i = 0; i < nch; ++i) {
    (*u)[i] *= inv;
    if (!std::isfinite((*u)[i].real()) || !std::isfinite((*u)[i].imag()))
      finite = false;
  }
  if (!finite) return {false};
  for (std::size_t i = 0; i < nch; ++i) dem.w[f](i, j) = (*u)[i];
  return {true};
}

// Rescales each separated spectrogram so their sum best reconstructs the
// reference-channel mixture per frequency (least squares over frames).  When
// Y spans the mixture exactly, as it does for any nonsingular demixing
// system, this reproduces the reference channel's source images.  Sources
// with zero total energy are flagged and kept at scale 1.
inline std::vector<bool> projection_back(std::vector<ComplexSpectrogram> &y,
                                         const ComplexSpectrogram &x_ref) {
  check_spectrogram_stack(y, "projection_back");
  std::size_t nsrc = y.size();
  std::size_t n_freq = x_ref.n_freq, n_frames = x_ref.n_frames;
  if (y[0].n_freq != n_freq || y[0].n_frames != n_frames)
    throw DimensionError("projection_back: reference shape mismatch");

  std::vector<bool> flagged(nsrc, false);
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < nsrc; ++j) {
    double energy = 0.0;
    for (const cplx &c : y[j].data) energy += std::norm(c);
    if (energy == 0.0)
      flagged[j] = true;
    else
      active.push_back(j);
  }

  for (std::size_t f = 0; f < n_freq; ++f) {
    std::size_t na = active.size();
    if (na == 0) break;
    CMat g(na);
    std::vector<cplx> c(na, cplx(0.0, 0.0));
    for (std::size_t a = 0; a < na; ++a) {
      const cplx *ya = y[active[a]].data.data() + f * n_frames;
      const cplx *xr = x_ref.data.data() + f * n_frames;
      for (std::size_t b = a; b < na; ++b) {
        const cplx *yb = y[active[b]].data.data() + f * n_frames;
        cplx s(0.0, 0.0);
        for (std::size_t n = 0; n < n_frames; ++n)
          s += std::conj(ya[n]) * yb[n];
        g(a, b) = s;
        if (b != a) g(b, a) = std::conj(s);
      }
      cplx s(0.0, 0.0);
      for (std::size_t n = 0; n < n_frames; ++n) s += std::conj(ya[n]) * xr[n];
      c[a] = s;
    }
    auto alpha = lgm_detail::solve(g, c);
    if (!alpha) {
      // Degenerate frame set at this frequency (for example an all-zero
      // bin); fall back to ridge so the solve is always defined.
      double ridge = std::max(g.trace_real(), 1.0) * 1e-12;
      for (std::size_t a = 0; a < na; ++a) g(a, a) += cplx(ridge, 0.0);
      alpha = lgm_detail::solve(g, c);
      if (!alpha) continue;
    }
    for (std::size_t a = 0; a < na; ++a) {
      cplx *ya = y[active[a]].data.data() + f * n_frames;
      for (std::size_t n = 0; n < n_frames; ++n) ya[n] *= (*alpha)[a];
    }
  }
  return flagged;
}

}  // namespace bsskit

#endif  // BSSKIT_LGM_HPP_
