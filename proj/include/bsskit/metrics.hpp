// bsskit/metrics.hpp

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

// Separation quality metrics.  Estimates are decomposed against the span of
// time-delayed references (default 32 taps): the projection onto a single
// reference's delayed copies is the target, the remainder of the projection
// onto all references is interference, and what falls outside the span is
// artifact.  All ratios are reported in dB, clamped to [-100, 100].

#ifndef BSSKIT_METRICS_HPP_
#define BSSKIT_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "bsskit/common.hpp"

namespace bsskit {

struct SourceMetrics {
  bool valid = false;  // false for zero-energy references
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
  double si_sdr = 0.0;
};

struct EvalReport {
  // permutation[k] is the estimate index assigned to reference k.
  std::vector<std::size_t> permutation;
  std::vector<SourceMetrics> per_source;  // indexed by reference
  double mean_sdr = 0.0;  // over valid references
  double mean_sir = 0.0;
  double mean_sar = 0.0;
  double mean_si_sdr = 0.0;
  std::size_t proj_taps = 0;
};

namespace metrics_detail {

inline double dot(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double energy(const std::vector<double> &a) { return dot(a, a); }

inline double clamp_db(double num, double den) {
  if (num <= 0.0) return -100.0;
  if (den <= 0.0) return 100.0;
  double db = 10.0 * std::log10(num / den);
  return std::min(100.0, std::max(-100.0, db));
}

// <x, r delayed by l> = sum_t x[t] r[t-l].
inline double delayed_dot(const std::vector<double> &x,
                          const std::vector<double> &r, std::size_t l) {
  double s = 0.0;
  for (std::size_t t = l; t < x.size(); ++t) s += x[t] * r[t - l];
  return s;
}

// Gram entry between r_a delayed by la and r_b delayed by lb.
inline double delayed_gram(const std::vector<double> &ra, std::size_t la,
                           const std::vector<double> &rb, std::size_t lb) {
  std::size_t t0 = std::max(la, lb);
  double s = 0.0;
  for (std::size_t t = t0; t < ra.size(); ++t)
    s += ra[t - la] * rb[t - lb];
  return s;
}

// Symmetric positive semi-definite solve with escalating diagonal ridge.
// Returns the solution of (G + ridge I) beta = c via Cholesky; the ridge
// starts at eps * mean diagonal and grows tenfold until the factorization
// succeeds.
inline std::vector<double> ridge_solve(std::vector<double> g,
                                       const std::vector<double> &c) {
  std::size_t n = c.size();
  double diag_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_mean += g[i * n + i];
  diag_mean = std::max(diag_mean / static_cast<double>(n), 1e-300);
  double ridge = diag_mean * 1e-12;
  for (int attempt = 0; attempt < 20; ++attempt) {
    std::vector<double> l(g);
    for (std::size_t i = 0; i < n; ++i) l[i * n + i] += ridge;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = l[i * n + j];
        for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
        if (i == j) {
          if (!(s > 0.0)) { ok = false; break; }
          l[i * n + i] = std::sqrt(s);
        } else {
          l[i * n + j] = s / l[j * n + j];
        }
      }
    }
    if (!ok) {
      ridge *= 10.0;
      continue;
    }
    std::vector<double> y(n), beta(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = c[i];
      for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * y[k];
      y[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * beta[k];
      beta[ii] = s / l[ii * n + ii];
    }
    return beta;
  }
  throw Error("ridge_solve: Gram matrix not factorizable");
}

// Precomputed delayed-reference geometry over the active (nonzero) refs.
struct ProjectionBasis {
  std::vector<std::size_t> active;  // reference indices in basis order
  std::size_t taps = 0;
  std::vector<double> gram;  // (active*taps)^2
  const std::vector<std::vector<double>> *refs = nullptr;

  std::size_t dim() const { return active.size() * taps; }

  // Least-squares coefficients of x on the whole active span.
  std::vector<double> coeffs(const std::vector<double> &x) const {
    std::size_t n = dim();
    std::vector<double> c(n);
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t l = 0; l < taps; ++l)
        c[a * taps + l] = delayed_dot(x, (*refs)[active[a]], l);
    return ridge_solve(gram, c);
  }

  // Materializes sum over span members of beta * delayed ref, restricted to
  // basis columns [lo, hi).
  std::vector<double> synth(const std::vector<double> &beta, std::size_t lo,
                            std::size_t hi, std::size_t len) const {
    std::vector<double> y(len, 0.0);
    for (std::size_t idx = lo; idx < hi; ++idx) {
      double b = beta[idx];
      if (b == 0.0) continue;
      const std::vector<double> &r = (*refs)[active[idx / taps]];
      std::size_t l = idx % taps;
      for (std::size_t t = l; t < len; ++t) y[t] += b * r[t - l];
    }
    return y;
  }
};

inline ProjectionBasis build_basis(const std::vector<std::vector<double>> &refs,
                                   std::size_t taps) {
  ProjectionBasis basis;
  basis.taps = taps;
  basis.refs = &refs;
  for (std::size_t j = 0; j < refs.size(); ++j)
    if (energy(refs[j]) > 0.0) basis.active.push_back(j);
  std::size_t n = basis.dim();
  basis.gram.assign(n * n, 0.0);
  for (std::size_t a = 0; a < basis.active.size(); ++a)
    for (std::size_t b = a; b < basis.active.size(); ++b)
      for (std::size_t la = 0; la < taps; ++la)
        for (std::size_t lb = (a == b ? la : 0); lb < taps; ++lb) {
          double v = delayed_gram(refs[basis.active[a]], la,
                                  refs[basis.active[b]], lb);
          basis.gram[(a * taps + la) * n + (b * taps + lb)] = v;
          basis.gram[(b * taps + lb) * n + (a * taps + la)] = v;
        }
  return basis;
}

struct Decomposition {
  double target_e = 0.0;
  double interf_e = 0.0;
  double artif_e = 0.0;
  double target_plus_interf_e = 0.0;
  double distortion_e = 0.0;  // interference + artifact combined
};

// Splits estimate x against reference `ref_pos` (position within
// basis.active).  s_target projects on that reference's own delayed block,
// s_all on the full active span.
inline Decomposition decompose(const ProjectionBasis &basis,
                               const std::vector<double> &x,
                               std::size_t ref_pos) {
  std::size_t len = x.size();
  std::size_t taps = basis.taps;
  const std::vector<double> &r = (*basis.refs)[basis.active[ref_pos]];

  std::vector<double> beta_all = basis.coeffs(x);
  std::vector<double> s_all = basis.synth(beta_all, 0, basis.dim(), len);

  // Target projection uses only this reference's L x L Gram block.
  std::vector<double> g(taps * taps), c(taps);
  for (std::size_t la = 0; la < taps; ++la) {
    c[la] = delayed_dot(x, r, la);
    for (std::size_t lb = la; lb < taps; ++lb) {
      double v = delayed_gram(r, la, r, lb);
      g[la * taps + lb] = v;
      g[lb * taps + la] = v;
    }
  }
  std::vector<double> beta_t = ridge_solve(g, c);
  std::vector<double> s_target(len, 0.0);
  for (std::size_t l = 0; l < taps; ++l) {
    double b = beta_t[l];
    if (b == 0.0) continue;
    for (std::size_t t = l; t < len; ++t) s_target[t] += b * r[t - l];
  }

  Decomposition d;
  d.target_e = energy(s_target);
  double ti = 0.0, interf = 0.0, artif = 0.0, dist = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double e_i = s_all[t] - s_target[t];
    double e_a = x[t] - s_all[t];
    interf += e_i * e_i;
    artif += e_a * e_a;
    double tpi = s_target[t] + e_i;
    ti += tpi * tpi;
    double de = e_i + e_a;
    dist += de * de;
  }
  d.interf_e = interf;
  d.artif_e = artif;
  d.target_plus_interf_e = ti;
  d.distortion_e = dist;
  return d;
}

}  // namespace metrics_detail

// Scale-invariant SDR: optimal scalar projection of the estimate onto the
// reference.  Throws on a zero-energy reference.
inline double si_sdr(const std::vector<double> &estimate,
                     const std::vector<double> &reference) {
  if (estimate.size() != reference.size())
    throw DimensionError("si_sdr: length mismatch");
  double rr = metrics_detail::energy(reference);
  if (!(rr > 0.0)) throw ContractError("si_sdr: zero-energy reference");
  double alpha = metrics_detail::dot(estimate, reference) / rr;
  double num = alpha * alpha * rr;
  double den = 0.0;
  for (std::size_t t = 0; t < estimate.size(); ++t) {
    double e = estimate[t] - alpha * reference[t];
    den += e * e;
  }
  return metrics_detail::clamp_db(num, den);
}

// Exhaustive assignment of estimates to references maximizing total SIR.
// `sir[i * n_ref + k]` is the SIR of estimate i against reference k.  Ties
// resolve to the lexicographically smallest permutation because candidates
// are visited in lexicographic order and only strict improvements win.
inline std::vector<std::size_t> align_permutation_from_sir(
    const std::vector<double> &sir, std::size_t n_est, std::size_t n_ref) {
  if (n_est != n_ref || sir.size() != n_est * n_ref)
    throw DimensionError("align_permutation: need square SIR matrix");
  std::vector<std::size_t> perm(n_ref), best(n_ref);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_sum = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t k = 0; k < n_ref; ++k) s += sir[perm[k] * n_ref + k];
    if (s > best_sum) {
      best_sum = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Full evaluation: permutation alignment by pairwise SIR, then SDR/SIR/SAR
// and SI-SDR per reference.  Zero-energy references are excluded from the
// projection span and reported as invalid; their assigned estimates are
// whatever the permutation left over.
inline EvalReport bss_eval(const std::vector<std::vector<double>> &estimates,
                           const std::vector<std::vector<double>> &references,
                           std::size_t taps = 32) {
  using namespace metrics_detail;
  if (estimates.empty() || estimates.size() != references.size())
    throw DimensionError("bss_eval: need equal nonzero estimate and "
                         "reference counts");
  std::size_t n = references.size();
  std::size_t len = references[0].size();
  if (len == 0) throw ContractError("bss_eval: empty signals");
  for (std::size_t j = 0; j < n; ++j)
    if (estimates[j].size() != len || references[j].size() != len)
      throw DimensionError("bss_eval: all signals must share one length");
  if (taps == 0 || taps > len)
    throw ConfigError("bss_eval: taps must be in [1, signal length]");

  ProjectionBasis basis = build_basis(references, taps);
  std::vector<bool> ref_ok(n, false);
  std::vector<std::size_t> pos(n, 0);
  for (std::size_t a = 0; a < basis.active.size(); ++a) {
    ref_ok[basis.active[a]] = true;
    pos[basis.active[a]] = a;
  }

  // Pairwise decompositions: est i against each active ref k.
  std::vector<Decomposition> dec(n * n);
  std::vector<double> sir_mat(n * n, -100.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (!ref_ok[k]) continue;
      dec[i * n + k] = decompose(basis, estimates[i], pos[k]);
      sir_mat[i * n + k] =
          clamp_db(dec[i * n + k].target_e, dec[i * n + k].interf_e);
    }

  EvalReport rep;
  rep.proj_taps = taps;
  rep.permutation = align_permutation_from_sir(sir_mat, n, n);
  rep.per_source.assign(n, SourceMetrics{});

  std::size_t n_valid = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!ref_ok[k]) continue;
    std::size_t i = rep.permutation[k];
    const Decomposition &d = dec[i * n + k];
    SourceMetrics &m = rep.per_source[k];
    m.valid = true;
    m.sdr = clamp_db(d.target_e, d.distortion_e);
    m.sir = clamp_db(d.target_e, d.interf_e);
    m.sar = clamp_db(d.target_plus_interf_e, d.artif_e);
    m.si_sdr = si_sdr(estimates[i], references[k]);
    rep.mean_sdr += m.sdr;
    rep.mean_sir += m.sir;
    rep.mean_sar += m.sar;
    rep.mean_si_sdr += m.si_sdr;
    ++n_valid;
  }
  if (n_valid == 0) throw ContractError("bss_eval: all references silent");
  rep.mean_sdr /= static_cast<double>(n_valid);
  rep.mean_sir /= static_cast<double>(n_valid);
  rep.mean_sar /= static_cast<double>(n_valid);
  rep.mean_si_sdr /= static_cast<double>(n_valid);
  return rep;
}

// Convenience overload aligning estimates to references directly.
inline std::vector<std::size_t> align_permutation(
    const std::vector<std::vector<double>> &estimates,
    const std::vector<std::vector<double>> &references, std::size_t taps = 32) {
  return bss_eval(estimates, references, taps).permutation;
}

}  // namespace bsskit

#endif  // BSSKIT_METRICS_HPP_
