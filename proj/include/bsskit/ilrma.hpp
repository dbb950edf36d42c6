// bsskit/ilrma.hpp

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

// Determined blind source separation with low-rank nonnegative source
// models.  Each source's short-time power is modeled as basis x activation;
// demixing vectors and factors are alternately updated so the demixed-model
// log-likelihood never decreases.

#ifndef BSSKIT_ILRMA_HPP_
#define BSSKIT_ILRMA_HPP_

#include <cstdint>
#include <vector>

#include "bsskit/lgm.hpp"
#include "bsskit/ndarray.hpp"

namespace bsskit {

// Low-rank spectral model of one source: basis is n_freq x K, activation is
// K x n_frames, both nonnegative.
struct NmfFactor {
  NdArray basis;
  NdArray activation;
};

using NmfModel = std::vector<NmfFactor>;

// v(f,n) = sum_k basis(f,k) activation(k,n), floored at the shared variance
// floor so downstream divisions are safe.
inline NdArray nmf_variances(const NmfFactor &m) {
  if (m.basis.rank() != 2 || m.activation.rank() != 2 ||
      m.basis.dim(1) != m.activation.dim(0))
    throw DimensionError("nmf_variances: basis " + m.basis.shape_str() +
                         " incompatible with activation " +
                         m.activation.shape_str());
  std::size_t n_freq = m.basis.dim(0), k = m.basis.dim(1),
              n_frames = m.activation.dim(1);
  NdArray v({n_freq, n_frames});
  for (std::size_t f = 0; f < n_freq; ++f) {
    double *vf = v.data() + f * n_frames;
    for (std::size_t kk = 0; kk < k; ++kk) {
      double b = m.basis[f * k + kk];
      const double *h = m.activation.data() + kk * n_frames;
      for (std::size_t n = 0; n < n_frames; ++n) vf[n] += b * h[n];
    }
    for (std::size_t n = 0; n < n_frames; ++n)
      if (vf[n] < kVarianceFloor) vf[n] = kVarianceFloor;
  }
  return v;
}

namespace ilrma_detail {

inline void check_power(const NmfFactor &m, const NdArray &power,
                        const char *who) {
  if (power.rank() != 2 || power.dim(0) != m.basis.dim(0) ||
      power.dim(1) != m.activation.dim(1))
    throw DimensionError(std::string(who) + ": power map shape " +
                         power.shape_str() + " does not match factors");
  for (std::size_t i = 0; i < power.size(); ++i)
    if (power[i] < 0.0)
      throw ContractError(std::string(who) + ": negative power");
}

}  // namespace ilrma_detail

// Multiplicative basis update under the Itakura-Saito objective:
//   b(f,k) *= sqrt( sum_n p(f,n) h(k,n) / v(f,n)^2  /  sum_n h(k,n) / v(f,n) )
// Nonnegativity is preserved; a vanishing denominator leaves the entry
// untouched.
inline void mm_update_basis(NmfFactor &m, const NdArray &power) {
  ilrma_detail::check_power(m, power, "mm_update_basis");
  NdArray v = nmf_variances(m);
  std::size_t n_freq = m.basis.dim(0), k = m.basis.dim(1),
              n_frames = m.activation.dim(1);
  for (std::size_t f = 0; f < n_freq; ++f) {
    const double *pf = power.data() + f * n_frames;
    const double *vf = v.data() + f * n_frames;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double *h = m.activation.data() + kk * n_frames;
      double num = 0.0, den = 0.0;
      for (std::size_t n = 0; n < n_frames; ++n) {
        double inv = 1.0 / vf[n];
        num += pf[n] * h[n] * inv * inv;
        den += h[n] * inv;
      }
      if (den > 0.0 && std::isfinite(num))
        m.basis[f * k + kk] *= std::sqrt(num / den);
    }
  }
}

// Activation counterpart of mm_update_basis, summing over frequency.
inline void mm_update_activation(NmfFactor &m, const NdArray &power) {
  ilrma_detail::check_power(m, power, "mm_update_activation");
  NdArray v = nmf_variances(m);
  std::size_t n_freq = m.basis.dim(0), k = m.basis.dim(1),
              n_frames = m.activation.dim(1);
  for (std::size_t kk = 0; kk < k; ++kk) {
    double *h = m.activation.data() + kk * n_frames;
    for (std::size_t n = 0; n < n_frames; ++n) {
      double num = 0.0, den = 0.0;
      for (std::size_t f = 0; f < n_freq; ++f) {
        double b = m.basis[f * k + kk];
        double inv = 1.0 / v[f * n_frames + n];
        num += power[f * n_frames + n] * b * inv * inv;
        den += b * inv;
      }
      if (den > 0.0 && std::isfinite(num)) h[n] *= std::sqrt(num / den);
    }
  }
}

struct IlrmaConfig {
  std::size_t iterations = 100;
  std::size_t bases = 2;       // K per source
  std::uint64_t seed = 0;
  bool track_log = true;
};

struct IterationStat {
  std::size_t iter = 0;  // 1-based
  double loglik = 0.0;
  std::vector<double> per_source_power;  // mean |y_j|^2
  std::size_t skipped_updates = 0;
};

struct IlrmaResult {
  DemixingSystem dem;
  NmfModel nmf;
  std::vector<ComplexSpectrogram> demixed;  // before projection back
  std::vector<IterationStat> log;
};

// Deterministic factor init: uniform (0.1, 1.0), basis before activation,
// source order; identical seeds give identical runs.
inline NmfModel ilrma_init_nmf(std::size_t n_src, std::size_t n_freq,
                               std::size_t n_frames, std::size_t bases,
                               Rng &rng) {
  NmfModel model(n_src);
  for (std::size_t j = 0; j < n_src; ++j) {
    model[j].basis = NdArray({n_freq, bases});
    model[j].activation = NdArray({bases, n_frames});
    for (std::size_t i = 0; i < model[j].basis.size(); ++i)
      model[j].basis[i] = rng.uniform(0.1, 1.0);
    for (std::size_t i = 0; i < model[j].activation.size(); ++i)
      model[j].activation[i] = rng.uniform(0.1, 1.0);
  }
  return model;
}

// One full iteration applied to (dem, nmf) in place: per source, demixing
// vectors at every frequency from the current variances, then both factor
// updates against the freshly demixed powers.  Returns the skip count.
inline std::size_t ilrma_iterate(DemixingSystem &dem, NmfModel &nmf,
                                 const std::vector<ComplexSpectrogram> &x) {
  std::size_t n_src = x.size();
  std::size_t skipped = 0;
  for (std::size_t j = 0; j < n_src; ++j) {
    NdArray v = nmf_variances(nmf[j]);
    std::vector<CMat> sig = weighted_covariance(x, v);
    for (std::size_t f = 0; f < dem.n_freq(); ++f)
      if (!ip_update(dem, sig[f], j, f).updated) ++skipped;
  }
  std::vector<ComplexSpectrogram> y = apply_demixing(dem, x);
  for (std::size_t j = 0; j < n_src; ++j) {
    NdArray p({y[j].n_freq, y[j].n_frames});
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = std::norm(y[j].data[i]);
    mm_update_basis(nmf[j], p);
    mm_update_activation(nmf[j], p);
  }
  return skipped;
}

inline IlrmaResult ilrma_run(const std::vector<ComplexSpectrogram> &x,
                             const IlrmaConfig &cfg) {
  check_spectrogram_stack(x, "ilrma_run");
  std::size_t n_src = x.size();
  std::size_t n_freq = x[0].n_freq, n_frames = x[0].n_frames;
  if (cfg.bases == 0) throw ConfigError("ilrma_run: bases must be positive");

  Rng rng(cfg.seed);
  IlrmaResult res;
  res.dem = DemixingSystem::identity(n_freq, n_src);
  res.nmf = ilrma_init_nmf(n_src, n_freq, n_frames, cfg.bases, rng);

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    std::size_t skipped = ilrma_iterate(res.dem, res.nmf, x);
    if (cfg.track_log) {
      IterationStat st;
      st.iter = it;
      st.skipped_updates = skipped;
      std::vector<NdArray> v;
      for (std::size_t j = 0; j < n_src; ++j)
        v.push_back(nmf_variances(res.nmf[j]));
      st.loglik = log_likelihood(res.dem, x, v);
      if (!std::isfinite(st.loglik))
        throw Error("ilrma_run: non-finite log-likelihood at iteration " +
                    std::to_string(it));
      std::vector<ComplexSpectrogram> y = apply_demixing(res.dem, x);
      for (std::size_t j = 0; j < n_src; ++j) {
        double mean = 0.0;
        for (const cplx &c : y[j].data) mean += std::norm(c);
        st.per_source_power.push_back(mean /
                                      static_cast<double>(y[j].data.size()));
      }
      res.log.push_back(std::move(st));
    }
  }
  res.demixed = apply_demixing(res.dem, x);
  return res;
}

}  // namespace bsskit

#endif  // BSSKIT_ILRMA_HPP_
