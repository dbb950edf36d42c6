// bsskit/mvae.hpp

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

// Multichannel separation with a trained variance decoder as the source
// model.  Each source's short-time variance is g_j * sigma^2(z_j, u_j): a
// decoder evaluation scaled by a free gain.  The loop alternates exact
// iterative-projection updates of the demixing matrices, guarded gradient
// steps on the latent/label parameters, and the closed-form gain update.
// Every step is nonincreasing in the negative log-likelihood, so the
// objective is monotone by construction; the guard enforces this for the
// gradient steps by rejecting any candidate that fails to improve.

#ifndef BSSKIT_MVAE_HPP_
#define BSSKIT_MVAE_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bsskit/cvae.hpp"
#include "bsskit/ilrma.hpp"
#include "bsskit/lgm.hpp"

namespace bsskit {

// Decoder abstraction: the separation loop only needs log-variance synthesis
// (differentiable, on a tape) plus an encoder mean for initialization.
class VarianceDecoder {
 public:
  virtual ~VarianceDecoder() = default;
  virtual std::size_t n_freq() const = 0;
  virtual std::size_t n_classes() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t latent_frames(std::size_t n_frames) const = 0;
  virtual std::size_t min_frames() const = 0;
  // log sigma^2, n_freq x n_frames, built on the tape so gradients flow to
  // z and the label.
  virtual ad::Var decode_logvar(ad::Tape &t, const ad::Var &z,
                                const ad::Var &label,
                                std::size_t n_frames) = 0;
  // Eval-mode encoder mean of a log-power map under an uninformative label.
  virtual NdArray encode_mu(const NdArray &log_power) = 0;
};

// Adapter over a trained conditional VAE (batch norm in eval mode).
class CvaeDecoder : public VarianceDecoder {
 public:
  explicit CvaeDecoder(CvaeModel &model) : model_(model) {}

  std::size_t n_freq() const override { return model_.arch().n_freq; }
  std::size_t n_classes() const override { return model_.arch().n_classes; }
  std::size_t latent_dim() const override {
    return model_.arch().latent_dim;
  }
  std::size_t latent_frames(std::size_t n_frames) const override {
    return model_.arch().latent_frames(n_frames);
  }
  std::size_t min_frames() const override { return CvaeArch::kMinFrames; }

  ad::Var decode_logvar(ad::Tape &t, const ad::Var &z, const ad::Var &label,
                        std::size_t n_frames) override {
    return model_.decode(t, z, label, n_frames, ad::BnMode::kEval);
  }

  NdArray encode_mu(const NdArray &log_power) override {
    NdArray label({model_.arch().n_classes},
                  1.0 / static_cast<double>(model_.arch().n_classes));
    return model_.encode_mu_eval(log_power, label);
  }

 private:
  CvaeModel &model_;
};

struct MvaeConfig {
  std::size_t iterations = 40;       // outer loop sweeps
  std::size_t warm_start = 30;       // basis-model iterations before handoff
  std::size_t psi_steps = 10;        // gradient steps per source per sweep
  double psi_lr = 1e-2;
  std::uint64_t seed = 0;
  bool track_log = true;
  // Optional per-source class pins; empty = all free, else one entry per
  // source with -1 meaning free.
  std::vector<std::ptrdiff_t> fixed_classes;
};

struct MvaeIterationStat {
  std::size_t iter = 0;  // 1-based
  double loglik = 0.0;
  std::vector<double> gains;
  std::vector<std::vector<double>> class_posteriors;
  std::size_t skipped_ip = 0;
  std::size_t psi_rejects = 0;
};

struct MvaeResult {
  DemixingSystem dem;
  std::vector<ComplexSpectrogram> demixed;  // unscaled demixer outputs
  std::vector<NdArray> z;                   // per-source latents
  std::vector<NdArray> u;                   // per-source class logits
  std::vector<double> g;                    // per-source gains
  std::vector<IterationStat> warm_log;
  std::vector<MvaeIterationStat> log;
};

struct SourceClass {
  std::size_t class_id = 0;
  double confidence = 0.0;
};

namespace mvae_detail {

inline NdArray softmax_values(const NdArray &logits) {
  NdArray out({logits.size()});
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i)
    mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
  return out;
}

inline NdArray power_map(const ComplexSpectrogram &y) {
  NdArray p({y.n_freq, y.n_frames});
  for (std::size_t f = 0; f < y.n_freq; ++f)
    for (std::size_t n = 0; n < y.n_frames; ++n) p(f, n) = y.power(f, n);
  return p;
}

struct PsiState {
  ad::Parameter z;
  ad::Parameter u;
  double g = 1.0;
  std::ptrdiff_t fixed_class = -1;
  ad::AdamState adam;
};

inline ad::Var label_var(ad::Tape &t, PsiState &s, std::size_t n_classes) {
  if (s.fixed_class >= 0)
    return t.constant(
        one_hot(static_cast<std::size_t>(s.fixed_class), n_classes));
  return ad::softmax(t.leaf(s.u));
}

// Source model objective (negated per-source log-likelihood term):
//   F N log g + sum_{f,n} [log sigma^2 + (p/g) exp(-log sigma^2)].
// The gain enters the gradient steps only through the constant p/g factor.
inline ad::Var psi_objective(VarianceDecoder &dec, ad::Tape &t, PsiState &s,
                             const NdArray &p_over_g, std::size_t n_frames) {
  ad::Var lv = dec.decode_logvar(t, t.leaf(s.z),
                                 label_var(t, s, dec.n_classes()), n_frames);
  return ad::sum(ad::add(
      lv, ad::mul(t.constant(p_over_g), ad::exp(ad::scale(lv, -1.0)))));
}

inline double psi_objective_value(VarianceDecoder &dec, PsiState &s,
                                  const NdArray &p_over_g,
                                  std::size_t n_frames) {
  ad::Tape t;
  return psi_objective(dec, t, s, p_over_g, n_frames).value()[0];
}

// Decoder variance (without the gain), linear domain.
inline NdArray decoder_variance(VarianceDecoder &dec, PsiState &s,
                                std::size_t n_frames) {
  ad::Tape t;
  ad::Var lv = dec.decode_logvar(t, t.constant(s.z.value),
                                 label_var(t, s, dec.n_classes()), n_frames);
  NdArray v = lv.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(v[i]);
  return v;
}

}  // namespace mvae_detail

// Per-source model variance g * sigma^2(z, label), floored.
inline NdArray source_variances(VarianceDecoder &dec, const NdArray &z,
                                const NdArray &u_logits, double g,
                                std::size_t n_frames,
                                std::ptrdiff_t fixed_class = -1) {
  mvae_detail::PsiState s;
  s.z = ad::Parameter("z", z);
  s.u = ad::Parameter("u", u_logits);
  s.fixed_class = fixed_class;
  NdArray v = mvae_detail::decoder_variance(dec, s, n_frames);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::max(g * v[i], kVarianceFloor);
  return v;
}

// Closed-form gain: the exact minimizer of
//   F N log g + (1/g) sum p / sigma^2   over g > 0,
// namely the mean of p / sigma^2.  Halving sigma^2 doubles the result
// bitwise, so the product g * sigma^2 is exactly invariant under power-of-
// two rescalings of the decoder output.
inline double update_gain(const NdArray &power, const NdArray &sigma2) {
  if (!power.same_shape(sigma2))
    throw DimensionError("update_gain: shape mismatch");
  if (power.size() == 0) throw ContractError("update_gain: empty input");
  double g = 0.0;
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (!(sigma2[i] > 0.0))
      throw ContractError("update_gain: nonpositive model variance");
    g += power[i] / sigma2[i];
  }
  return g / static_cast<double>(power.size());
}

inline std::vector<SourceClass> classify_from_logits(
    const std::vector<NdArray> &u) {
  std::vector<SourceClass> out;
  for (const NdArray &logits : u) {
    NdArray post = mvae_detail::softmax_values(logits);
    SourceClass sc;
    sc.class_id = 0;
    sc.confidence = post[0];
    for (std::size_t c = 1; c < post.size(); ++c)
      if (post[c] > sc.confidence) {  // strict: ties keep the lowest index
        sc.confidence = post[c];
        sc.class_id = c;
      }
    out.push_back(sc);
  }
  return out;
}

inline std::vector<SourceClass> classify_sources(const MvaeResult &res) {
  return classify_from_logits(res.u);
}

// Reorders sources in place; perm[k] names the old source that becomes
// source k.  Demixing matrix columns move together with the outputs so the
// system stays consistent.
inline void permute_sources(MvaeResult &res,
                            const std::vector<std::size_t> &perm) {
  std::size_t n = res.demixed.size();
  if (perm.size() != n)
    throw DimensionError("permute_sources: permutation size mismatch");
  std::vector<bool> seen(n, false);
  for (std::size_t v : perm) {
    if (v >= n || seen[v])
      throw ContractError("permute_sources: not a permutation");
    seen[v] = true;
  }
  auto apply = [&perm, n](auto &vec) {
    auto old = vec;
    for (std::size_t k = 0; k < n; ++k) vec[k] = old[perm[k]];
  };
  apply(res.demixed);
  apply(res.z);
  apply(res.u);
  apply(res.g);
  for (CMat &w : res.dem.w) {
    CMat old = w;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) w(i, k) = old(i, perm[k]);
  }
}

// Joint estimation of demixing matrices, latents, labels and gains.
// Initialization: a short basis-model run supplies W; each source's latent
// starts at the encoder mean of its power-normalized demixed output, the
// normalizer seeding the gain; labels start uniform.
inline MvaeResult mvae_separate(const std::vector<ComplexSpectrogram> &x,
                                VarianceDecoder &dec, const MvaeConfig &cfg) {
  check_spectrogram_stack(x, "mvae_separate");
  std::size_t n_src = x.size();
  std::size_t n_freq = x[0].n_freq, n_frames = x[0].n_frames;
  if (n_freq != dec.n_freq())
    throw DimensionError("mvae_separate: spectrogram has " +
                         std::to_string(n_freq) + " bins but the decoder " +
                         "expects " + std::to_string(dec.n_freq()));
  if (n_frames < dec.min_frames())
    throw ContractError("mvae_separate: need at least " +
                        std::to_string(dec.min_frames()) + " frames");
  if (!cfg.fixed_classes.empty() && cfg.fixed_classes.size() != n_src)
    throw ConfigError("mvae_separate: fixed_classes must name every source");
  for (std::ptrdiff_t fc : cfg.fixed_classes)
    if (fc >= static_cast<std::ptrdiff_t>(dec.n_classes()))
      throw ConfigError("mvae_separate: fixed class id out of range");
  if (cfg.iterations == 0 || cfg.psi_steps == 0)
    throw ConfigError("mvae_separate: iterations and psi_steps must be "
                      "positive");

  MvaeResult res;

  // Stage 1: warm start with the basis source model.
  IlrmaConfig icfg;
  icfg.iterations = cfg.warm_start;
  icfg.seed = cfg.seed;
  icfg.track_log = true;
  if (cfg.warm_start > 0) {
    IlrmaResult warm = ilrma_run(x, icfg);
    res.dem = warm.dem;
    res.warm_log = warm.log;
  } else {
    res.dem = DemixingSystem::identity(n_freq, n_src);
  }
  std::vector<ComplexSpectrogram> y = apply_demixing(res.dem, x);

  // Stage 2: per-source state.
  std::size_t n_lat = dec.latent_frames(n_frames);
  std::vector<mvae_detail::PsiState> st(n_src);
  for (std::size_t j = 0; j < n_src; ++j) {
    NdArray p = mvae_detail::power_map(y[j]);
    double mean = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) mean += p[i];
    mean /= static_cast<double>(p.size());
    if (!(mean > 0.0)) mean = kVarianceFloor;
    NdArray log_power({n_freq, n_frames});
    for (std::size_t i = 0; i < p.size(); ++i)
      log_power[i] = std::log(p[i] / mean + kVarianceFloor);
    st[j].z = ad::Parameter("z" + std::to_string(j),
                            dec.encode_mu(log_power));
    if (st[j].z.value.rank() != 2 ||
        st[j].z.value.dim(0) != dec.latent_dim() ||
        st[j].z.value.dim(1) != n_lat)
      throw DimensionError("mvae_separate: encoder produced a latent of "
                           "unexpected shape");
    st[j].u = ad::Parameter("u" + std::to_string(j),
                            NdArray({dec.n_classes()}, 0.0));
    st[j].g = mean;
    st[j].fixed_class =
        cfg.fixed_classes.empty() ? -1 : cfg.fixed_classes[j];
    ad::AdamConfig acfg;
    acfg.lr = cfg.psi_lr;
    st[j].adam = ad::AdamState(acfg);
  }

  // Stage 3: outer sweeps.
  std::vector<NdArray> v(n_src);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    std::size_t skipped_ip = 0, psi_rejects = 0;
    for (std::size_t j = 0; j < n_src; ++j) {
      // (a) Exact demixing update under the current source model.
      NdArray vj = source_variances(dec, st[j].z.value, st[j].u.value,
                                    st[j].g, n_frames, st[j].fixed_class);
      std::vector<CMat> cov = weighted_covariance(x, vj);
      for (std::size_t f = 0; f < n_freq; ++f)
        if (!ip_update(res.dem, cov[f], j, f).updated) ++skipped_ip;
      y = apply_demixing(res.dem, x);

      // (b) Guarded gradient steps on z (and u when free).
      NdArray p = mvae_detail::power_map(y[j]);
      NdArray p_over_g = p;
      for (std::size_t i = 0; i < p_over_g.size(); ++i)
        p_over_g[i] /= st[j].g;
      std::vector<ad::Parameter *> leaves;
      leaves.push_back(&st[j].z);
      if (st[j].fixed_class < 0) leaves.push_back(&st[j].u);

      double obj_old = mvae_detail::psi_objective_value(dec, st[j], p_over_g,
                                                        n_frames);
      NdArray z_keep = st[j].z.value;
      NdArray u_keep = st[j].u.value;
      ad::AdamState adam_keep = st[j].adam;
      bool accepted = false;
      double lr_scale = 1.0;
      for (int attempt = 0; attempt < 6; ++attempt, lr_scale *= 0.5) {
        st[j].z.value = z_keep;
        st[j].u.value = u_keep;
        st[j].adam = adam_keep;
        st[j].adam.set_lr(cfg.psi_lr * lr_scale);
        try {
          for (std::size_t step = 0; step < cfg.psi_steps; ++step) {
            for (ad::Parameter *l : leaves) l->zero_grad();
            ad::Tape t;
            ad::Var obj =
                mvae_detail::psi_objective(dec, t, st[j], p_over_g, n_frames);
            t.backward(obj);
            st[j].adam.step(leaves);
          }
        } catch (const Error &) {
          continue;  // treat numerical blowups like a failed improvement
        }
        double obj_new = mvae_detail::psi_objective_value(dec, st[j],
                                                          p_over_g, n_frames);
        if (std::isfinite(obj_new) && obj_new <= obj_old) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        st[j].z.value = z_keep;
        st[j].u.value = u_keep;
        st[j].adam = adam_keep;
        ++psi_rejects;
      }

      // (c) Closed-form gain update.
      NdArray sig = mvae_detail::decoder_variance(dec, st[j], n_frames);
      st[j].g = std::max(update_gain(p, sig), kVarianceFloor);
      v[j] = sig;
      for (std::size_t i = 0; i < v[j].size(); ++i)
        v[j][i] = std::max(st[j].g * v[j][i], kVarianceFloor);
    }

    double ll = log_likelihood(res.dem, x, v);
    if (!std::isfinite(ll))
      throw Error("mvae_separate: non-finite log-likelihood at iteration " +
                  std::to_string(it));
    if (cfg.track_log) {
      MvaeIterationStat stat;
      stat.iter = it;
      stat.loglik = ll;
      for (std::size_t j = 0; j < n_src; ++j) {
        stat.gains.push_back(st[j].g);
        NdArray post =
            st[j].fixed_class >= 0
                ? one_hot(static_cast<std::size_t>(st[j].fixed_class),
                          dec.n_classes())
                : mvae_detail::softmax_values(st[j].u.value);
        stat.class_posteriors.push_back(post.vec());
      }
      stat.skipped_ip = skipped_ip;
      stat.psi_rejects = psi_rejects;
      res.log.push_back(std::move(stat));
    }
  }

  res.demixed = apply_demixing(res.dem, x);
  for (std::size_t j = 0; j < n_src; ++j) {
    res.z.push_back(st[j].z.value);
    if (st[j].fixed_class >= 0) {
      // Report a pinned label as certain, matching the model actually used.
      NdArray logits({dec.n_classes()}, -1e9);
      logits[static_cast<std::size_t>(st[j].fixed_class)] = 0.0;
      res.u.push_back(logits);
    } else {
      res.u.push_back(st[j].u.value);
    }
    res.g.push_back(st[j].g);
  }
  return res;
}

}  // namespace bsskit

#endif  // BSSKIT_MVAE_HPP_
