// bsskit/cvae.hpp

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

// Conditional variational autoencoder over single-source power spectrograms.
// The decoder parameterizes a zero-mean complex Gaussian per bin: it emits
// log sigma^2 given a latent trajectory z and a class label.  The label is
// concatenated channelwise at the input of every layer, so both halves of
// the model are explicitly conditioned.  Training normalizes each example to
// unit mean power, which fixes the global scale the separation stage later
// reintroduces as a free per-source gain.

#ifndef BSSKIT_CVAE_HPP_
#define BSSKIT_CVAE_HPP_

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsskit/autodiff.hpp"
#include "bsskit/stft.hpp"

namespace bsskit {

struct CvaeArch {
  std::size_t n_freq = 0;
  std::size_t n_classes = 0;
  std::size_t latent_dim = 16;

  // Fixed topology: three gated encoder blocks (stride 1, 2, 2), mirrored
  // decoder.  Total temporal downsampling and the shortest trainable input.
  static constexpr std::size_t kDownsample = 4;
  static constexpr std::size_t kMinFrames = 8;
  static constexpr std::size_t kChannels0 = 64;
  static constexpr std::size_t kChannels1 = 32;
  static constexpr std::size_t kChannels2 = 32;
  static constexpr double kLogVarClamp = 20.0;

  void validate() const {
    if (n_freq == 0) throw ConfigError("CvaeArch: n_freq == 0");
    if (n_classes < 2) throw ConfigError("CvaeArch: need at least 2 classes");
    if (latent_dim == 0) throw ConfigError("CvaeArch: latent_dim == 0");
  }

  std::size_t latent_frames(std::size_t n_frames) const {
    return (n_frames + kDownsample - 1) / kDownsample;
  }
};

class CvaeModel {
 public:
  CvaeModel() = default;

  explicit CvaeModel(CvaeArch arch) : arch_(arch) {
    arch_.validate();
    std::size_t f = arch_.n_freq, c = arch_.n_classes, d = arch_.latent_dim;
    const std::size_t c0 = CvaeArch::kChannels0;
    const std::size_t c1 = CvaeArch::kChannels1;
    const std::size_t c2 = CvaeArch::kChannels2;
    enc_[0] = add_gated("enc0", f + c, c0, 5, 1, 2, false);
    enc_[1] = add_gated("enc1", c0 + c, c1, 5, 2, 2, false);
    enc_[2] = add_gated("enc2", c1 + c, c2, 5, 2, 2, false);
    mu_head_ = add_conv("enc_mu", c2 + c, d, 1);
    logvar_head_ = add_conv("enc_logvar", c2 + c, d, 1);
    dec_[0] = add_gated("dec0", d + c, c1, 5, 2, 1, true);
    dec_[1] = add_gated("dec1", c1 + c, c0, 5, 2, 1, true);
    out_head_ = add_conv("dec_out", c0 + c, f, 5);
  }

  const CvaeArch &arch() const { return arch_; }

  // Seeded He-uniform kernels, zero biases, identity batch norms.
  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (ad::Parameter &p : params_) {
      if (p.name.size() > 7 &&
          p.name.compare(p.name.size() - 7, 7, ".kernel") == 0) {
        // Kernel rank is 3 for both layouts; fan-in = in_channels * width.
        double fan_in = static_cast<double>(
            (p.name.substr(0, 3) == "dec" && p.name.find("dec_out") != 0)
                ? p.value.dim(0) * p.value.dim(2)   // deconv (in, out, k)
                : p.value.dim(1) * p.value.dim(2)); // conv (out, in, k)
        double lim = std::sqrt(6.0 / fan_in);
        for (std::size_t i = 0; i < p.value.size(); ++i)
          p.value[i] = rng.uniform(-lim, lim);
      } else if (p.name.size() > 6 &&
                 p.name.compare(p.name.size() - 6, 6, ".gamma") == 0) {
        p.value.fill(1.0);
      } else {
        p.value.fill(0.0);
      }
    }
    for (ad::BatchNormStats &s : bn_stats_) {
      s.running_mean.fill(0.0);
      s.running_var.fill(1.0);
      s.updates = 0;
    }
  }

  std::vector<ad::Parameter *> trainable() {
    std::vector<ad::Parameter *> out;
    out.reserve(params_.size());
    for (ad::Parameter &p : params_) out.push_back(&p);
    return out;
  }

  ad::Parameter &param(const std::string &name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("CvaeModel: unknown parameter " + name);
    return params_[it->second];
  }

  std::size_t n_bn() const { return bn_stats_.size(); }
  ad::BatchNormStats &bn_stats(std::size_t i) { return bn_stats_[i]; }
  const std::string &bn_name(std::size_t i) const { return bn_names_[i]; }

  struct EncodeResult {
    ad::Var mu;
    ad::Var logvar;
  };

  // x: n_freq x N log-power (N >= kMinFrames); label: n_classes vector.
  // Returns latent_dim x ceil(N/4) statistics, log-variance clamped.
  EncodeResult encode(ad::Tape &t, const ad::Var &x, const ad::Var &label,
                      ad::BnMode mode) {
    check_label(label);
    if (x.value().rank() != 2 || x.value().dim(0) != arch_.n_freq)
      throw DimensionError("CvaeModel::encode: input must be n_freq x N");
    if (x.value().dim(1) < CvaeArch::kMinFrames)
      throw ContractError("CvaeModel::encode: need at least " +
                          std::to_string(CvaeArch::kMinFrames) + " frames");
    ad::Var h = x;
    for (int i = 0; i < 3; ++i) h = gated_forward(t, enc_[i], h, label, mode);
    ad::Var hl = with_label(h, label);
    ad::Var mu = ad::conv1d(hl, t.leaf(params_[mu_head_.kernel]),
                            t.leaf(params_[mu_head_.bias]), 1, 0);
    ad::Var lv = ad::conv1d(hl, t.leaf(params_[logvar_head_.kernel]),
                            t.leaf(params_[logvar_head_.bias]), 1, 0);
    return {mu, ad::clamp(lv, -CvaeArch::kLogVarClamp,
                          CvaeArch::kLogVarClamp)};
  }

  // z: latent_dim x ceil(n_frames/4); returns n_freq x n_frames log sigma^2.
  ad::Var decode(ad::Tape &t, const ad::Var &z, const ad::Var &label,
                 std::size_t n_frames, ad::BnMode mode) {
    check_label(label);
    if (n_frames < CvaeArch::kMinFrames)
      throw ContractError("CvaeModel::decode: need at least " +
                          std::to_string(CvaeArch::kMinFrames) + " frames");
    if (z.value().rank() != 2 || z.value().dim(0) != arch_.latent_dim ||
        z.value().dim(1) != arch_.latent_frames(n_frames))
      throw DimensionError(
          "CvaeModel::decode: latent must be latent_dim x ceil(n_frames/" +
          std::to_string(CvaeArch::kDownsample) + ")");
    std::size_t n_half = (n_frames + 1) / 2;
    ad::Var h = gated_forward(t, dec_[0], z, label, mode, n_half);
    h = gated_forward(t, dec_[1], h, label, mode, n_frames);
    ad::Var out = ad::conv1d(with_label(h, label),
                             t.leaf(params_[out_head_.kernel]),
                             t.leaf(params_[out_head_.bias]), 1, 2);
    return ad::clamp(out, -CvaeArch::kLogVarClamp, CvaeArch::kLogVarClamp);
  }

  // Eval-mode conveniences; batch norm must have seen training data.
  NdArray encode_mu_eval(const NdArray &log_power, const NdArray &label) {
    ad::Tape t;
    EncodeResult r = encode(t, t.constant(log_power), t.constant(label),
                            ad::BnMode::kEval);
    return r.mu.value();
  }

  NdArray decode_logvar_eval(const NdArray &z, const NdArray &label,
                             std::size_t n_frames) {
    ad::Tape t;
    ad::Var lv = decode(t, t.constant(z), t.constant(label), n_frames,
                        ad::BnMode::kEval);
    return lv.value();
  }

 private:
  struct ConvP {
    std::size_t kernel = 0, bias = 0;
  };
  struct GatedP {
    ConvP a, b;
    std::size_t bn_a = 0, bn_b = 0;       // gamma indices; beta = +1
    std::size_t stats_a = 0, stats_b = 0; // bn_stats_ indices
    std::size_t stride = 1, pad = 0;
    bool transposed = false;
  };

  std::size_t add_param(const std::string &name,
                        std::vector<std::size_t> dims) {
    params_.emplace_back(name, NdArray(dims));
    index_[name] = params_.size() - 1;
    return params_.size() - 1;
  }

  ConvP add_conv(const std::string &prefix, std::size_t in, std::size_t out,
                 std::size_t k) {
    ConvP p;
    p.kernel = add_param(prefix + ".kernel", {out, in, k});
    p.bias = add_param(prefix + ".bias", {out});
    return p;
  }

  GatedP add_gated(const std::string &prefix, std::size_t in,
                   std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t pad, bool transposed) {
    GatedP g;
    g.stride = stride;
    g.pad = pad;
    g.transposed = transposed;
    auto kernel_dims = [&](void) -> std::vector<std::size_t> {
      if (transposed) return {in, out, k};  // deconv layout (in, out, k)
      return {out, in, k};
    };
    g.a.kernel = add_param(prefix + ".conv_a.kernel", kernel_dims());
    g.a.bias = add_param(prefix + ".conv_a.bias", {out});
    g.bn_a = add_param(prefix + ".bn_a.gamma", {out});
    add_param(prefix + ".bn_a.beta", {out});
    g.b.kernel = add_param(prefix + ".conv_b.kernel", kernel_dims());
    g.b.bias = add_param(prefix + ".conv_b.bias", {out});
    g.bn_b = add_param(prefix + ".bn_b.gamma", {out});
    add_param(prefix + ".bn_b.beta", {out});
    bn_stats_.emplace_back(out);
    bn_names_.push_back(prefix + ".bn_a");
    g.stats_a = bn_stats_.size() - 1;
    bn_stats_.emplace_back(out);
    bn_names_.push_back(prefix + ".bn_b");
    g.stats_b = bn_stats_.size() - 1;
    return g;
  }

  void check_label(const ad::Var &label) const {
    if (label.value().rank() != 1 ||
        label.value().dim(0) != arch_.n_classes)
      throw DimensionError("CvaeModel: label must have n_classes entries");
  }

  ad::Var with_label(const ad::Var &h, const ad::Var &label) {
    return ad::concat_rows(h, ad::tile_cols(label, h.value().dim(1)));
  }

  // slice_to == 0 means keep the natural output length (encoder blocks);
  // decoder blocks crop the transposed conv back to the mirrored length.
  ad::Var gated_forward(ad::Tape &t, const GatedP &g, const ad::Var &x,
                        const ad::Var &label, ad::BnMode mode,
                        std::size_t slice_to = 0) {
    ad::Var in = with_label(x, label);
    auto path = [&](const ConvP &cp, std::size_t gamma_idx,
                    std::size_t stats_idx) {
      ad::Var y = g.transposed
                      ? ad::deconv1d(in, t.leaf(params_[cp.kernel]),
                                     t.leaf(params_[cp.bias]), g.stride,
                                     g.pad)
                      : ad::conv1d(in, t.leaf(params_[cp.kernel]),
                                   t.leaf(params_[cp.bias]), g.stride, g.pad);
      if (slice_to != 0) y = ad::slice_cols(y, 0, slice_to);
      return ad::batchnorm1d(y, t.leaf(params_[gamma_idx]),
                             t.leaf(params_[gamma_idx + 1]),
                             bn_stats_[stats_idx], mode);
    };
    return ad::glu(path(g.a, g.bn_a, g.stats_a),
                   path(g.b, g.bn_b, g.stats_b));
  }

  CvaeArch arch_;
  std::vector<ad::Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<ad::BatchNormStats> bn_stats_;
  std::vector<std::string> bn_names_;
  GatedP enc_[3], dec_[2];
  ConvP mu_head_, logvar_head_, out_head_;
};

// One labeled example: unit-mean-power spectrogram in linear and log form.
struct TrainingExample {
  NdArray power;      // n_freq x N, mean exactly 1
  NdArray log_power;  // log(power + variance floor)
  std::size_t class_id = 0;
};

inline TrainingExample make_training_example(const ComplexSpectrogram &spec,
                                             std::size_t class_id,
                                             std::size_t n_classes) {
  if (class_id >= n_classes)
    throw ContractError("make_training_example: class_id out of range");
  TrainingExample ex;
  ex.class_id = class_id;
  ex.power = NdArray({spec.n_freq, spec.n_frames});
  double mean = 0.0;
  for (std::size_t f = 0; f < spec.n_freq; ++f)
    for (std::size_t n = 0; n < spec.n_frames; ++n) {
      double p = spec.power(f, n);
      ex.power(f, n) = p;
      mean += p;
    }
  mean /= static_cast<double>(spec.n_freq * spec.n_frames);
  if (!(mean > 0.0))
    throw ContractError("make_training_example: silent spectrogram");
  ex.log_power = NdArray({spec.n_freq, spec.n_frames});
  for (std::size_t i = 0; i < ex.power.size(); ++i) {
    ex.power[i] /= mean;
    ex.log_power[i] = std::log(ex.power[i] + kVarianceFloor);
  }
  return ex;
}

inline NdArray one_hot(std::size_t class_id, std::size_t n_classes) {
  if (class_id >= n_classes)
    throw ContractError("one_hot: class_id out of range");
  NdArray v({n_classes}, 0.0);
  v[class_id] = 1.0;
  return v;
}

struct ExampleLoss {
  ad::Var loss;   // minimized: -(recon - kl_weight * kl)
  double elbo = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// Evidence lower bound for one example with a fixed reparameterization
// noise draw eps (latent_dim x ceil(N/4)).  Constants independent of the
// parameters are dropped.
inline ExampleLoss cvae_example_loss(CvaeModel &model, ad::Tape &t,
                                     const TrainingExample &ex,
                                     const NdArray &eps, ad::BnMode mode,
                                     double kl_weight = 1.0) {
  std::size_t n_frames = ex.power.dim(1);
  ad::Var label = t.constant(one_hot(ex.class_id, model.arch().n_classes));
  CvaeModel::EncodeResult enc =
      model.encode(t, t.constant(ex.log_power), label, mode);
  if (!eps.same_shape(enc.mu.value()))
    throw DimensionError("cvae_example_loss: eps must match latent shape");
  ad::Var z = enc.mu + ad::mul(ad::exp(ad::scale(enc.logvar, 0.5)),
                               t.constant(eps));
  ad::Var logvar_x = model.decode(t, z, label, n_frames, mode);

  ad::Var recon = ad::scale(
      ad::sum(ad::add(logvar_x, ad::mul(t.constant(ex.power),
                                        ad::exp(ad::scale(logvar_x, -1.0))))),
      -1.0);
  ad::Var kl = ad::scale(
      ad::sum(ad::sub(ad::add(ad::square(enc.mu), ad::exp(enc.logvar)),
                      ad::shift(enc.logvar, 1.0))),
      0.5);
  ExampleLoss out;
  out.loss = ad::scale(ad::sub(recon, ad::scale(kl, kl_weight)), -1.0);
  out.recon = recon.value()[0];
  out.kl = kl.value()[0];
  out.elbo = out.recon - out.kl;
  return out;
}

struct CvaeTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double kl_weight = 1.0;
  std::uint64_t seed = 0;
};

struct EpochStat {
  std::size_t epoch = 0;  // 1-based
  double elbo = 0.0;      // mean per-example ELBO seen during the epoch
  double kl = 0.0;        // mean per-example divergence term
};

struct CvaeTrainLog {
  std::vector<EpochStat> history;
  std::size_t rollbacks = 0;
};

// Minibatch Adam ascent on the ELBO.  Gradients accumulate across the batch
// on the parameter leaves and each example's loss carries the 1/batch
// factor, so a step consumes the batch mean gradient.  If an epoch produces
// a non-finite value anywhere, the model, optimizer and batch-norm state
// roll back to the last completed epoch and the epoch is retried at half
// the learning rate.
inline CvaeTrainLog cvae_train(CvaeModel &model,
                               const std::vector<TrainingExample> &data,
                               const CvaeTrainConfig &cfg) {
  if (data.empty()) throw ContractError("cvae_train: no training data");
  if (cfg.epochs == 0 || cfg.batch_size == 0)
    throw ConfigError("cvae_train: epochs and batch_size must be positive");
  for (const TrainingExample &ex : data) {
    if (ex.power.dim(0) != model.arch().n_freq)
      throw DimensionError("cvae_train: example frequency count mismatch");
    if (ex.class_id >= model.arch().n_classes)
      throw ContractError("cvae_train: class_id out of range");
  }

  std::vector<ad::Parameter *> params = model.trainable();
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr;
  ad::AdamState adam(acfg);
  Rng rng(cfg.seed ^ 0xC0FFEE1234ULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  CvaeTrainLog log;
  double lr = cfg.lr;
  CvaeModel snap_model = model;
  ad::AdamState snap_adam = adam;

  for (std::size_t epoch = 1; epoch <= cfg.epochs;) {
    rng.shuffle(order);
    double elbo_sum = 0.0;
    double kl_sum = 0.0;
    bool failed = false;
    try {
      for (std::size_t start = 0; start < order.size();
           start += cfg.batch_size) {
        std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        double inv = 1.0 / static_cast<double>(stop - start);
        for (ad::Parameter *p : params) p->zero_grad();
        for (std::size_t i = start; i < stop; ++i) {
          const TrainingExample &ex = data[order[i]];
          NdArray eps({model.arch().latent_dim,
                       model.arch().latent_frames(ex.power.dim(1))});
          for (std::size_t k = 0; k < eps.size(); ++k) eps[k] = rng.normal();
          ad::Tape t;
          ExampleLoss l = cvae_example_loss(model, t, ex, eps,
                                            ad::BnMode::kTrain,
                                            cfg.kl_weight);
          t.backward(ad::scale(l.loss, inv));
          elbo_sum += l.elbo;
          kl_sum += l.kl;
        }
        adam.step(params);
      }
    } catch (const Error &) {
      failed = true;
    }
    if (failed || !std::isfinite(elbo_sum)) {
      model = snap_model;
      adam = snap_adam;
      lr *= 0.5;
      if (lr < 1e-7)
        throw Error("cvae_train: diverged beyond learning-rate floor");
      adam.set_lr(lr);
      ++log.rollbacks;
      continue;  // retry the same epoch
    }
    log.history.push_back({epoch,
                           elbo_sum / static_cast<double>(data.size()),
                           kl_sum / static_cast<double>(data.size())});
    snap_model = model;
    snap_adam = adam;
    ++epoch;
  }
  return log;
}

// ---- Checkpoint serialization ------------------------------------------
//
// Layout (little endian):
//   "MVAE" | u32 version | u64 meta_len | meta JSON | u64 n_entries |
//   entries | u32 crc32 of all preceding bytes
// Each entry: u32 name_len | name | u8 dtype (0 = f64) | u32 rank |
//   u64 dims[rank] | row-major f64 payload.
// Batch-norm running statistics ride along as extra named entries, so a
// loaded model is immediately usable in eval mode.

namespace cvae_detail {

constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::string &b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string &b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string &b, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(b, bits);
}

struct Reader {
  const std::string &buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char *what) const {
    if (pos + n > buf.size())
      throw FormatError(std::string("checkpoint truncated reading ") + what,
                        pos);
  }
  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char *what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char *what) {
    std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n, const char *what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline void put_entry(std::string &b, const std::string &name,
                      const NdArray &value) {
  put_u32(b, static_cast<std::uint32_t>(name.size()));
  b.append(name);
  b.push_back('\0');  // dtype 0: f64
  put_u32(b, static_cast<std::uint32_t>(value.rank()));
  for (std::size_t d = 0; d < value.rank(); ++d) put_u64(b, value.dim(d));
  for (std::size_t i = 0; i < value.size(); ++i) put_f64(b, value[i]);
}

}  // namespace cvae_detail

inline std::string serialize_model(CvaeModel &model) {
  using namespace cvae_detail;
  std::string b;
  b.append("MVAE");
  put_u32(b, kCheckpointVersion);
  nlohmann::json meta{{"format", "cvae-gated"},
                      {"n_freq", model.arch().n_freq},
                      {"n_classes", model.arch().n_classes},
                      {"latent_dim", model.arch().latent_dim},
                      {"downsample", CvaeArch::kDownsample},
                      {"min_frames", CvaeArch::kMinFrames}};
  std::string meta_s = meta.dump();
  put_u64(b, meta_s.size());
  b.append(meta_s);

  std::vector<ad::Parameter *> params = model.trainable();
  put_u64(b, params.size() + 3 * model.n_bn());
  for (const ad::Parameter *p : params) put_entry(b, p->name, p->value);
  for (std::size_t i = 0; i < model.n_bn(); ++i) {
    const ad::BatchNormStats &s = model.bn_stats(i);
    put_entry(b, model.bn_name(i) + ".running_mean", s.running_mean);
    put_entry(b, model.bn_name(i) + ".running_var", s.running_var);
    NdArray upd({1}, static_cast<double>(s.updates));
    put_entry(b, model.bn_name(i) + ".updates", upd);
  }
  put_u32(b, crc32(b.data(), b.size()));
  return b;
}

inline void save_model(const std::string &path, CvaeModel &model) {
  std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("save_model: cannot open " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("save_model: write failed for " + path);
}

inline CvaeModel deserialize_model(const std::string &buf) {
  using namespace cvae_detail;
  if (buf.size() < 20) throw FormatError("checkpoint too small", 0);
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[buf.size() - 4 + i]))
                  << (8 * i);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw FormatError("checkpoint checksum mismatch", buf.size() - 4);

  Reader r{buf};
  if (r.bytes(4, "magic") != "MVAE") throw FormatError("bad magic", 0);
  std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                          std::to_string(version),
                      4);
  std::uint64_t meta_len = r.u64("meta length");
  std::size_t meta_at = r.pos;
  std::string meta_s = r.bytes(meta_len, "metadata");
  nlohmann::json meta = nlohmann::json::parse(meta_s, nullptr, false);
  if (meta.is_discarded() || !meta.contains("n_freq") ||
      !meta.contains("n_classes") || !meta.contains("latent_dim"))
    throw FormatError("malformed checkpoint metadata", meta_at);

  CvaeArch arch;
  arch.n_freq = meta["n_freq"].get<std::size_t>();
  arch.n_classes = meta["n_classes"].get<std::size_t>();
  arch.latent_dim = meta["latent_dim"].get<std::size_t>();
  CvaeModel model(arch);

  std::map<std::string, std::pair<NdArray *, bool>> slots;
  for (ad::Parameter *p : model.trainable())
    slots[p->name] = {&p->value, false};
  std::vector<NdArray> upd_slots(model.n_bn(), NdArray({1}));
  for (std::size_t i = 0; i < model.n_bn(); ++i) {
    slots[model.bn_name(i) + ".running_mean"] = {
        &model.bn_stats(i).running_mean, false};
    slots[model.bn_name(i) + ".running_var"] = {
        &model.bn_stats(i).running_var, false};
    slots[model.bn_name(i) + ".updates"] = {&upd_slots[i], false};
  }

  std::uint64_t n_entries = r.u64("entry count");
  if (n_entries != slots.size())
    throw FormatError("checkpoint entry count " + std::to_string(n_entries) +
                          " does not match architecture",
                      r.pos - 8);
  for (std::uint64_t e = 0; e < n_entries; ++e) {
    std::size_t at = r.pos;
    std::uint32_t name_len = r.u32("entry name length");
    std::string name = r.bytes(name_len, "entry name");
    std::uint8_t dtype =
        static_cast<std::uint8_t>(r.bytes(1, "entry dtype")[0]);
    if (dtype != 0) throw FormatError("unsupported dtype in " + name, at);
    std::uint32_t rank = r.u32("entry rank");
    std::vector<std::size_t> dims(rank);
    std::size_t volume = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      dims[d] = static_cast<std::size_t>(r.u64("entry dims"));
      volume *= dims[d];
    }
    auto it = slots.find(name);
    if (it == slots.end())
      throw FormatError("unexpected checkpoint entry " + name, at);
    if (it->second.second)
      throw FormatError("duplicate checkpoint entry " + name, at);
    NdArray &dst = *it->second.first;
    if (rank != dst.rank() || volume != dst.size())
      throw FormatError("shape mismatch for " + name, at);
    for (std::uint32_t d = 0; d < rank; ++d)
      if (dims[d] != dst.dim(d))
        throw FormatError("shape mismatch for " + name, at);
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = r.f64("entry payload");
    it->second.second = true;
  }
  if (r.pos != buf.size() - 4)
    throw FormatError("trailing bytes after checkpoint entries", r.pos);
  for (const auto &kv : slots)
    if (!kv.second.second)
      throw FormatError("missing checkpoint entry " + kv.first, r.pos);
  for (std::size_t i = 0; i < model.n_bn(); ++i)
    model.bn_stats(i).updates =
        static_cast<std::uint64_t>(upd_slots[i][0]);
  return model;
}

inline CvaeModel load_model(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_model: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return deserialize_model(buf);
}

}  // namespace bsskit

#endif  // BSSKIT_CVAE_HPP_
