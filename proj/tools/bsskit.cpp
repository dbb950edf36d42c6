// tools/bsskit.cpp

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

// Command-line frontend: corpus generation, source-model training, mixing,
// separation, evaluation and checkpoint inspection.  Every run echoes its
// fully resolved configuration into the output directory and stamps its
// checksum into report.json; reruns with identical flags and seeds produce
// byte-identical reports.  Wall-clock numbers go to a separate timings.json
// so the deterministic artifacts stay bitwise stable.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bsskit/cvae.hpp"
#include "bsskit/ilrma.hpp"
#include "bsskit/metrics.hpp"
#include "bsskit/mixsim.hpp"
#include "bsskit/mvae.hpp"
#include "bsskit/stft.hpp"
#include "bsskit/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage-level problem detected after flag parsing (still exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageTimer {
  using clock = std::chrono::steady_clock;
  clock::time_point t0 = clock::now();
  clock::time_point last = clock::now();
  json stages = json::object();

  void mark(const std::string &name) {
    auto now = clock::now();
    stages[name] = std::chrono::duration<double>(now - last).count();
    last = now;
  }
  double total() const {
    return std::chrono::duration<double>(clock::now() - t0).count();
  }
};

std::string crc_hex(const std::string &bytes) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x",
                bsskit::crc32(bytes.data(), bytes.size()));
  return buf;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw bsskit::FormatError("cannot write " + path.string());
  f << text;
}

void write_json_file(const fs::path &path, const json &j) {
  write_text(path, j.dump(2) + "\n");
}

// Echoes the resolved configuration and stamps report.json; the timing
// sidecar is written last and carries everything nondeterministic.
void finish_run(const std::string &out, const std::string &config_echo,
                json report, StageTimer &timer) {
  fs::create_directories(out);
  write_text(fs::path(out) / "config_resolved.ini", config_echo);
  report["config_crc32"] = crc_hex(config_echo);
  write_json_file(fs::path(out) / "report.json", report);
  json timings;
  timings["stages"] = timer.stages;
  timings["total_s"] = timer.total();
  write_json_file(fs::path(out) / "timings.json", timings);
}

bsskit::TimeSignal read_mono(const std::string &path) {
  bsskit::TimeSignal s = bsskit::read_wav(path);
  if (s.num_channels() != 1)
    throw bsskit::ContractError(path + ": expected a mono file, found " +
                                std::to_string(s.num_channels()) +
                                " channels");
  return s;
}

std::size_t resolve_hop(std::size_t frame, std::size_t hop) {
  return hop == 0 ? frame / 2 : hop;
}

std::vector<std::ptrdiff_t> parse_fix_class(const std::string &s) {
  std::vector<std::ptrdiff_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      long v = std::stol(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      if (v < -1) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception &) {
      throw UsageError("--fix-class: expected a comma list of class ids "
                       "(-1 for free), got '" + tok + "'");
    }
  }
  return out;
}

json eval_report_json(const bsskit::EvalReport &rep) {
  json j;
  j["proj_taps"] = rep.proj_taps;
  j["permutation"] = rep.permutation;
  json per = json::array();
  for (const bsskit::SourceMetrics &m : rep.per_source) {
    json e;
    e["valid"] = m.valid;
    if (m.valid) {
      e["sdr"] = m.sdr;
      e["sir"] = m.sir;
      e["sar"] = m.sar;
      e["si_sdr"] = m.si_sdr;
    } else {
      e["sdr"] = nullptr;
      e["sir"] = nullptr;
      e["sar"] = nullptr;
      e["si_sdr"] = nullptr;
    }
    per.push_back(e);
  }
  j["per_source"] = per;
  j["mean_sdr"] = rep.mean_sdr;
  j["mean_sir"] = rep.mean_sir;
  j["mean_sar"] = rep.mean_sar;
  j["mean_si_sdr"] = rep.mean_si_sdr;
  return j;
}

// ---- corpus ---------------------------------------------------------------

struct CorpusOpts {
  std::string out;
  std::size_t utterances = 50;
  double duration = 0.5;
  std::uint32_t rate = 4000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_corpus(const CorpusOpts &o, const std::string &echo) {
  StageTimer timer;
  bsskit::CorpusConfig cfg;
  cfg.utterances_per_class = o.utterances;
  cfg.duration_s = o.duration;
  cfg.sample_rate = o.rate;
  cfg.base_seed = o.seed;
  std::vector<bsskit::SourceClassSpec> classes = bsskit::default_classes();
  std::vector<bsskit::CorpusEntry> entries =
      bsskit::gen_corpus(classes, cfg, o.out);
  timer.mark("generate");

  std::size_t n_eval = 0;
  for (const auto &e : entries)
    if (e.split == "eval") ++n_eval;
  json report;
  report["command"] = "corpus";
  report["classes"] = json::array();
  for (const auto &c : classes)
    report["classes"].push_back({{"class_id", c.class_id},
                                 {"name", c.name},
                                 {"pitch_min_hz", c.pitch_min_hz},
                                 {"pitch_max_hz", c.pitch_max_hz}});
  report["utterances_per_class"] = o.utterances;
  report["n_train"] = entries.size() - n_eval;
  report["n_eval"] = n_eval;
  report["sample_rate"] = o.rate;
  report["duration_s"] = o.duration;
  report["manifest"] = "manifest.jsonl";
  finish_run(o.out, echo, report, timer);
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  std::string corpus;
  std::string out;
  std::size_t epochs = 200;
  std::size_t batch = 16;
  double lr = 1e-3;
  double kl_weight = 1.0;
  std::size_t latent_dim = 16;
  std::size_t frame = 4096;
  std::size_t hop = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

int cmd_train(const TrainOpts &o, const std::string &echo) {
  StageTimer timer;
  std::size_t hop = resolve_hop(o.frame, o.hop);
  std::vector<bsskit::CorpusEntry> entries =
      bsskit::read_manifest((fs::path(o.corpus) / "manifest.jsonl").string());
  std::size_t n_classes = 0;
  for (const auto &e : entries)
    n_classes = std::max(n_classes, e.class_id + 1);
  if (n_classes < 2)
    throw bsskit::ContractError("train: corpus must contain at least two "
                                "classes");

  std::vector<bsskit::TrainingExample> data;
  for (const auto &e : entries) {
    if (e.split != "train") continue;
    bsskit::TimeSignal sig = read_mono((fs::path(o.corpus) / e.path).string());
    bsskit::ComplexSpectrogram spec =
        bsskit::stft(sig.channels[0], sig.sample_rate, o.frame, hop);
    data.push_back(bsskit::make_training_example(spec, e.class_id,
                                                 n_classes));
  }
  if (data.empty())
    throw bsskit::ContractError("train: no training-split utterances in " +
                                o.corpus);
  timer.mark("load");

  bsskit::CvaeArch arch;
  arch.n_freq = o.frame / 2 + 1;
  arch.n_classes = n_classes;
  arch.latent_dim = o.latent_dim;
  bsskit::CvaeModel model(arch);
  model.init_params(o.seed);

  bsskit::CvaeTrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  cfg.kl_weight = o.kl_weight;
  cfg.seed = o.seed;
  bsskit::CvaeTrainLog log = bsskit::cvae_train(model, data, cfg);
  timer.mark("train");

  fs::create_directories(o.out);
  bsskit::save_model((fs::path(o.out) / "model.bin").string(), model);
  std::string lines;
  for (const auto &s : log.history) {
    json row{{"epoch", s.epoch}, {"elbo", s.elbo}, {"kl", s.kl}};
    lines += row.dump() + "\n";
  }
  write_text(fs::path(o.out) / "train_log.jsonl", lines);
  timer.mark("save");

  json report;
  report["command"] = "train";
  report["model"] = "model.bin";
  report["n_classes"] = n_classes;
  report["n_train_examples"] = data.size();
  report["n_freq"] = arch.n_freq;
  report["latent_dim"] = arch.latent_dim;
  report["frame"] = o.frame;
  report["hop"] = hop;
  report["epochs"] = o.epochs;
  report["first_elbo"] = log.history.front().elbo;
  report["final_elbo"] = log.history.back().elbo;
  report["rollbacks"] = log.rollbacks;
  finish_run(o.out, echo, report, timer);
  return 0;
}

// ---- mix ------------------------------------------------------------------

struct MixOpts {
  std::string out;
  std::vector<std::size_t> classes{0, 1};
  std::vector<std::string> sources;
  double duration = 2.0;
  std::uint32_t rate = 4000;
  std::string mode = "instantaneous";
  double decay_ms = 60.0;
  double tail_gain = 0.35;
  std::size_t max_taps = 2048;
  double snr_db = std::numeric_limits<double>::infinity();
  std::vector<double> mixing;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

int cmd_mix(const MixOpts &o, const std::string &echo) {
  StageTimer timer;
  std::vector<bsskit::TimeSignal> sources;
  json source_meta = json::array();
  if (!o.sources.empty()) {
    for (const std::string &p : o.sources) {
      sources.push_back(read_mono(p));
      source_meta.push_back({{"path", p}});
    }
  } else {
    std::vector<bsskit::SourceClassSpec> classes = bsskit::default_classes();
    for (std::size_t j = 0; j < o.classes.size(); ++j) {
      std::size_t cid = o.classes[j];
      if (cid >= classes.size())
        throw UsageError("--classes: class id " + std::to_string(cid) +
                         " out of range (have " +
                         std::to_string(classes.size()) + ")");
      std::uint64_t utt_seed = o.seed + 1000003ULL * j;
      bsskit::TimeSignal s;
      s.sample_rate = o.rate;
      s.channels.push_back(bsskit::gen_utterance(classes[cid], o.duration,
                                                 o.rate, utt_seed));
      sources.push_back(std::move(s));
      source_meta.push_back({{"class_id", cid}, {"seed", utt_seed}});
    }
  }
  timer.mark("sources");

  bsskit::MixSpec spec;
  spec.mode = o.mode == "convolutive" ? bsskit::MixMode::kConvolutive
                                      : bsskit::MixMode::kInstantaneous;
  spec.seed = o.seed;
  spec.rir_decay_ms = o.decay_ms;
  spec.rir_tail_gain = o.tail_gain;
  spec.rir_max_taps = o.max_taps;
  spec.noise_snr_db = o.snr_db;
  if (!o.mixing.empty()) {
    std::size_t n = sources.size();
    if (o.mixing.size() != n * n)
      throw UsageError("--mixing: need " + std::to_string(n * n) +
                       " row-major entries for " + std::to_string(n) +
                       " sources");
    spec.mixing = bsskit::NdArray::from({n, n}, o.mixing);
  }
  bsskit::MixResult r = bsskit::mix(sources, spec);
  timer.mark("mix");

  fs::create_directories(o.out);
  bsskit::write_wav((fs::path(o.out) / "mixture.wav").string(), r.mixture,
                    bsskit::WavFormat::kFloat32);
  for (std::size_t j = 0; j < r.images.size(); ++j) {
    // Reference convention: the ground-truth image of source j at channel 0.
    bsskit::TimeSignal ref;
    ref.sample_rate = r.mixture.sample_rate;
    ref.channels.push_back(r.images[j].channels[0]);
    bsskit::write_wav(
        (fs::path(o.out) / ("truth_" + std::to_string(j) + ".wav")).string(),
        ref, bsskit::WavFormat::kFloat32);
  }
  timer.mark("write");

  json report;
  report["command"] = "mix";
  report["mode"] = o.mode;
  report["sources"] = source_meta;
  report["n_channels"] = r.mixture.num_channels();
  report["length"] = r.mixture.length();
  report["sample_rate"] = r.mixture.sample_rate;
  report["mixture"] = "mixture.wav";
  json truths = json::array();
  for (std::size_t j = 0; j < r.images.size(); ++j)
    truths.push_back("truth_" + std::to_string(j) + ".wav");
  report["references"] = truths;
  if (o.mode == "convolutive") {
    report["decay_ms"] = o.decay_ms;
    report["tail_gain"] = o.tail_gain;
    report["max_taps"] = o.max_taps;
  }
  if (std::isfinite(o.snr_db)) report["noise_snr_db"] = o.snr_db;
  finish_run(o.out, echo, report, timer);
  return 0;
}

// ---- separate ---------------------------------------------------------

struct SeparateOpts {
  std::string in;
  std::string out;
  std::string algo;
  std::string model;
  std::size_t iters = 0;  // 0 = per-algorithm default
  std::size_t warm = 30;
  std::size_t bases = 2;
  std::size_t psi_steps = 10;
  double psi_lr = 1e-2;
  std::size_t frame = 4096;
  std::size_t hop = 0;
  std::string fix_class;
  bool dump_spectrograms = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

int cmd_separate(const SeparateOpts &o, const std::string &echo) {
  StageTimer timer;
  if (o.algo == "mvae" && o.model.empty())
    throw UsageError("separate: --algo mvae requires --model <checkpoint>");
  std::size_t hop = resolve_hop(o.frame, o.hop);
  std::size_t iters = o.iters != 0 ? o.iters
                      : o.algo == "mvae" ? std::size_t{40}
                                         : std::size_t{100};

  bsskit::TimeSignal mixture = bsskit::read_wav(o.in);
  std::vector<bsskit::ComplexSpectrogram> x =
      bsskit::stft_all(mixture, o.frame, hop);
  timer.mark("stft");

  std::vector<bsskit::ComplexSpectrogram> y;
  json iter_lines = json::array();  // assembled into loglik.jsonl
  json report;
  report["command"] = "separate";
  report["algo"] = o.algo;
  report["input_channels"] = mixture.num_channels();
  report["frame"] = o.frame;
  report["hop"] = hop;
  report["n_freq"] = x[0].n_freq;
  report["n_frames"] = x[0].n_frames;
  report["iterations"] = iters;
  report["seed"] = o.seed;

  if (o.algo == "ilrma") {
    bsskit::IlrmaConfig cfg;
    cfg.iterations = iters;
    cfg.bases = o.bases;
    cfg.seed = o.seed;
    cfg.track_log = true;
    bsskit::IlrmaResult res = bsskit::ilrma_run(x, cfg);
    y = std::move(res.demixed);
    for (const auto &s : res.log)
      iter_lines.push_back(json{{"iter", s.iter},
                                {"loglik", s.loglik},
                                {"skipped_updates", s.skipped_updates}});
    report["bases"] = o.bases;
    report["first_loglik"] = res.log.front().loglik;
    report["final_loglik"] = res.log.back().loglik;
  } else {
    bsskit::CvaeModel model =
        bsskit::load_model(o.model);
    bsskit::CvaeDecoder dec(model);
    bsskit::MvaeConfig cfg;
    cfg.iterations = iters;
    cfg.warm_start = o.warm;
    cfg.psi_steps = o.psi_steps;
    cfg.psi_lr = o.psi_lr;
    cfg.seed = o.seed;
    cfg.fixed_classes = parse_fix_class(o.fix_class);
    bsskit::MvaeResult res = bsskit::mvae_separate(x, dec, cfg);
    y = res.demixed;
    for (const auto &s : res.warm_log)
      iter_lines.push_back(json{{"stage", "warm"},
                                {"iter", s.iter},
                                {"loglik", s.loglik}});
    for (const auto &s : res.log)
      iter_lines.push_back(json{{"stage", "main"},
                                {"iter", s.iter},
                                {"loglik", s.loglik},
                                {"gains", s.gains},
                                {"class_posteriors", s.class_posteriors},
                                {"skipped_ip", s.skipped_ip},
                                {"psi_rejects", s.psi_rejects}});
    report["warm_start_iterations"] = o.warm;
    report["first_loglik"] = res.log.front().loglik;
    report["final_loglik"] = res.log.back().loglik;
    std::vector<bsskit::SourceClass> cls = bsskit::classify_sources(res);
    json classes = json::array();
    for (std::size_t j = 0; j < cls.size(); ++j)
      classes.push_back(json{{"source", j},
                             {"class_id", cls[j].class_id},
                             {"confidence", cls[j].confidence},
                             {"gain", res.g[j]}});
    report["classes"] = classes;
  }
  timer.mark("separate");

  std::vector<bool> flagged = bsskit::projection_back(y, x[0]);
  json flagged_j = json::array();
  for (bool f : flagged) flagged_j.push_back(f);
  report["projection_flagged"] = flagged_j;

  fs::create_directories(o.out);
  json outputs = json::array();
  for (std::size_t j = 0; j < y.size(); ++j) {
    bsskit::TimeSignal s;
    s.sample_rate = mixture.sample_rate;
    s.channels.push_back(bsskit::istft(y[j], mixture.length()));
    std::string name = "source_" + std::to_string(j) + ".wav";
    bsskit::write_wav((fs::path(o.out) / name).string(), s,
                      bsskit::WavFormat::kFloat32);
    outputs.push_back(name);
  }
  report["outputs"] = outputs;

  std::string lines;
  for (const auto &row : iter_lines) lines += row.dump() + "\n";
  write_text(fs::path(o.out) / "loglik.jsonl", lines);

  if (o.dump_spectrograms) {
    bsskit::dump_spectrogram_csv(
        x[0], (fs::path(o.out) / "mixture_ch0_power.csv").string(),
        bsskit::SpectrogramDump::kPower);
    for (std::size_t j = 0; j < y.size(); ++j)
      bsskit::dump_spectrogram_csv(
          y[j],
          (fs::path(o.out) / ("source_" + std::to_string(j) + "_power.csv"))
              .string(),
          bsskit::SpectrogramDump::kPower);
  }
  timer.mark("write");
  finish_run(o.out, echo, report, timer);
  return 0;
}

// ---- eval -------------------------------------------------------------

struct EvalOpts {
  std::vector<std::string> estimates;
  std::vector<std::string> references;
  std::size_t taps = 32;
  std::string out;
  unsigned threads = 1;
};

int cmd_eval(const EvalOpts &o, const std::string &echo) {
  StageTimer timer;
  if (o.estimates.size() != o.references.size())
    throw UsageError("eval: need the same number of --estimates and "
                     "--references");
  std::vector<std::vector<double>> est, ref;
  for (const std::string &p : o.estimates)
    est.push_back(read_mono(p).channels[0]);
  for (const std::string &p : o.references)
    ref.push_back(read_mono(p).channels[0]);
  timer.mark("load");

  bsskit::EvalReport rep = bsskit::bss_eval(est, ref, o.taps);
  timer.mark("eval");

  json report = eval_report_json(rep);
  report["command"] = "eval";

  fs::create_directories(o.out);
  std::string csv = "source,sdr,sir,sar,si_sdr\n";
  for (std::size_t k = 0; k < rep.per_source.size(); ++k) {
    const bsskit::SourceMetrics &m = rep.per_source[k];
    char line[160];
    if (m.valid)
      std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g\n", k,
                    m.sdr, m.sir, m.sar, m.si_sdr);
    else
      std::snprintf(line, sizeof(line), "%zu,,,,\n", k);
    csv += line;
  }
  write_text(fs::path(o.out) / "metrics.csv", csv);
  finish_run(o.out, echo, report, timer);
  return 0;
}

// ---- inspect ----------------------------------------------------------

struct InspectOpts {
  std::string model;
  std::string out;
};

int cmd_inspect(const InspectOpts &o, const std::string &echo) {
  StageTimer timer;
  bsskit::CvaeModel model = bsskit::load_model(o.model);
  timer.mark("load");

  std::size_t n_params = 0, n_scalars = 0;
  json params = json::array();
  for (const bsskit::ad::Parameter *p : model.trainable()) {
    ++n_params;
    n_scalars += p->value.size();
    params.push_back(json{{"name", p->name}, {"shape", p->value.shape()}});
  }
  std::uint64_t bn_updates = 0;
  for (std::size_t i = 0; i < model.n_bn(); ++i)
    bn_updates = std::max(bn_updates, model.bn_stats(i).updates);

  json report;
  report["command"] = "inspect";
  report["n_freq"] = model.arch().n_freq;
  report["n_classes"] = model.arch().n_classes;
  report["latent_dim"] = model.arch().latent_dim;
  report["downsample"] = bsskit::CvaeArch::kDownsample;
  report["min_frames"] = bsskit::CvaeArch::kMinFrames;
  report["n_parameters"] = n_params;
  report["n_scalars"] = n_scalars;
  report["bn_updates"] = bn_updates;
  report["parameters"] = params;

  std::cout << report.dump(2) << "\n";
  if (!o.out.empty()) finish_run(o.out, echo, report, timer);
  return 0;
}

void add_threads(CLI::App *cmd, unsigned &threads) {
  cmd->add_option("--threads", threads,
                  "Worker threads (1 = deterministic reference path)")
      ->check(CLI::Range(1u, 256u));
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"bsskit: determined multichannel source separation toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "",
                 "Read options from a key = value file (flags win)");

  CorpusOpts oc;
  CLI::App *c_corpus =
      app.add_subcommand("corpus", "Generate a labeled utterance corpus");
  c_corpus->add_option("--out", oc.out, "Output directory")->required();
  c_corpus->add_option("--utterances", oc.utterances,
                       "Utterances per class");
  c_corpus->add_option("--duration", oc.duration, "Seconds per utterance");
  c_corpus->add_option("--rate", oc.rate, "Sample rate in Hz");
  c_corpus->add_option("--seed", oc.seed, "Base seed");
  add_threads(c_corpus, oc.threads);

  TrainOpts ot;
  CLI::App *c_train =
      app.add_subcommand("train", "Train the source model on a corpus");
  c_train->add_option("--corpus", ot.corpus, "Corpus directory")->required();
  c_train->add_option("--out", ot.out, "Output directory")->required();
  c_train->add_option("--epochs", ot.epochs, "Training epochs");
  c_train->add_option("--batch", ot.batch, "Minibatch size");
  c_train->add_option("--lr", ot.lr, "Adam learning rate");
  c_train->add_option("--kl-weight", ot.kl_weight, "Divergence weight");
  c_train->add_option("--latent-dim", ot.latent_dim, "Latent channels");
  c_train->add_option("--frame", ot.frame, "Analysis frame length");
  c_train->add_option("--hop", ot.hop, "Hop (0 = frame/2)");
  c_train->add_option("--seed", ot.seed, "Seed");
  add_threads(c_train, ot.threads);

  MixOpts om;
  CLI::App *c_mix =
      app.add_subcommand("mix", "Synthesize a multichannel mixture");
  c_mix->add_option("--out", om.out, "Output directory")->required();
  c_mix->add_option("--classes", om.classes, "Source class ids")
      ->delimiter(',');
  c_mix->add_option("--sources", om.sources,
                    "Mono WAV files to mix instead of generated sources");
  c_mix->add_option("--duration", om.duration, "Seconds per source");
  c_mix->add_option("--rate", om.rate, "Sample rate in Hz");
  c_mix->add_option("--mode", om.mode, "Mixing model")
      ->check(CLI::IsMember({"instantaneous", "convolutive"}));
  c_mix->add_option("--decay-ms", om.decay_ms,
                    "Impulse-response decay (convolutive)");
  c_mix->add_option("--tail-gain", om.tail_gain,
                    "Impulse-response tail gain (convolutive)");
  c_mix->add_option("--max-taps", om.max_taps,
                    "Impulse-response length cap");
  c_mix->add_option("--snr-db", om.snr_db, "Sensor noise level (off when "
                                           "omitted)");
  c_mix->add_option("--mixing", om.mixing,
                    "Row-major instantaneous mixing matrix")
      ->delimiter(',');
  c_mix->add_option("--seed", om.seed, "Seed");
  add_threads(c_mix, om.threads);

  SeparateOpts os;
  CLI::App *c_sep =
      app.add_subcommand("separate", "Separate a multichannel mixture");
  c_sep->add_option("--in", os.in, "Mixture WAV")->required();
  c_sep->add_option("--out", os.out, "Output directory")->required();
  c_sep->add_option("--algo", os.algo, "Algorithm")
      ->required()
      ->check(CLI::IsMember({"ilrma", "mvae"}));
  c_sep->add_option("--model", os.model, "Trained source model checkpoint");
  c_sep->add_option("--iters", os.iters,
                    "Iterations (0 = 100 ilrma / 40 mvae)");
  c_sep->add_option("--warm-start-iters", os.warm,
                    "Basis-model warm start iterations (mvae)");
  c_sep->add_option("--bases", os.bases, "Basis count (ilrma)");
  c_sep->add_option("--psi-steps", os.psi_steps,
                    "Latent gradient steps per sweep (mvae)");
  c_sep->add_option("--psi-lr", os.psi_lr, "Latent step size (mvae)");
  c_sep->add_option("--frame", os.frame, "Analysis frame length");
  c_sep->add_option("--hop", os.hop, "Hop (0 = frame/2)");
  c_sep->add_option("--fix-class", os.fix_class,
                    "Comma list pinning each source's class (-1 = free)");
  c_sep->add_flag("--dump-spectrograms", os.dump_spectrograms,
                  "Write power spectrogram CSVs");
  c_sep->add_option("--seed", os.seed, "Seed");
  add_threads(c_sep, os.threads);

  EvalOpts oe;
  CLI::App *c_eval =
      app.add_subcommand("eval", "Score estimates against references");
  c_eval->add_option("--estimates", oe.estimates, "Estimated mono WAVs")
      ->required();
  c_eval->add_option("--references", oe.references, "Reference mono WAVs")
      ->required();
  c_eval->add_option("--taps", oe.taps, "Projection span in taps");
  c_eval->add_option("--out", oe.out, "Output directory")->required();
  add_threads(c_eval, oe.threads);

  InspectOpts oi;
  CLI::App *c_inspect =
      app.add_subcommand("inspect", "Print checkpoint metadata as JSON");
  c_inspect->add_option("--model", oi.model, "Checkpoint path")->required();
  c_inspect->add_option("--out", oi.out,
                        "Optional directory for report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 1;
  }

  std::string echo = app.config_to_str(true, false);
  std::string out_dir;
  try {
    if (c_corpus->parsed()) {
      out_dir = oc.out;
      return cmd_corpus(oc, echo);
    }
    if (c_train->parsed()) {
      out_dir = ot.out;
      return cmd_train(ot, echo);
    }
    if (c_mix->parsed()) {
      out_dir = om.out;
      return cmd_mix(om, echo);
    }
    if (c_sep->parsed()) {
      out_dir = os.out;
      return cmd_separate(os, echo);
    }
    if (c_eval->parsed()) {
      out_dir = oe.out;
      return cmd_eval(oe, echo);
    }
    if (c_inspect->parsed()) {
      out_dir = oi.out;
      return cmd_inspect(oi, echo);
    }
    std::cerr << "bsskit: no command selected\n";
    return 1;
  } catch (const UsageError &e) {
    std::cerr << "bsskit: " << e.what() << "\n";
    return 1;
  } catch (const bsskit::ConfigError &e) {
    std::cerr << "bsskit: " << e.what() << "\n";
    return 1;
  } catch (const bsskit::Error &e) {
    std::cerr << "bsskit: " << e.what() << "\n";
    if (!out_dir.empty()) {
      try {
        fs::create_directories(out_dir);
        write_json_file(fs::path(out_dir) / "error.json",
                        json{{"error", e.what()}});
      } catch (...) {
      }
    }
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "bsskit: " << e.what() << "\n";
    return 2;
  }
}
