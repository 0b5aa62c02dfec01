#pragma once

// Alternating saddle training: per outer step, sample one batch, run
// inner_steps of discriminator ascent (descent on the negated loss), then one
// generator descent step. Every batch is a pure function of
// (seed, stream, step), which makes runs reproducible and resume exact.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "adam.hpp"
#include "data.hpp"
#include "error.hpp"
#include "hamiltonian.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace mfg {

struct TrainConfig {
  int64_t outer_steps = 20000;  // generator updates; 0 is a valid no-op run
  int64_t inner_steps = 5;      // discriminator ascents per outer step
  int64_t batch_size = 256;
  double lr_gen = 1e-4;
  double lr_disc = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double q = 2.0;
  uint64_t seed = 1;
  int64_t eval_every = 100;
  int64_t checkpoint_every = 1000;
  int64_t eval_batch = 10000;  // fresh samples per metrics row
  int64_t hjb_batch = 1000;    // samples for the HJB residual diagnostic

  void validate() const {
    if (outer_steps < 0) raise(Errc::config, "config: outer-steps must be >= 0");
    if (inner_steps < 1) raise(Errc::config, "config: inner-steps must be >= 1");
    if (batch_size < 1) raise(Errc::config, "config: batch-size must be >= 1");
    if (!(lr_gen > 0.0) || !(lr_disc > 0.0))
      raise(Errc::config, "config: learning rates must be > 0");
    if (!(adam_beta1 >= 0.0) || adam_beta1 >= 1.0 || !(adam_beta2 >= 0.0) || adam_beta2 >= 1.0)
      raise(Errc::config, "config: adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) raise(Errc::config, "config: adam-eps must be > 0");
    if (!(q > 1.0)) raise(Errc::config, "config: q must be > 1");
    if (eval_every < 1) raise(Errc::config, "config: eval-every must be >= 1");
    if (checkpoint_every < 1) raise(Errc::config, "config: checkpoint-every must be >= 1");
    if (eval_batch < 2) raise(Errc::config, "config: eval-batch must be >= 2");
    if (hjb_batch < 1) raise(Errc::config, "config: hjb-batch must be >= 1");
  }
};

// Yields the data batch for an outer step; must be a pure function of step.
using DataSource = std::function<Tensor(int64_t step, int64_t batch_size)>;

inline DataSource gaussian_source(const GaussianTarget& target, uint64_t seed) {
  return [target, seed](int64_t step, int64_t batch) {
    Rng rng(seed, Rng::kData, static_cast<uint64_t>(step));
    return sample_gaussian(target, batch, rng);
  };
}

// Draws rows with replacement from a fixed dataset.
inline DataSource image_source(ImageDataset ds, uint64_t seed) {
  if (ds.count < 1) raise(Errc::precondition, "image source: dataset is empty");
  auto shared = std::make_shared<ImageDataset>(std::move(ds));
  return [shared, seed](int64_t step, int64_t batch) {
    Rng rng(seed, Rng::kData, static_cast<uint64_t>(step));
    Tensor out = Tensor::zeros({batch, 784});
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t row = static_cast<int64_t>(rng.below(static_cast<uint64_t>(shared->count)));
      for (int64_t j = 0; j < 784; ++j) out.at(i, j) = shared->images.at(row, j);
    }
    return out;
  };
}

struct TrainSetup {
  TrainConfig cfg;
  MlpSpec gen_spec;
  MlpSpec disc_spec;
  DataSource data;
  Tensor target_mean;  // (d) metrics reference
  Tensor target_cov;   // (d,d) metrics reference
  std::string out_dir;  // files land here; empty string keeps the run in memory
  std::function<void(const MetricsRecord&)> on_metrics;  // optional progress hook
};

struct TrainResult {
  ParamSet gen_params;
  ParamSet disc_params;
  AdamState gen_state;
  AdamState disc_state;
  int64_t final_step = 0;
  std::vector<MetricsRecord> metrics;  // rows emitted by this call
  // Per outer step: did the inner ascent end with a loss no lower than it
  // started? Stochastic batches make this statistical, not strict.
  std::vector<uint8_t> ascent_up;
};

inline constexpr char kMetricsHeader[] =
    "step,total,interior,terminal,initial,mean_err,cov_err,w2,hjb_residual,wall_ms";

// Mean over n fresh samples of |dPhi/dt + H(grad Phi)| at (rho(z,t), t).
inline double hjb_residual_diagnostic(const ParamSet& gen_params, const ParamSet& disc_params,
                                      const HamiltonianSpec& hspec, int64_t n, Rng& rng) {
  if (n < 1) raise(Errc::precondition, "hjb diagnostic: need n >= 1");
  Tape tape;
  NetOnTape gen = place_on_tape(tape, gen_params);
  NetOnTape disc = place_on_tape(tape, disc_params);
  Val z = tape.leaf(sample_noise(n, gen_params.spec.input_dim, rng));
  Tensor tvals = sample_time(n, rng);
  Val t_gen = tape.leaf(tvals);
  Val t_disc = tape.leaf(tvals);
  Val rho = forward(gen, z, t_gen);
  Val phi = forward(disc, rho, t_disc);
  std::vector<Val> gs = grad(sum(phi), {rho, t_disc});
  Val h_rows = hamiltonian(gs[0], hspec);
  const Tensor& gt = gs[1].tensor();
  const Tensor& h = h_rows.tensor();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(gt.at(i, 0) + h.at(i, 0));
  return acc / static_cast<double>(n);
}

namespace detail {

inline std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void append_state(std::string& buf, const AdamState& st) {
  put_le64(buf, static_cast<uint64_t>(st.step_count));
  put_le64(buf, static_cast<uint64_t>(st.first_moment.size()));
  for (const auto* moments : {&st.first_moment, &st.second_moment})
    for (const Tensor& t : *moments)
      for (double x : t.data) put_le64(buf, std::bit_cast<uint64_t>(x));
}

inline constexpr char kOptMagic[8] = {'M', 'F', 'G', 'O', 'P', 'T', '1', '\0'};

// opt.bin: magic, outer step, then the two optimizer states (gen, disc),
// little-endian 8-byte words throughout.
inline void save_opt_state(const std::string& path, int64_t step, const AdamState& gen,
                           const AdamState& disc) {
  std::string buf(kOptMagic, sizeof kOptMagic);
  put_le64(buf, static_cast<uint64_t>(step));
  append_state(buf, gen);
  append_state(buf, disc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io, "opt state: cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) raise(Errc::io, "opt state: short write to " + path);
}

struct OptReader {
  std::ifstream in;
  std::string path;

  uint64_t word() {
    char b[8];
    if (!in.read(b, 8))
      raise(Errc::checkpoint_truncated, "opt state: " + path + " ends early");
    return get_le64(reinterpret_cast<const unsigned char*>(b));
  }
};

inline void read_state(OptReader& r, AdamState& st, const ParamSet& like) {
  st = AdamState::like(like);
  st.step_count = static_cast<int64_t>(r.word());
  const uint64_t count = r.word();
  if (count != st.first_moment.size())
    raise(Errc::checkpoint_mismatch, "opt state: " + r.path + " holds " + std::to_string(count) +
                                         " moment tensors, expected " +
                                         std::to_string(st.first_moment.size()));
  for (auto* moments : {&st.first_moment, &st.second_moment})
    for (Tensor& t : *moments)
      for (double& x : t.data) x = std::bit_cast<double>(r.word());
}

inline int64_t load_opt_state(const std::string& path, AdamState& gen, AdamState& disc,
                              const ParamSet& gen_like, const ParamSet& disc_like) {
  OptReader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) raise(Errc::io, "opt state: cannot open " + path);
  char magic[8];
  if (!r.in.read(magic, 8)) raise(Errc::checkpoint_truncated, "opt state: " + path + " ends early");
  if (std::string(magic, 8) != std::string(kOptMagic, 8))
    raise(Errc::checkpoint_magic, "opt state: " + path + " has the wrong magic");
  const int64_t step = static_cast<int64_t>(r.word());
  read_state(r, gen, gen_like);
  read_state(r, disc, disc_like);
  char extra;
  if (r.in.read(&extra, 1))
    raise(Errc::checkpoint_mismatch, "opt state: trailing bytes in " + path);
  return step;
}

inline std::string format_metrics_row(const MetricsRecord& m) {
  char buf[360];
  std::snprintf(buf, sizeof buf,
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld",
                static_cast<long long>(m.step), m.total, m.interior, m.terminal, m.initial,
                m.mean_err, m.cov_err, m.w2, m.hjb_residual, static_cast<long long>(m.wall_ms));
  return buf;
}

}  // namespace detail

namespace detail {

struct TrainerIo {
  std::string out_dir;
  std::string gen_path, disc_path, opt_path, metrics_path;
  int64_t last_checkpoint_step = -1;

  explicit TrainerIo(const std::string& dir) : out_dir(dir) {
    if (out_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) raise(Errc::io, "trainer: cannot create output directory " + out_dir);
    gen_path = join_path(out_dir, "gen.ckpt");
    disc_path = join_path(out_dir, "disc.ckpt");
    opt_path = join_path(out_dir, "opt.bin");
    metrics_path = join_path(out_dir, "metrics.csv");
  }

  bool active() const { return !out_dir.empty(); }

  void checkpoint(int64_t step, const ParamSet& gen, const ParamSet& disc, const AdamState& gs,
                  const AdamState& ds) {
    if (!active()) return;
    save_checkpoint(gen_path, gen);
    save_checkpoint(disc_path, disc);
    save_opt_state(opt_path, step, gs, ds);
    last_checkpoint_step = step;
  }

  void open_metrics(bool append, std::ofstream& out) {
    if (!active()) return;
    const bool fresh = !append || !std::filesystem::exists(metrics_path);
    out.open(metrics_path, fresh ? (std::ios::binary | std::ios::trunc)
                                 : (std::ios::binary | std::ios::app));
    if (!out) raise(Errc::io, "trainer: cannot open " + metrics_path);
    if (fresh) out << kMetricsHeader << "\n";
  }
};

}  // namespace detail

namespace detail {

inline TrainResult run_training(const TrainSetup& setup, ParamSet gen_params,
                                ParamSet disc_params, AdamState gen_state, AdamState disc_state,
                                int64_t start_step, bool append_metrics) {
  const TrainConfig& cfg = setup.cfg;
  cfg.validate();
  if (!setup.data) raise(Errc::precondition, "trainer: no data source");
  if (setup.gen_spec.output_dim != setup.disc_spec.input_dim)
    raise(Errc::shape_mismatch, "trainer: generator output does not feed the discriminator");

  const HamiltonianSpec hspec = HamiltonianSpec::make(cfg.q);
  TrainerIo io(setup.out_dir);
  std::ofstream metrics_out;
  io.open_metrics(append_metrics, metrics_out);

  TrainResult res;
  res.ascent_up.reserve(static_cast<size_t>(cfg.outer_steps - start_step));

  // The initial checkpoint doubles as the last-good state for early aborts.
  io.checkpoint(start_step, gen_params, disc_params, gen_state, disc_state);

  auto emit = [&](const MetricsRecord& m) {
    if (metrics_out.is_open()) {
      metrics_out << format_metrics_row(m) << "\n";
      metrics_out.flush();
    }
    res.metrics.push_back(m);
    if (setup.on_metrics) setup.on_metrics(m);
  };

  auto abort_nonfinite = [&](int64_t step, const std::string& why) -> void {
    std::string msg =
        "trainer: non-finite loss during step " + std::to_string(step + 1) + " (" + why + ")";
    if (io.active() && io.last_checkpoint_step >= 0)
      msg += "; last good checkpoint after step " + std::to_string(io.last_checkpoint_step) +
             " in " + io.out_dir;
    raise(Errc::non_finite, msg);
  };

  for (int64_t step = start_step; step < cfg.outer_steps; ++step) {
    LossInputs in;
    {
      Rng rz(cfg.seed, Rng::kNoiseInterior, static_cast<uint64_t>(step));
      Rng rt(cfg.seed, Rng::kTime, static_cast<uint64_t>(step));
      Rng rz0(cfg.seed, Rng::kNoiseInitial, static_cast<uint64_t>(step));
      in.z_interior = sample_noise(cfg.batch_size, setup.gen_spec.input_dim, rz);
      in.t_interior = sample_time(cfg.batch_size, rt);
      in.x_data = setup.data(step, cfg.batch_size);
      in.z_initial = sample_noise(cfg.batch_size, setup.gen_spec.input_dim, rz0);
    }

    double first_total = 0.0, last_total = 0.0;
    try {
      for (int64_t k = 0; k < cfg.inner_steps; ++k) {
        Tape tape;
        LossGraph lg = mfg_gan_loss(tape, gen_params, disc_params, in, hspec);
        if (k == 0) first_total = lg.total.value();
        last_total = lg.total.value();
        std::vector<Val> g = grad(lg.total, lg.disc.all());
        ParamSet dgrad = grads_to_params(setup.disc_spec, g);
        for (auto* part : {&dgrad.weights, &dgrad.biases})
          for (Tensor& t : *part)
            for (double& x : t.data) x = -x;  // ascent on the saddle objective
        std::tie(disc_params, disc_state) =
            adam_step(disc_params, dgrad, disc_state, cfg.lr_disc, cfg.adam_beta1, cfg.adam_beta2,
                      cfg.adam_eps);
      }
    } catch (const Error& e) {
      if (e.code() == Errc::non_finite) abort_nonfinite(step, e.what());
      throw;
    }

    MetricsRecord row;
    try {
      Tape tape;
      LossGraph lg = mfg_gan_loss(tape, gen_params, disc_params, in, hspec);
      row.total = lg.breakdown.total;
      row.interior = lg.breakdown.interior_term;
      row.terminal = lg.breakdown.terminal_term;
      row.initial = lg.breakdown.initial_term;
      last_total = lg.breakdown.total;
      std::vector<Val> g = grad(lg.total, lg.gen.all());
      ParamSet ggrad = grads_to_params(setup.gen_spec, g);
      std::tie(gen_params, gen_state) =
          adam_step(gen_params, ggrad, gen_state, cfg.lr_gen, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
    } catch (const Error& e) {
      if (e.code() == Errc::non_finite) abort_nonfinite(step, e.what());
      throw;
    }
    res.ascent_up.push_back(last_total >= first_total ? 1 : 0);

    const int64_t done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.outer_steps) {
      row.step = done;
      Rng reval(cfg.seed, Rng::kEval, static_cast<uint64_t>(step));
      Tape tape;
      NetOnTape gen = place_on_tape(tape, gen_params);
      Val z = tape.leaf(sample_noise(cfg.eval_batch, setup.gen_spec.input_dim, reval));
      Val tv = tape.leaf(Tensor::full({cfg.eval_batch, 1}, 1.0));
      const Tensor& x = forward(gen, z, tv).tensor();
      if (!x.all_finite()) abort_nonfinite(step, "evaluation forward pass");
      Tensor mean, cov;
      empirical_moments(x, mean, cov);
      const int64_t d = setup.gen_spec.output_dim;
      double mean_err = 0.0;
      for (int64_t j = 0; j < d; ++j)
        mean_err = std::max(mean_err, std::fabs(mean.at(j) - setup.target_mean.at(j)));
      double cov_err = 0.0;
      for (int64_t a = 0; a < d; ++a)
        for (int64_t b = 0; b < d; ++b) {
          const double diff = cov.at(a, b) - setup.target_cov.at(a, b);
          cov_err += diff * diff;
        }
      row.mean_err = mean_err;
      row.cov_err = std::sqrt(cov_err);
      row.w2 = gaussian_w2(mean, cov, setup.target_mean, setup.target_cov);
      row.hjb_residual = hjb_residual_diagnostic(gen_params, disc_params, hspec, cfg.hjb_batch,
                                                 reval);
      row.wall_ms = 0;  // pinned so identical runs produce identical bytes
      emit(row);
    }
    if (done % cfg.checkpoint_every == 0 || done == cfg.outer_steps)
      io.checkpoint(done, gen_params, disc_params, gen_state, disc_state);
  }

  res.gen_params = std::move(gen_params);
  res.disc_params = std::move(disc_params);
  res.gen_state = std::move(gen_state);
  res.disc_state = std::move(disc_state);
  res.final_step = cfg.outer_steps;
  return res;
}

}  // namespace detail

// Fresh run: initialize both networks from the seed and train to
// cfg.outer_steps.
inline TrainResult train(const TrainSetup& setup) {
  Rng rg(setup.cfg.seed, Rng::kInit, 0);
  Rng rd(setup.cfg.seed, Rng::kInit, 1);
  ParamSet gen_params = init_params(setup.gen_spec, rg);
  ParamSet disc_params = init_params(setup.disc_spec, rd);
  AdamState gen_state = AdamState::like(gen_params);
  AdamState disc_state = AdamState::like(disc_params);
  return detail::run_training(setup, std::move(gen_params), std::move(disc_params),
                              std::move(gen_state), std::move(disc_state), 0, false);
}

// Continue a run from the checkpoint bundle in setup.out_dir up to
// cfg.outer_steps; metrics rows are appended.
inline TrainResult resume(const TrainSetup& setup) {
  if (setup.out_dir.empty()) raise(Errc::precondition, "resume: no output directory to resume from");
  detail::TrainerIo io(setup.out_dir);
  ParamSet gen_params = load_checkpoint(io.gen_path, setup.gen_spec);
  ParamSet disc_params = load_checkpoint(io.disc_path, setup.disc_spec);
  AdamState gen_state, disc_state;
  const int64_t step = detail::load_opt_state(io.opt_path, gen_state, disc_state, gen_params,
                                              disc_params);
  if (step > setup.cfg.outer_steps)
    raise(Errc::config, "resume: checkpoint is at step " + std::to_string(step) +
                            ", beyond outer-steps " + std::to_string(setup.cfg.outer_steps));
  return detail::run_training(setup, std::move(gen_params), std::move(disc_params),
                              std::move(gen_state), std::move(disc_state), step, true);
}

}  // namespace mfg
