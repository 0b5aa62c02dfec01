// Acceptance gate: one line per criterion, tolerances and budgets pinned in
// code. Run with no arguments for the full gate, or pass criterion numbers
// (e.g. "acceptance 1 2 9") to run a subset. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck_cases.hpp"
#include "mfg/config.hpp"
#include "mfg/trainer.hpp"

using namespace mfg;
using clock_type = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string scratch(const char* leaf) {
  auto dir = std::filesystem::temp_directory_path() / "mfg_acceptance" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

ParamSet random_net(int64_t in, std::vector<int64_t> hidden, int64_t out, uint64_t seed) {
  MlpSpec spec{in, std::move(hidden), out, true, false};
  Rng rng(seed, Rng::kInit, 0);
  return init_params(spec, rng);
}

LossInputs random_inputs(int64_t n, int64_t m, int64_t dz, int64_t d, uint64_t seed) {
  LossInputs in;
  Rng rz(seed, Rng::kNoiseInterior, 0);
  Rng rt(seed, Rng::kTime, 0);
  Rng rx(seed, Rng::kData, 0);
  Rng rz0(seed, Rng::kNoiseInitial, 0);
  in.z_interior = sample_noise(n, dz, rz);
  in.t_interior = sample_time(n, rt);
  in.x_data = sample_noise(m, d, rx);
  in.z_initial = sample_noise(m, dz, rz0);
  return in;
}

// ---- criterion 1: finite differences over every op and the full loss -------

Outcome criterion_gradcheck() {
  const auto t0 = clock_type::now();
  double worst_first = 0.0, worst_second = 0.0;

  uint64_t case_id = 0;
  for (const mfg::testing::GradCase& c : mfg::testing::gradcheck_cases()) {
    Rng rng(11, Rng::kTest, case_id++);
    for (int k = 0; k < 60; ++k) {
      Tensor x = mfg::testing::random_input(rng, c.shape);
      worst_first = std::max(worst_first, finite_diff_check(c.f, x, 1e-5));
    }
    for (int k = 0; k < 15; ++k) {
      Tensor x = mfg::testing::random_input(rng, c.shape);
      Tensor w = mfg::testing::random_input(rng, c.shape);
      worst_second =
          std::max(worst_second, finite_diff_check(mfg::testing::second_order_probe(c, w), x, 1e-5));
    }
  }

  // Full saddle loss at d=2: analytic parameter gradients against central
  // differences. These pass through grad_x Phi, so they are second order.
  for (double q : {2.0, 10.0}) {
    const HamiltonianSpec spec = HamiltonianSpec::make(q);
    ParamSet gen = random_net(2, {3}, 2, 101);
    ParamSet disc = random_net(2, {3}, 1, 102);
    LossInputs in = random_inputs(4, 4, 2, 2, 103);

    auto loss_at = [&](const ParamSet& g, const ParamSet& d) {
      Tape tape;
      return mfg_gan_loss(tape, g, d, in, spec).breakdown.total;
    };

    Tape tape;
    LossGraph lg = mfg_gan_loss(tape, gen, disc, in, spec);
    std::vector<Val> wrt = lg.gen.all();
    for (Val v : lg.disc.all()) wrt.push_back(v);
    std::vector<Val> gs = grad(lg.total, wrt);
    const size_t ng = lg.gen.all().size();
    ParamSet ga = grads_to_params(gen.spec, std::vector<Val>(gs.begin(), gs.begin() + ng));
    ParamSet da = grads_to_params(disc.spec, std::vector<Val>(gs.begin() + ng, gs.end()));

    const double h = 1e-5;
    auto check_params = [&](const ParamSet& base, const ParamSet& analytic, bool is_gen) {
      std::vector<double> flat = flatten(base);
      std::vector<double> aflat = flatten(analytic);
      for (size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> hi = flat, lo = flat;
        hi[i] += h;
        lo[i] -= h;
        ParamSet ph = unflatten(base.spec, hi);
        ParamSet pl = unflatten(base.spec, lo);
        const double numeric = is_gen ? (loss_at(ph, disc) - loss_at(pl, disc)) / (2 * h)
                                      : (loss_at(gen, ph) - loss_at(gen, pl)) / (2 * h);
        worst_second = std::max(
            worst_second, std::abs(aflat[i] - numeric) / std::max(1.0, std::abs(aflat[i])));
      }
    };
    check_params(gen, ga, true);
    check_params(disc, da, false);
  }

  const double wall = seconds_since(t0);
  Outcome o;
  o.pass = worst_first < 1e-5 && worst_second < 1e-4 && wall < 60.0;
  o.detail = fmt("first %.2e < 1e-5, second %.2e < 1e-4, %.1fs < 60s", worst_first, worst_second,
                 wall);
  return o;
}

// ---- criterion 2: Legendre conjugacy against the grid oracle ---------------

Outcome criterion_conjugacy() {
  const auto t0 = clock_type::now();
  // Covector radii keep the maximizer norm |g|^(q-1) inside each grid.
  struct Band {
    double q, lo, hi, width, step;
  };
  const Band bands[] = {
      {1.5, 0.5, 2.2, 2.0, 2e-3},
      {2.0, 0.5, 2.2, 3.0, 2e-3},
      {3.0, 0.5, 2.0, 4.5, 5e-3},
      {10.0, 0.8, 1.2, 6.0, 5e-3},
  };
  double worst = 0.0;
  for (const Band& b : bands) {
    const HamiltonianSpec spec = HamiltonianSpec::make(b.q);
    Rng rng(47, Rng::kTest, static_cast<uint64_t>(b.q * 1000));
    for (int k = 0; k < 50; ++k) {
      const double radius = b.lo + (b.hi - b.lo) * rng.uniform();
      const double angle = 2.0 * Rng::pi() * rng.uniform();
      Tensor covector = Tensor::row({radius * std::cos(angle), radius * std::sin(angle)});
      const double closed = hamiltonian_value(covector, spec);
      const double oracle = legendre_oracle(covector, spec, b.width, b.step);
      worst = std::max(worst, std::fabs(closed - oracle) / std::fabs(oracle));
    }
  }
  const double wall = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-2 && wall < 120.0;
  o.detail = fmt("worst relative %.2e < 1e-2 over 4x50 covectors, %.1fs < 120s", worst, wall);
  return o;
}

// ---- criterion 3: q=2 Hamiltonian loss equals the optimal-transport loss ---

Outcome criterion_ot_equivalence() {
  const HamiltonianSpec q2 = HamiltonianSpec::make(2.0);
  const HamiltonianCallback ot = ot_gan_callback(q2.epsilon);
  int mismatches = 0;
  for (uint64_t batch = 0; batch < 100; ++batch) {
    ParamSet gen = random_net(2, {8, 8}, 2, 300 + batch);
    ParamSet disc = random_net(2, {8, 8}, 1, 400 + batch);
    LossInputs in = random_inputs(16, 12, 2, 2, 500 + batch);

    auto eval = [&](bool use_ot, LossBreakdown& bd, std::vector<double>& gg,
                    std::vector<double>& dg) {
      Tape tape;
      LossGraph lg = use_ot ? general_hamiltonian_loss(tape, gen, disc, in, ot)
                            : mfg_gan_loss(tape, gen, disc, in, q2);
      bd = lg.breakdown;
      std::vector<Val> wrt = lg.gen.all();
      for (Val v : lg.disc.all()) wrt.push_back(v);
      std::vector<Val> gs = grad(lg.total, wrt);
      const size_t ng = lg.gen.all().size();
      gg = flatten(grads_to_params(gen.spec, std::vector<Val>(gs.begin(), gs.begin() + ng)));
      dg = flatten(grads_to_params(disc.spec, std::vector<Val>(gs.begin() + ng, gs.end())));
    };

    LossBreakdown mfg_bd, ot_bd;
    std::vector<double> mfg_gg, mfg_dg, ot_gg, ot_dg;
    eval(false, mfg_bd, mfg_gg, mfg_dg);
    eval(true, ot_bd, ot_gg, ot_dg);

    const bool same = mfg_bd.total == ot_bd.total && mfg_bd.interior_term == ot_bd.interior_term &&
                      mfg_bd.terminal_term == ot_bd.terminal_term &&
                      mfg_bd.initial_term == ot_bd.initial_term && mfg_gg == ot_gg &&
                      mfg_dg == ot_dg;
    mismatches += same ? 0 : 1;
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = fmt("%d of 100 batches differ in loss or gradients (bitwise)", mismatches);
  return o;
}

// ---- training criteria ------------------------------------------------------

struct SynRun {
  std::vector<MetricsRecord> rows;
  bool aborted = false;
  std::string abort_what;
  double wall = 0.0;
  std::vector<uint8_t> ascent_up;
};

SynRun run_experiment(const std::string& preset_lines, const char* leaf) {
  RunConfig rc = parse_config_text(preset_lines, {});
  rc.out_dir = scratch(leaf);
  validate_run_config(rc);

  TrainSetup setup;
  setup.cfg = rc.train;
  setup.gen_spec = generator_spec(rc);
  setup.disc_spec = discriminator_spec(rc);
  GaussianTarget target = gaussian_target(rc);
  setup.data = gaussian_source(target, rc.train.seed);
  setup.target_mean = target.mean;
  setup.target_cov = target.covariance;
  setup.out_dir = rc.out_dir;

  SynRun run;
  setup.on_metrics = [&run](const MetricsRecord& m) { run.rows.push_back(m); };
  const auto t0 = clock_type::now();
  try {
    TrainResult res = train(setup);
    run.ascent_up = std::move(res.ascent_up);
  } catch (const Error& e) {
    if (e.code() != Errc::non_finite) throw;
    run.aborted = true;
    run.abort_what = e.what();
  }
  run.wall = seconds_since(t0);
  return run;
}

Outcome criterion_syn2() {
  // Defaults throughout (batch 256, inner 5, lr 1e-4, 3x128 nets); only the
  // step budget, seed, and eval cadence are chosen here.
  SynRun run = run_experiment(
      "experiment = syn2\nouter-steps = 3500\nseed = 12345\neval-every = 100\n"
      "checkpoint-every = 1750\n",
      "syn2");
  const MetricsRecord* best = nullptr;
  for (const auto& m : run.rows)
    if (m.mean_err < 0.3 && m.cov_err < 0.3 && m.w2 < 0.5 && !best) best = &m;

  // Module invariant, recorded alongside: the inner ascent raises the loss on
  // its own batch in at least 90% of the first 1000 outer steps.
  int64_t up = 0;
  const int64_t horizon = std::min<int64_t>(1000, static_cast<int64_t>(run.ascent_up.size()));
  for (int64_t i = 0; i < horizon; ++i) up += run.ascent_up[i];
  const double up_frac = horizon ? static_cast<double>(up) / static_cast<double>(horizon) : 0.0;

  Outcome o;
  o.pass = !run.aborted && best != nullptr && up_frac >= 0.9 && run.wall < 600.0;
  if (best)
    o.detail = fmt("step %lld: mean %.3f < 0.3, cov %.3f < 0.3, w2 %.3f < 0.5; ascent-up %.0f%%; "
                   "%.0fs < 600s",
                   static_cast<long long>(best->step), best->mean_err, best->cov_err, best->w2,
                   100.0 * up_frac, run.wall);
  else
    o.detail = run.aborted ? "aborted: " + run.abort_what
                           : fmt("no row within thresholds in %zu rows; ascent-up %.0f%%; %.0fs",
                                 run.rows.size(), 100.0 * up_frac, run.wall);
  return o;
}

Outcome criterion_syn1() {
  SynRun run = run_experiment(
      "experiment = syn1\nouter-steps = 3000\nseed = 12345\neval-every = 100\n"
      "checkpoint-every = 1500\n",
      "syn1");
  const MetricsRecord* best = nullptr;
  for (const auto& m : run.rows)
    if (m.mean_err < 0.5 && !best) best = &m;
  Outcome o;
  o.pass = !run.aborted && best != nullptr && run.wall < 1200.0;
  if (run.aborted)
    o.detail = "aborted: " + run.abort_what;
  else if (best)
    o.detail = fmt("step %lld: mean %.3f < 0.5, no non-finite abort, %.0fs < 1200s",
                   static_cast<long long>(best->step), best->mean_err, run.wall);
  else
    o.detail = fmt("no row with mean_err < 0.5 in %zu rows, %.0fs", run.rows.size(), run.wall);
  return o;
}

Outcome criterion_syn3() {
  // At d=10 the defaults freeze: the target sits far enough out that the
  // discriminator's first layer saturates once the generator arrives, and the
  // Hamiltonian penalty then prefers a flat discriminator that cannot see the
  // residual covariance error. Doubling the inner ascent count keeps the
  // discriminator sharp through the approach and the run settles inside the
  // thresholds instead of orbiting them.
  SynRun run = run_experiment(
      "experiment = syn3\nouter-steps = 2500\ninner-steps = 10\nseed = 1\n"
      "eval-every = 25\neval-batch = 4000\ncheckpoint-every = 1250\n",
      "syn3");
  const MetricsRecord* best = nullptr;
  for (const auto& m : run.rows)
    if (m.mean_err < 0.5 && m.cov_err < 1.0 && !best) best = &m;
  Outcome o;
  o.pass = !run.aborted && best != nullptr && run.wall < 1800.0;
  if (run.aborted)
    o.detail = "aborted: " + run.abort_what;
  else if (best)
    o.detail = fmt("step %lld: per-coord mean %.3f < 0.5, cov %.3f < 1.0, %.0fs < 1800s",
                   static_cast<long long>(best->step), best->mean_err, best->cov_err, run.wall);
  else
    o.detail = fmt("no row within thresholds in %zu rows, %.0fs", run.rows.size(), run.wall);
  return o;
}

// Deterministic stand-in image set: soft blobs on a 28x28 grid, one or two
// per image, written through the IDX round trip like a real dataset.
std::string fabricate_images(const std::string& dir, int64_t count) {
  Tensor images = Tensor::zeros({count, 784});
  Rng rng(2718, Rng::kData, 0);
  for (int64_t i = 0; i < count; ++i) {
    const int blobs = 1 + static_cast<int>(rng.below(2));
    for (int b = 0; b < blobs; ++b) {
      const double cx = 6.0 + 16.0 * rng.uniform();
      const double cy = 6.0 + 16.0 * rng.uniform();
      const double sigma = 3.5 + 2.5 * rng.uniform();
      const double amp = (0.6 + 0.4 * rng.uniform()) / blobs;
      for (int64_t y = 0; y < 28; ++y)
        for (int64_t x = 0; x < 28; ++x) {
          const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          double& px = images.at(i, y * 28 + x);
          px = std::min(1.0, px + amp * std::exp(-r2 / (2.0 * sigma * sigma)));
        }
    }
  }
  const std::string path = (std::filesystem::path(dir) / "blobs.idx").string();
  write_idx_images(path, images);
  return path;
}

Outcome criterion_mnist_smoke() {
  const auto t0 = clock_type::now();
  const std::string dir = scratch("mnist");
  const std::string idx_path = fabricate_images(dir, 2048);

  RunConfig rc = parse_config_text(
      "experiment = mnist\nouter-steps = 2000\nbatch-size = 128\nseed = 12345\n"
      "eval-every = 500\neval-batch = 1024\ncheckpoint-every = 1000\n",
      {});
  rc.mnist_path = idx_path;
  rc.out_dir = dir + "/run";
  validate_run_config(rc);

  TrainSetup setup;
  setup.cfg = rc.train;
  setup.gen_spec = generator_spec(rc);
  setup.disc_spec = discriminator_spec(rc);
  ImageDataset ds = load_idx_images(rc.mnist_path);
  empirical_moments(ds.images, setup.target_mean, setup.target_cov);
  setup.data = image_source(std::move(ds), rc.train.seed);
  setup.out_dir = rc.out_dir;

  bool aborted = false;
  std::string why;
  ParamSet gen_params;
  try {
    TrainResult res = train(setup);
    gen_params = std::move(res.gen_params);
  } catch (const Error& e) {
    if (e.code() != Errc::non_finite) throw;
    aborted = true;
    why = e.what();
  }

  double overall_mean = 0.0, min_image_var = 0.0, across_var = 0.0;
  if (!aborted) {
    Rng rng(rc.train.seed, Rng::kEval, 999983);
    Tape tape;
    NetOnTape gen = place_on_tape(tape, gen_params);
    const int64_t n = 1024;
    Val z = tape.leaf(sample_noise(n, setup.gen_spec.input_dim, rng));
    Val tv = tape.leaf(Tensor::full({n, 1}, 1.0));
    const Tensor& x = forward(gen, z, tv).tensor();

    min_image_var = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0, s2 = 0.0;
      for (int64_t j = 0; j < 784; ++j) {
        const double v = x.at(i, j);
        s += v;
        s2 += v * v;
      }
      const double mu = s / 784.0;
      overall_mean += mu / static_cast<double>(n);
      min_image_var = std::min(min_image_var, s2 / 784.0 - mu * mu);
    }
    // Mode-collapse canary from the other side: pixel values must vary across
    // images as well as within them.
    double sp = 0.0, sp2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double v = x.at(i, 392);
      sp += v;
      sp2 += v * v;
    }
    across_var = sp2 / n - (sp / n) * (sp / n);
  }

  const double wall = seconds_since(t0);
  Outcome o;
  o.pass = !aborted && overall_mean >= 0.05 && overall_mean <= 0.5 && min_image_var > 0.0 &&
           across_var > 0.0 && wall < 1800.0;
  if (aborted)
    o.detail = "aborted: " + why;
  else
    o.detail = fmt("pixel mean %.3f in [0.05,0.5], min image var %.2e > 0, across-image var "
                   "%.2e > 0, %.0fs < 1800s",
                   overall_mean, min_image_var, across_var, wall);
  return o;
}

// ---- criterion 8: determinism and resume ------------------------------------

Outcome criterion_determinism() {
  auto make_setup = [](const std::string& out, int64_t steps) {
    RunConfig rc = parse_config_text(
        "experiment = syn2\nbatch-size = 64\nouter-steps = " + std::to_string(steps) +
            "\nseed = 777\neval-every = 5\ncheckpoint-every = 15\neval-batch = 512\n"
            "hjb-batch = 64\n",
        {});
    rc.out_dir = out;
    TrainSetup setup;
    setup.cfg = rc.train;
    setup.gen_spec = generator_spec(rc);
    setup.disc_spec = discriminator_spec(rc);
    GaussianTarget target = gaussian_target(rc);
    setup.data = gaussian_source(target, rc.train.seed);
    setup.target_mean = target.mean;
    setup.target_cov = target.covariance;
    setup.out_dir = out;
    return setup;
  };
  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  const std::string a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  TrainResult full_a = train(make_setup(a, 30));
  TrainResult full_b = train(make_setup(b, 30));
  const bool csv_same = slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv") &&
                        !slurp(a + "/metrics.csv").empty();
  const bool params_same = flatten(full_a.gen_params) == flatten(full_b.gen_params) &&
                           flatten(full_a.disc_params) == flatten(full_b.disc_params);

  train(make_setup(c, 15));
  TrainResult resumed = resume(make_setup(c, 30));
  const bool resume_same = flatten(full_a.gen_params) == flatten(resumed.gen_params) &&
                           flatten(full_a.disc_params) == flatten(resumed.disc_params);

  Outcome o;
  o.pass = csv_same && params_same && resume_same;
  o.detail = fmt("rerun CSV bytes %s, rerun params %s, train(15)+resume(30) params %s",
                 csv_same ? "identical" : "DIFFER", params_same ? "identical" : "DIFFER",
                 resume_same ? "identical" : "DIFFER");
  return o;
}

// ---- criterion 9: Adam against an independent scalar recurrence -------------

Outcome criterion_adam_oracle() {
  Rng rng(53, Rng::kTest, 100);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double lr = std::pow(10.0, -5.0 + 4.0 * rng.uniform());
    const double b1 = 0.99 * rng.uniform();
    const double b2 = 0.9 + 0.0999 * rng.uniform();
    const double eps = std::pow(10.0, -10.0 + 6.0 * rng.uniform());
    const int steps = 1 + static_cast<int>(rng.below(6));

    MlpSpec spec{1, {}, 1, false, false};
    ParamSet p;
    p.spec = spec;
    p.weights = {Tensor({1, 1}, {rng.normal()})};
    p.biases = {Tensor({1, 1}, {rng.normal()})};
    AdamState st = AdamState::like(p);

    double th[2] = {p.weights[0].at(0, 0), p.biases[0].at(0, 0)};
    double m[2] = {0, 0}, v[2] = {0, 0};
    for (int step = 1; step <= steps; ++step) {
      ParamSet gset = p;
      const double g0 = rng.normal(), g1 = rng.normal();
      gset.weights[0].at(0, 0) = g0;
      gset.biases[0].at(0, 0) = g1;
      std::tie(p, st) = adam_step(p, gset, st, lr, b1, b2, eps);
      const double gs[2] = {g0, g1};
      for (int i = 0; i < 2; ++i) {
        m[i] = b1 * m[i] + (1 - b1) * gs[i];
        v[i] = b2 * v[i] + (1 - b2) * gs[i] * gs[i];
        const double mh = m[i] / (1 - std::pow(b1, step));
        const double vh = v[i] / (1 - std::pow(b2, step));
        th[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
    worst = std::max(worst, std::fabs(p.weights[0].at(0, 0) - th[0]));
    worst = std::max(worst, std::fabs(p.biases[0].at(0, 0) - th[1]));
  }
  Outcome o;
  o.pass = worst < 1e-12;
  o.detail = fmt("worst deviation %.2e < 1e-12 over 1000 random inputs", worst);
  return o;
}

// ---- criterion 10: Bures metric properties ----------------------------------

Outcome criterion_bures() {
  Rng rng(59, Rng::kTest, 200);
  double worst = 0.0, worst_reduce = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t d = 2 + static_cast<int64_t>(rng.below(4));
    auto rand_mean = [&] {
      Tensor m = Tensor::zeros({d});
      for (auto& x : m.data) x = 2.0 * rng.normal();
      return m;
    };
    auto rand_cov = [&] {
      Tensor a = Tensor::zeros({d, d});
      for (auto& x : a.data) x = rng.normal();
      Tensor c = Tensor::zeros({d, d});
      for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int64_t k = 0; k < d; ++k) acc += a.at(i, k) * a.at(j, k);
          c.at(i, j) = acc;
        }
      for (int64_t i = 0; i < d; ++i) c.at(i, i) += 0.2;
      return c;
    };
    Tensor m1 = rand_mean(), m2 = rand_mean(), m3 = rand_mean();
    Tensor c1 = rand_cov(), c2 = rand_cov(), c3 = rand_cov();

    const double ab = gaussian_w2(m1, c1, m2, c2);
    const double ba = gaussian_w2(m2, c2, m1, c1);
    const double ac = gaussian_w2(m1, c1, m3, c3);
    const double cb = gaussian_w2(m3, c3, m2, c2);
    worst = std::max(worst, std::fabs(ab - ba));            // symmetry
    worst = std::max(worst, -ab);                           // nonnegativity
    worst = std::max(worst, gaussian_w2(m1, c1, m1, c1));   // identity
    worst = std::max(worst, ab - (ac + cb));                // triangle

    double gap = 0.0;
    for (int64_t j = 0; j < d; ++j) gap += (m1.at(j) - m2.at(j)) * (m1.at(j) - m2.at(j));
    worst_reduce = std::max(worst_reduce, std::fabs(gaussian_w2(m1, c1, m2, c1) - std::sqrt(gap)));
  }
  Outcome o;
  o.pass = worst < 1e-9 && worst_reduce < 1e-9;
  o.detail = fmt("metric properties %.2e < 1e-9, equal-cov reduction %.2e < 1e-9 over 200 triples",
                 worst, worst_reduce);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient checks (ops and full loss)", criterion_gradcheck},
      {2, "Legendre conjugacy vs grid oracle", criterion_conjugacy},
      {3, "q=2 loss equals optimal-transport loss", criterion_ot_equivalence},
      {4, "2D gaussian, q=2 (syn2)", criterion_syn2},
      {5, "2D gaussian, q=10 stress (syn1)", criterion_syn1},
      {6, "10D gaussian (syn3)", criterion_syn3},
      {7, "image smoke run (mnist)", criterion_mnist_smoke},
      {8, "determinism and resume", criterion_determinism},
      {9, "Adam scalar oracle", criterion_adam_oracle},
      {10, "Bures metric properties", criterion_bures},
  };

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  const auto t0 = clock_type::now();
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.number)) continue;
    ran += 1;
    const auto c0 = clock_type::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("unexpected error: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d: %-42s %s  (%s) [%.0fs]\n", c.number, c.name,
                o.pass ? "pass" : "FAIL", o.detail.c_str(), seconds_since(c0));
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d criteria passed [%.0fs total]\n", ran - failed, ran,
              seconds_since(t0));
  return failed;
}
