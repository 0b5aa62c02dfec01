// Command-line front end: train, sample, eval, and verify subcommands over
// the header-only library. Every failure exits nonzero after printing a
// single "error:<category>: <message>" line to stderr.

#include <CLI11.hpp>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfg/config.hpp"
#include "mfg/trainer.hpp"

namespace {

using namespace mfg;

// Flag overrides in command-line order; funneled through the same key = value
// machinery as config files so presets pin both the same way.
struct KeyOverrides {
  std::vector<std::pair<std::string, std::string>> items;
};

const char* key_help(const std::string& key) {
  if (key == "experiment") return "syn1 | syn2 | syn3 | mnist | custom";
  if (key == "dim") return "data dimension (pinned by named experiments)";
  if (key == "noise-dim") return "latent dimension; 0 matches dim";
  if (key == "gen-hidden") return "generator hidden widths, comma separated";
  if (key == "disc-hidden") return "discriminator hidden widths, comma separated";
  if (key == "target-mean") return "gaussian target mean, comma separated";
  if (key == "outer-steps") return "generator update count";
  if (key == "inner-steps") return "discriminator ascents per outer step";
  if (key == "batch-size") return "samples per batch";
  if (key == "lr-gen") return "generator Adam learning rate";
  if (key == "lr-disc") return "discriminator Adam learning rate";
  if (key == "adam-beta1") return "Adam first-moment decay";
  if (key == "adam-beta2") return "Adam second-moment decay";
  if (key == "adam-eps") return "Adam denominator floor";
  if (key == "q") return "Hamiltonian exponent (> 1)";
  if (key == "seed") return "run seed; MFGAN_SEED is the fallback";
  if (key == "eval-every") return "steps between metric rows";
  if (key == "checkpoint-every") return "steps between checkpoints";
  if (key == "eval-batch") return "fresh samples per metric row";
  if (key == "hjb-batch") return "samples for the HJB residual";
  if (key == "mnist-path") return "IDX image file for the mnist experiment";
  if (key == "out") return "output directory";
  return "";
}

void add_config_flags(CLI::App* cmd, KeyOverrides& ov) {
  for (const std::string& key : config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&ov, key](const std::string& v) { ov.items.emplace_back(key, v); },
        key_help(key));
  }
}

RunConfig assemble_config(const std::string& config_path, const KeyOverrides& ov) {
  RunConfig base;
  if (const char* env = std::getenv("MFGAN_SEED"))
    if (*env) set_config_value(base, "seed", env);

  std::string text;
  if (!config_path.empty()) {
    // Parsed alone first so file problems carry the file's name.
    load_config_file(config_path, base);
    std::ifstream in(config_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const auto& [key, value] : ov.items) text += "\n" + key + " = " + value;
  RunConfig rc = parse_config_text(text, base);
  validate_run_config(rc);
  return rc;
}

void print_metrics_row(const MetricsRecord& m) {
  std::printf("step %6" PRId64 "  total % .6f  mean_err %.4f  cov_err %.4f  w2 %.4f  hjb %.4f\n",
              m.step, m.total, m.mean_err, m.cov_err, m.w2, m.hjb_residual);
  std::fflush(stdout);
}

TrainSetup build_setup(const RunConfig& rc) {
  TrainSetup setup;
  setup.cfg = rc.train;
  setup.gen_spec = generator_spec(rc);
  setup.disc_spec = discriminator_spec(rc);
  setup.out_dir = rc.out_dir;
  setup.on_metrics = print_metrics_row;
  if (rc.experiment == "mnist") {
    if (rc.mnist_path.empty())
      raise(Errc::config, "experiment mnist needs a dataset; pass --mnist-path");
    ImageDataset ds = load_idx_images(rc.mnist_path);
    empirical_moments(ds.images, setup.target_mean, setup.target_cov);
    setup.data = image_source(std::move(ds), rc.train.seed);
  } else {
    GaussianTarget target = gaussian_target(rc);
    setup.data = gaussian_source(target, rc.train.seed);
    setup.target_mean = target.mean;
    setup.target_cov = target.covariance;
  }
  return setup;
}

int cmd_train(const std::string& config_path, const KeyOverrides& ov, bool resume_run) {
  RunConfig rc = assemble_config(config_path, ov);
  TrainSetup setup = build_setup(rc);

  std::filesystem::create_directories(rc.out_dir);
  write_config_file(rc, (std::filesystem::path(rc.out_dir) / "effective_config").string());

  TrainResult res = resume_run ? resume(setup) : train(setup);

  const int64_t n_export = std::min<int64_t>(rc.train.eval_batch, 10000);
  Rng r0(rc.train.seed, Rng::kEval, static_cast<uint64_t>(rc.train.outer_steps) + 1);
  Rng r1(rc.train.seed, Rng::kEval, static_cast<uint64_t>(rc.train.outer_steps) + 2);
  const std::string t0_path = (std::filesystem::path(rc.out_dir) / "samples_t0.csv").string();
  const std::string t1_path = (std::filesystem::path(rc.out_dir) / "samples_t1.csv").string();
  export_samples(setup.gen_spec, res.gen_params, 0.0, n_export, t0_path, r0);
  export_samples(setup.gen_spec, res.gen_params, 1.0, n_export, t1_path, r1);

  std::printf("trained to step %" PRId64 "; outputs in %s\n", res.final_step, rc.out_dir.c_str());
  if (!res.metrics.empty()) {
    const MetricsRecord& m = res.metrics.back();
    std::printf("final  mean_err %.4f  cov_err %.4f  w2 %.4f  hjb %.4f\n", m.mean_err, m.cov_err,
                m.w2, m.hjb_residual);
  }
  return 0;
}

int cmd_sample(const std::string& checkpoint, double t, int64_t count, const std::string& out,
               uint64_t seed) {
  ParamSet params = load_checkpoint(checkpoint);
  Rng rng(seed, Rng::kEval, 0);
  export_samples(params.spec, params, t, count, out, rng);
  std::printf("wrote %" PRId64 " samples at t=%g to %s\n", count, t, out.c_str());
  return 0;
}

int cmd_eval(const std::string& gen_path, const std::string& disc_path,
             const std::string& config_path, const KeyOverrides& ov) {
  RunConfig rc = assemble_config(config_path, ov);
  ParamSet gen_params = load_checkpoint(gen_path);

  Tensor target_mean, target_cov;
  if (rc.experiment == "mnist") {
    if (rc.mnist_path.empty())
      raise(Errc::config, "experiment mnist needs a dataset; pass --mnist-path");
    ImageDataset ds = load_idx_images(rc.mnist_path);
    empirical_moments(ds.images, target_mean, target_cov);
  } else {
    GaussianTarget target = gaussian_target(rc);
    target_mean = target.mean;
    target_cov = target.covariance;
  }
  if (gen_params.spec.output_dim != target_mean.numel())
    raise(Errc::shape_mismatch, "eval: checkpoint emits dimension " +
                                    std::to_string(gen_params.spec.output_dim) +
                                    " but the target has dimension " +
                                    std::to_string(target_mean.numel()));

  Rng rng(rc.train.seed, Rng::kEval, 0);
  Tape tape;
  NetOnTape gen = place_on_tape(tape, gen_params);
  Val z = tape.leaf(sample_noise(rc.train.eval_batch, gen_params.spec.input_dim, rng));
  Val tv = tape.leaf(Tensor::full({rc.train.eval_batch, 1}, 1.0));
  const Tensor& x = forward(gen, z, tv).tensor();
  Tensor mean, cov;
  empirical_moments(x, mean, cov);

  double mean_err = 0.0;
  for (int64_t j = 0; j < mean.numel(); ++j)
    mean_err = std::max(mean_err, std::fabs(mean.at(j) - target_mean.at(j)));
  double fro = 0.0;
  for (int64_t a = 0; a < cov.shape[0]; ++a)
    for (int64_t b = 0; b < cov.shape[1]; ++b) {
      const double diff = cov.at(a, b) - target_cov.at(a, b);
      fro += diff * diff;
    }
  const double w2 = gaussian_w2(mean, cov, target_mean, target_cov);

  std::printf("mean_err %.6f  cov_err %.6f  w2 %.6f", mean_err, std::sqrt(fro), w2);
  if (!disc_path.empty()) {
    ParamSet disc_params = load_checkpoint(disc_path);
    Rng rh(rc.train.seed, Rng::kEval, 1);
    const double hjb = hjb_residual_diagnostic(gen_params, disc_params,
                                               HamiltonianSpec::make(rc.train.q),
                                               rc.train.hjb_batch, rh);
    std::printf("  hjb %.6f", hjb);
  }
  std::printf("\n");
  return 0;
}

// ---- verify: fast self-checks with one table row per suite ------------------

struct SuiteResult {
  std::string name;
  int checks = 0;
  double worst = 0.0;
  bool pass = true;
};

SuiteResult verify_gradcheck() {
  SuiteResult r{"gradcheck"};
  MlpSpec spec{3, {8}, 1, true, false};
  Rng init(31, Rng::kTest, 0);
  ParamSet params = init_params(spec, init);

  auto record = [&](double err, double tol) {
    r.worst = std::max(r.worst, err / tol);
    r.checks += 1;
  };

  Rng rng(31, Rng::kTest, 1);
  for (int k = 0; k < 8; ++k) {
    Tensor x = sample_noise(4, 3, rng);
    auto f = [&params](Tape& tape, Val v) {
      NetOnTape net = place_on_tape(tape, params);
      Val t = tape.leaf(Tensor::full({v.tensor().shape[0], 1}, 0.37));
      return sum(forward(net, v, t));
    };
    record(finite_diff_check(f, x, 1e-5), 1e-5);
  }
  const HamiltonianSpec h3 = HamiltonianSpec::make(3.0);
  for (int k = 0; k < 8; ++k) {
    Tensor g = sample_noise(4, 3, rng);
    auto f = [&h3](Tape& tape, Val v) { return sum(hamiltonian(v, h3)); };
    record(finite_diff_check(f, g, 1e-5), 1e-5);
  }
  // Second order: differentiate a gradient that was itself produced by the tape.
  for (int k = 0; k < 8; ++k) {
    Tensor x = sample_noise(4, 3, rng);
    auto f = [&params](Tape& tape, Val v) {
      NetOnTape net = place_on_tape(tape, params);
      Val t = tape.leaf(Tensor::full({v.tensor().shape[0], 1}, 0.37));
      Val y = sum(forward(net, v, t));
      Val g = grad(y, {v}, true)[0];
      return sumsq(g);
    };
    record(finite_diff_check(f, x, 1e-5), 1e-4);
  }
  r.pass = r.worst < 1.0;
  return r;
}

// Covector radii keep the true maximizer (norm |g|^(q-1)) inside the oracle
// grid; the grid is dense, so each exponent gets its own extent and step.
struct LegendreGrid {
  double q, radius_lo, radius_hi, width, step;
};

SuiteResult verify_legendre(bool corrupt_exponent) {
  SuiteResult r{"legendre"};
  const LegendreGrid grids[] = {
      {1.5, 0.5, 2.2, 2.0, 2e-3},
      {2.0, 0.5, 2.2, 3.0, 2e-3},
      {3.0, 0.5, 2.0, 4.5, 5e-3},
      {10.0, 0.8, 1.2, 6.0, 5e-3},
  };
  Rng rng(47, Rng::kTest, 9);
  for (const LegendreGrid& g : grids) {
    HamiltonianSpec spec = HamiltonianSpec::make(g.q);
    // The negative control evaluates the closed form at a wrong exponent; the
    // suite must flag the mismatch against the untouched oracle.
    HamiltonianSpec closed_spec = HamiltonianSpec::make(corrupt_exponent ? g.q * 1.07 : g.q);
    for (int k = 0; k < 12; ++k) {
      const double radius = g.radius_lo + (g.radius_hi - g.radius_lo) * rng.uniform();
      const double angle = 2.0 * Rng::pi() * rng.uniform();
      Tensor covector = Tensor::row({radius * std::cos(angle), radius * std::sin(angle)});
      const double closed = hamiltonian_value(covector, closed_spec);
      const double oracle = legendre_oracle(covector, spec, g.width, g.step);
      r.worst = std::max(r.worst, std::fabs(closed - oracle) / std::max(1e-30, std::fabs(oracle)));
      r.checks += 1;
    }
  }
  r.pass = r.worst < 1e-2;
  return r;
}

SuiteResult verify_adam() {
  SuiteResult r{"adam"};
  Rng rng(53, Rng::kTest, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const double lr = std::pow(10.0, -5.0 + 4.0 * rng.uniform());
    const double b1 = 0.99 * rng.uniform();
    const double b2 = 0.9 + 0.0999 * rng.uniform();
    const double eps = std::pow(10.0, -10.0 + 6.0 * rng.uniform());

    MlpSpec spec{1, {}, 1, false, false};
    ParamSet p;
    p.spec = spec;
    p.weights = {Tensor({1, 1}, {rng.normal()})};
    p.biases = {Tensor({1, 1}, {rng.normal()})};
    AdamState st = AdamState::like(p);

    // Independent scalar recurrence, one value per coordinate.
    double th[2] = {p.weights[0].at(0, 0), p.biases[0].at(0, 0)};
    double m[2] = {0, 0}, v[2] = {0, 0};
    for (int step = 1; step <= 4; ++step) {
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
    r.worst = std::max(r.worst, std::fabs(p.weights[0].at(0, 0) - th[0]));
    r.worst = std::max(r.worst, std::fabs(p.biases[0].at(0, 0) - th[1]));
    r.checks += 2;
  }
  r.pass = r.worst < 1e-12;
  return r;
}

SuiteResult verify_w2() {
  SuiteResult r{"w2"};
  Rng rng(59, Rng::kTest, 6);
  const int64_t d = 4;
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
    for (int64_t i = 0; i < d; ++i) c.at(i, i) += 0.3;
    return c;
  };

  for (int k = 0; k < 15; ++k) {
    Tensor m1 = rand_mean(), m2 = rand_mean(), m3 = rand_mean();
    Tensor c1 = rand_cov(), c2 = rand_cov(), c3 = rand_cov();
    const double ab = gaussian_w2(m1, c1, m2, c2);
    const double ba = gaussian_w2(m2, c2, m1, c1);
    const double self_dist = gaussian_w2(m1, c1, m1, c1);
    const double ac = gaussian_w2(m1, c1, m3, c3);
    const double cb = gaussian_w2(m3, c3, m2, c2);
    r.worst = std::max(r.worst, std::fabs(ab - ba));
    r.worst = std::max(r.worst, self_dist);
    r.worst = std::max(r.worst, ab - (ac + cb));  // triangle violation, if any
    // Equal covariances reduce the distance to the mean gap.
    double gap = 0.0;
    for (int64_t j = 0; j < d; ++j) gap += (m1.at(j) - m2.at(j)) * (m1.at(j) - m2.at(j));
    r.worst = std::max(r.worst, std::fabs(gaussian_w2(m1, c1, m2, c1) - std::sqrt(gap)));
    r.checks += 4;
  }
  r.pass = r.worst < 1e-9;
  return r;
}

int cmd_verify(bool corrupt_exponent) {
  std::vector<SuiteResult> suites;
  suites.push_back(verify_gradcheck());
  suites.push_back(verify_legendre(corrupt_exponent));
  suites.push_back(verify_adam());
  suites.push_back(verify_w2());

  std::printf("%-10s %7s %12s   %s\n", "suite", "checks", "worst", "status");
  int failed = 0;
  for (const SuiteResult& s : suites) {
    std::printf("%-10s %7d %12.3e   %s\n", s.name.c_str(), s.checks, s.worst,
                s.pass ? "pass" : "FAIL");
    failed += s.pass ? 0 : 1;
  }
  if (failed) {
    std::fprintf(stderr, "error:verify: %d suite(s) failed\n", failed);
    return 1;
  }
  std::printf("verify: all suites passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field-game GAN: train, sample, eval, verify"};
  app.require_subcommand(1);

  // train
  auto* t_cmd = app.add_subcommand("train", "run alternating saddle training");
  std::string t_config;
  KeyOverrides t_ov;
  bool t_resume = false;
  t_cmd->add_option("--config", t_config, "key = value config file");
  t_cmd->add_flag("--resume", t_resume, "continue from the checkpoint bundle in --out");
  add_config_flags(t_cmd, t_ov);

  // sample
  auto* s_cmd = app.add_subcommand("sample", "draw generator samples at a time point");
  std::string s_ckpt, s_out = "samples.csv";
  double s_t = 1.0;
  int64_t s_count = 1000;
  uint64_t s_seed = 1;
  s_cmd->add_option("--checkpoint", s_ckpt, "generator checkpoint")->required();
  s_cmd->add_option("--t", s_t, "time in [0,1]");
  s_cmd->add_option("--count", s_count, "number of samples");
  s_cmd->add_option("--out", s_out, "output CSV path");
  s_cmd->add_option("--seed", s_seed, "sampling seed; MFGAN_SEED is the fallback");
  bool s_seed_set = false;
  s_cmd->callback([&] { s_seed_set = s_cmd->count("--seed") > 0; });

  // eval
  auto* e_cmd = app.add_subcommand("eval", "measure a checkpoint against its target");
  std::string e_gen, e_disc, e_config;
  KeyOverrides e_ov;
  e_cmd->add_option("--checkpoint", e_gen, "generator checkpoint")->required();
  e_cmd->add_option("--disc-checkpoint", e_disc, "discriminator checkpoint (adds hjb)");
  e_cmd->add_option("--config", e_config, "key = value config file");
  add_config_flags(e_cmd, e_ov);

  // verify
  auto* v_cmd = app.add_subcommand("verify", "run fast self-checks");
  bool v_corrupt = false;
  v_cmd->add_flag("--corrupt-hamiltonian-exponent", v_corrupt,
                  "negative control: break conjugacy and expect the legendre suite to fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error:usage: %s\n", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand(t_cmd)) return cmd_train(t_config, t_ov, t_resume);
    if (app.got_subcommand(s_cmd)) {
      if (!s_seed_set)
        if (const char* env = std::getenv("MFGAN_SEED"))
          if (*env) s_seed = mfg::detail::parse_uint("seed", env);
      return cmd_sample(s_ckpt, s_t, s_count, s_out, s_seed);
    }
    if (app.got_subcommand(e_cmd)) return cmd_eval(e_gen, e_disc, e_config, e_ov);
    if (app.got_subcommand(v_cmd)) return cmd_verify(v_corrupt);
  } catch (const mfg::Error& e) {
    std::fprintf(stderr, "error:%s: %s\n", e.category(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error:internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
