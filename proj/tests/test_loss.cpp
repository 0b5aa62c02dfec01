#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mfg/loss.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {

// Single linear layer Φ(x,t) = (x,t)·w + b, exact by construction.
ParamSet linear_disc(int64_t d, std::vector<double> w, double b) {
  MlpSpec s;
  s.input_dim = d;
  s.output_dim = 1;
  s.time_input = true;
  ParamSet p;
  p.spec = s;
  p.weights = {Tensor::matrix(d + 1, 1, std::move(w))};
  p.biases = {Tensor::matrix(1, 1, {b})};
  return p;
}

// Single linear generator; zero weights give ρ ≡ 0.
ParamSet zero_gen(int64_t dz, int64_t d) {
  MlpSpec s;
  s.input_dim = dz;
  s.output_dim = d;
  s.time_input = true;
  ParamSet p;
  p.spec = s;
  p.weights = {Tensor::zeros({dz + 1, d})};
  p.biases = {Tensor::zeros({1, d})};
  return p;
}

ParamSet random_net(int64_t in, std::vector<int64_t> hidden, int64_t out, uint64_t step) {
  MlpSpec s;
  s.input_dim = in;
  s.hidden = std::move(hidden);
  s.output_dim = out;
  s.time_input = true;
  Rng rng(321, Rng::kInit, step);
  return init_params(s, rng);
}

LossInputs random_inputs(int64_t n, int64_t m, int64_t dz, int64_t d, uint64_t step, double mean = 0.0) {
  Rng zr(55, Rng::kNoiseInterior, step);
  Rng tr(55, Rng::kTime, step);
  Rng xr(55, Rng::kData, step);
  Rng z0(55, Rng::kNoiseInitial, step);
  LossInputs in;
  in.z_interior = Tensor::zeros({n, dz});
  for (double& v : in.z_interior.data) v = zr.normal();
  in.t_interior = Tensor::zeros({n, 1});
  for (double& v : in.t_interior.data) v = tr.uniform();
  in.x_data = Tensor::zeros({m, d});
  for (double& v : in.x_data.data) v = mean + xr.normal();
  in.z_initial = Tensor::zeros({m, dz});
  for (double& v : in.z_initial.data) v = z0.normal();
  return in;
}

}  // namespace

TEST_CASE("constant potential cancels") {
  const double c = 3.75;
  ParamSet disc = linear_disc(2, {0, 0, 0}, c);
  ParamSet gen = random_net(2, {4}, 2, 0);
  LossInputs in = random_inputs(64, 64, 2, 2, 0);

  Tape tape;
  LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
  CHECK(lg.breakdown.terminal_term == c);
  CHECK(lg.breakdown.initial_term == c);
  CHECK(std::abs(lg.breakdown.interior_term) <= 1e-9);
  CHECK(std::abs(lg.breakdown.total) <= 1e-9);
}

TEST_CASE("time-linear potential telescopes") {
  const double a = 2.5;
  ParamSet disc = linear_disc(2, {0, 0, a}, 0.0);
  ParamSet gen = random_net(2, {4}, 2, 1);
  LossInputs in = random_inputs(50, 70, 2, 2, 1);

  Tape tape;
  LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
  CHECK(lg.breakdown.interior_term == Catch::Approx(-a).margin(1e-9));
  CHECK(lg.breakdown.terminal_term == Catch::Approx(a).margin(1e-12));
  CHECK(lg.breakdown.initial_term == 0.0);
  CHECK(std::abs(lg.breakdown.total) <= 1e-9);
}

TEST_CASE("linear potential against an offset target") {
  // Φ = x₀, ρ ≡ 0, data ~ N((5,5), I): interior = −½(1+ε) exactly,
  // initial = 0, terminal = sample mean of x₀, so total ≈ 4.5 within
  // Monte-Carlo error (SE = 1/√m = 0.01 at m = 10⁴).
  const int64_t n = 10000, m = 10000;
  ParamSet disc = linear_disc(2, {1, 0, 0}, 0.0);
  ParamSet gen = zero_gen(2, 2);
  LossInputs in = random_inputs(n, m, 2, 2, 2, /*mean=*/5.0);

  Tape tape;
  LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
  CHECK(lg.breakdown.interior_term == Catch::Approx(-0.5).margin(1e-9));
  CHECK(lg.breakdown.initial_term == 0.0);
  CHECK(lg.breakdown.total == Catch::Approx(4.5).margin(0.03));
}

TEST_CASE("general form with the built-in callback is the same computation") {
  ParamSet gen = random_net(2, {6}, 2, 2);
  ParamSet disc = random_net(2, {6}, 1, 3);
  LossInputs in = random_inputs(32, 32, 2, 2, 3);
  HamiltonianSpec spec = HamiltonianSpec::make(3.0);

  Tape ta;
  LossGraph a = mfg_gan_loss(ta, gen, disc, in, spec);
  Tape tb;
  LossGraph b = general_hamiltonian_loss(tb, gen, disc, in, hamiltonian_callback(spec));
  CHECK(a.breakdown.total == b.breakdown.total);
  CHECK(a.breakdown.interior_term == b.breakdown.interior_term);
}

TEST_CASE("zero callback leaves only the transport terms") {
  ParamSet gen = random_net(2, {6}, 2, 4);
  ParamSet disc = random_net(2, {6}, 1, 5);
  LossInputs in = random_inputs(40, 24, 2, 2, 4);

  Tape tape;
  auto zero_cb = [](Val, Val, Val g) { return scalar_mul(row_sum(mul(g, g)), 0.0); };
  LossGraph lg = general_hamiltonian_loss(tape, gen, disc, in, zero_cb);

  // interior reduces to −E[∂ₜΦ].
  const Tensor& gt = lg.grad_t.tensor();
  double s = 0;
  for (double v : gt.data) s += v;
  CHECK(lg.breakdown.interior_term == -(s / static_cast<double>(gt.numel())));
}

TEST_CASE("q=2 equals the optimal-transport form bit for bit") {
  ParamSet gen = random_net(2, {8, 8}, 2, 6);
  ParamSet disc = random_net(2, {8, 8}, 1, 7);
  HamiltonianSpec q2 = HamiltonianSpec::make(2.0);

  for (uint64_t step = 0; step < 10; ++step) {
    LossInputs in = random_inputs(16, 16, 2, 2, 100 + step);
    Tape ta;
    LossGraph a = mfg_gan_loss(ta, gen, disc, in, q2);
    Tape tb;
    LossGraph b = general_hamiltonian_loss(tb, gen, disc, in, ot_gan_callback(q2.epsilon));
    CHECK(a.breakdown.total == b.breakdown.total);
    CHECK(a.breakdown.interior_term == b.breakdown.interior_term);
    CHECK(a.breakdown.terminal_term == b.breakdown.terminal_term);
    CHECK(a.breakdown.initial_term == b.breakdown.initial_term);
  }
}

TEST_CASE("breakdown identity holds exactly") {
  ParamSet gen = random_net(3, {5}, 2, 8);
  ParamSet disc = random_net(2, {5}, 1, 9);
  for (uint64_t step = 0; step < 5; ++step) {
    LossInputs in = random_inputs(20, 30, 3, 2, 200 + step);
    Tape tape;
    LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
    CHECK(lg.breakdown.total ==
          (lg.breakdown.interior_term + lg.breakdown.terminal_term) - lg.breakdown.initial_term);
    CHECK(lg.total.value() == lg.breakdown.total);
  }
}

TEST_CASE("exposed interior handles have the right shapes") {
  ParamSet gen = random_net(2, {4}, 2, 10);
  ParamSet disc = random_net(2, {4}, 1, 11);
  LossInputs in = random_inputs(7, 5, 2, 2, 12);
  Tape tape;
  LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
  CHECK(lg.rho_interior.shape() == std::vector<int64_t>{7, 2});
  CHECK(lg.grad_x.shape() == std::vector<int64_t>{7, 2});
  CHECK(lg.grad_t.shape() == std::vector<int64_t>{7, 1});
}

TEST_CASE("per-row input gradients match single-sample evaluation") {
  // The batched ∇ₓΦ rows must equal gradients computed one sample at a time.
  ParamSet gen = random_net(2, {5}, 2, 13);
  ParamSet disc = random_net(2, {5}, 1, 14);
  LossInputs in = random_inputs(6, 4, 2, 2, 13);
  Tape tape;
  LossGraph lg = mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
  const Tensor rho = lg.rho_interior.tensor();

  for (int64_t i = 0; i < 6; ++i) {
    Tape t2;
    NetOnTape d2 = place_on_tape(t2, disc);
    Val xi = t2.leaf(Tensor::matrix(1, 2, {rho.at(i, 0), rho.at(i, 1)}));
    Val ti = t2.leaf(Tensor::matrix(1, 1, {in.t_interior.at(i, 0)}));
    Val phi = forward(d2, xi, ti);
    auto gs = grad(sum(phi), {xi, ti});
    CHECK(gs[0].tensor().at(0, 0) == Catch::Approx(lg.grad_x.tensor().at(i, 0)).epsilon(1e-12));
    CHECK(gs[0].tensor().at(0, 1) == Catch::Approx(lg.grad_x.tensor().at(i, 1)).epsilon(1e-12));
    CHECK(gs[1].tensor().at(0, 0) == Catch::Approx(lg.grad_t.tensor().at(i, 0)).epsilon(1e-12));
  }
}

TEST_CASE("total is differentiable in both parameter sets") {
  for (double q : {2.0, 10.0}) {
    HamiltonianSpec spec = HamiltonianSpec::make(q);
    ParamSet gen = random_net(2, {2}, 2, 20);
    ParamSet disc = random_net(2, {2}, 1, 21);
    LossInputs in = random_inputs(4, 4, 2, 2, 20);

    auto loss_at = [&](const ParamSet& g, const ParamSet& d) {
      Tape tape;
      return mfg_gan_loss(tape, g, d, in, spec).breakdown.total;
    };

    Tape tape;
    LossGraph lg = mfg_gan_loss(tape, gen, disc, in, spec);
    std::vector<Val> wrt = lg.gen.all();
    for (Val v : lg.disc.all()) wrt.push_back(v);
    std::vector<Val> gs = grad(lg.total, wrt);

    ParamSet ga = grads_to_params(gen.spec, std::vector<Val>(gs.begin(), gs.begin() + 4));
    ParamSet da = grads_to_params(disc.spec, std::vector<Val>(gs.begin() + 4, gs.end()));

    const double h = 1e-5;
    auto fd_against = [&](const ParamSet& base, const ParamSet& analytic, bool is_gen) {
      std::vector<double> flat = flatten(base);
      std::vector<double> aflat = flatten(analytic);
      double worst = 0;
      for (size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> hi = flat, lo = flat;
        hi[i] += h;
        lo[i] -= h;
        ParamSet ph = unflatten(base.spec, hi);
        ParamSet pl = unflatten(base.spec, lo);
        double numeric = is_gen ? (loss_at(ph, disc) - loss_at(pl, disc)) / (2 * h)
                                : (loss_at(gen, ph) - loss_at(gen, pl)) / (2 * h);
        worst = std::max(worst, std::abs(aflat[i] - numeric) / std::max(1.0, std::abs(aflat[i])));
      }
      return worst;
    };
    INFO("q = " << q);
    CHECK(fd_against(gen, ga, true) < 1e-4);
    CHECK(fd_against(disc, da, false) < 1e-4);
  }
}

TEST_CASE("invalid inputs are rejected") {
  ParamSet gen = random_net(2, {4}, 2, 30);
  ParamSet disc = random_net(2, {4}, 1, 31);
  HamiltonianSpec spec = HamiltonianSpec::make(2.0);

  auto code_of = [&](const LossInputs& in, const ParamSet& g, const ParamSet& d) {
    Tape tape;
    try {
      mfg_gan_loss(tape, g, d, in, spec);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::internal;
  };

  LossInputs good = random_inputs(8, 8, 2, 2, 30);

  LossInputs bad_t = good;
  bad_t.t_interior.at(3, 0) = 1.5;
  CHECK(code_of(bad_t, gen, disc) == Errc::precondition);
  bad_t.t_interior.at(3, 0) = -0.1;
  CHECK(code_of(bad_t, gen, disc) == Errc::precondition);

  LossInputs bad_z = good;
  bad_z.z_interior = Tensor::zeros({8, 3});
  CHECK(code_of(bad_z, gen, disc) == Errc::shape_mismatch);

  LossInputs bad_rows = good;
  bad_rows.t_interior = Tensor::zeros({5, 1});
  CHECK(code_of(bad_rows, gen, disc) == Errc::shape_mismatch);

  ParamSet wide_disc = random_net(2, {4}, 2, 32);  // output_dim 2
  CHECK(code_of(good, gen, wide_disc) == Errc::precondition);

  ParamSet mismatched_gen = random_net(2, {4}, 3, 33);  // feeds d=3 into d=2 disc
  CHECK(code_of(good, mismatched_gen, disc) == Errc::shape_mismatch);
}

TEST_CASE("non-finite evaluations carry the breakdown") {
  ParamSet gen = random_net(2, {4}, 2, 40);
  ParamSet disc = random_net(2, {4}, 1, 41);
  gen.weights[0].at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  LossInputs in = random_inputs(8, 8, 2, 2, 40);
  Tape tape;
  try {
    mfg_gan_loss(tape, gen, disc, in, HamiltonianSpec::make(2.0));
    FAIL("expected non-finite error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_finite);
    std::string m = e.what();
    CHECK(m.find("interior=") != std::string::npos);
    CHECK(m.find("terminal=") != std::string::npos);
    CHECK(m.find("initial=") != std::string::npos);
  }
}

TEST_CASE("callback with a wrong output shape is rejected") {
  ParamSet gen = random_net(2, {4}, 2, 50);
  ParamSet disc = random_net(2, {4}, 1, 51);
  LossInputs in = random_inputs(8, 8, 2, 2, 50);
  Tape tape;
  auto bad_cb = [](Val, Val, Val g) { return mean(row_sum(mul(g, g))); };
  try {
    general_hamiltonian_loss(tape, gen, disc, in, bad_cb);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}
