#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "mfg/error.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/network.hpp"
#include "mfg/tape.hpp"
#include "mfg/tensor.hpp"

namespace mfg {

// The three expectations of the saddle objective, as evaluated.
struct LossBreakdown {
  double interior_term = 0.0;  // −E[∂ₜΦ + H(∇ₓΦ)] along generated paths
  double terminal_term = 0.0;  // E_{x∼data}[Φ(x,1)]
  double initial_term = 0.0;   // E_z[Φ(ρ(z,0),0)]
  double total = 0.0;          // interior + terminal − initial, exactly as computed
};

// Monte-Carlo batches feeding one loss evaluation. Interior and initial z
// draws are independent copies; time entries must lie in [0,1].
struct LossInputs {
  Tensor z_interior;  // (n, dz)
  Tensor t_interior;  // (n, 1)
  Tensor x_data;      // (m, d)
  Tensor z_initial;   // (m, dz)
};

// Everything a training step needs from one loss build: the scalar node to
// differentiate, the evaluated breakdown, and the parameter leaves of both
// networks on the same tape.
struct LossGraph {
  Val total;
  LossBreakdown breakdown;
  NetOnTape gen;
  NetOnTape disc;
  Val rho_interior;   // generator output at (z_interior, t_interior)
  Val grad_x;         // per-row ∇ₓΦ at the interior points
  Val grad_t;         // per-row ∂ₜΦ at the interior points
};

// A Hamiltonian plugged into the loss: maps per-row (x, Φ(x,t), ∇ₓΦ(x,t))
// nodes to an (n,1) node of per-row values.
using HamiltonianCallback = std::function<Val(Val x, Val phi, Val grad_phi)>;

inline HamiltonianCallback hamiltonian_callback(const HamiltonianSpec& spec) {
  return [spec](Val, Val, Val grad_phi) { return hamiltonian(grad_phi, spec); };
}

// The optimal-transport potential ½(‖∇Φ‖² + ε). Shares the ε stabilizer with
// hamiltonian(), which is what makes the q=2 equivalence exact rather than
// approximate.
inline HamiltonianCallback ot_gan_callback(double epsilon = 1e-12) {
  return [epsilon](Val, Val, Val grad_phi) {
    return scalar_mul(scalar_add(row_sum(mul(grad_phi, grad_phi)), epsilon), 0.5);
  };
}

namespace detail {

inline void check_loss_inputs(const ParamSet& gen, const ParamSet& disc, const LossInputs& in) {
  if (!gen.spec.time_input || !disc.spec.time_input)
    raise(Errc::precondition, "loss: generator and discriminator must both take a time column");
  if (disc.spec.output_dim != 1)
    raise(Errc::precondition, "loss: discriminator must be scalar-valued per sample");
  if (gen.spec.output_dim != disc.spec.input_dim)
    raise(Errc::shape_mismatch, "loss: generator output dim " + std::to_string(gen.spec.output_dim) +
                                    " does not feed discriminator input dim " +
                                    std::to_string(disc.spec.input_dim));
  auto expect = [](const Tensor& t, int64_t cols, const char* name) {
    if (t.rank() != 2 || t.shape[0] < 1 || t.shape[1] != cols)
      raise(Errc::shape_mismatch, std::string("loss: ") + name + " must be a nonempty (n," +
                                      std::to_string(cols) + ") tensor, got " + t.shape_str());
  };
  expect(in.z_interior, gen.spec.input_dim, "z_interior");
  expect(in.t_interior, 1, "t_interior");
  expect(in.x_data, disc.spec.input_dim, "x_data");
  expect(in.z_initial, gen.spec.input_dim, "z_initial");
  if (in.z_interior.shape[0] != in.t_interior.shape[0])
    raise(Errc::shape_mismatch, "loss: z_interior and t_interior row counts differ");
  for (double t : in.t_interior.data)
    if (!(t >= 0.0 && t <= 1.0))
      raise(Errc::precondition, "loss: interior time " + std::to_string(t) + " outside [0,1]");
}

}  // namespace detail

// Builds the saddle objective on one tape:
//   total = −E[∂ₜΦ(ρ(z,t),t) + H(ρ(z,t), Φ, ∇ₓΦ)] + E[Φ(x,1)] − E[Φ(ρ(z,0),0)]
// ∂ₜΦ and ∇ₓΦ are input-gradients of the discriminator taken at the generated
// points with the graph kept differentiable, so the total can be
// differentiated in both parameter sets afterwards.
inline LossGraph general_hamiltonian_loss(Tape& tape, const ParamSet& gen, const ParamSet& disc,
                                          const LossInputs& in, const HamiltonianCallback& h_callback) {
  detail::check_loss_inputs(gen, disc, in);
  const int64_t n = in.z_interior.shape[0];
  const int64_t m = in.x_data.shape[0];

  LossGraph lg;
  lg.gen = place_on_tape(tape, gen);
  lg.disc = place_on_tape(tape, disc);

  // Interior term along generated paths. The discriminator gets its own time
  // leaf (same values as the generator's), so grad on that leaf is the
  // explicit ∂ₜ slot of Φ rather than a total derivative through ρ.
  Val z_int = tape.leaf(in.z_interior);
  Val t_gen = tape.leaf(in.t_interior);
  Val t_disc = tape.leaf(in.t_interior);
  Val rho = forward(lg.gen, z_int, t_gen);
  Val phi_int = forward(lg.disc, rho, t_disc);
  Val phi_sum = sum(phi_int);
  std::vector<Val> gs = grad(phi_sum, {rho, t_disc}, /*create_graph=*/true);
  Val grad_x = gs[0];
  Val grad_t = gs[1];

  Val h_rows = h_callback(rho, phi_int, grad_x);
  const Tensor& ht = h_rows.tensor();
  if (ht.rank() != 2 || ht.shape[0] != n || ht.shape[1] != 1)
    raise(Errc::shape_mismatch,
          "loss: Hamiltonian callback must return (n,1) rows, got " + ht.shape_str());
  Val interior = scalar_mul(mean(add(grad_t, h_rows)), -1.0);

  // Terminal term at t = 1 on data samples.
  Val x_data = tape.leaf(in.x_data);
  Val ones = tape.leaf(Tensor::full({m, 1}, 1.0));
  Val terminal = mean(forward(lg.disc, x_data, ones));

  // Initial term at t = 0 through the generator.
  Val z_init = tape.leaf(in.z_initial);
  Val zeros_gen = tape.leaf(Tensor::zeros({m, 1}));
  Val zeros_disc = tape.leaf(Tensor::zeros({m, 1}));
  Val rho0 = forward(lg.gen, z_init, zeros_gen);
  Val initial = mean(forward(lg.disc, rho0, zeros_disc));

  lg.total = sub(add(interior, terminal), initial);
  lg.rho_interior = rho;
  lg.grad_x = grad_x;
  lg.grad_t = grad_t;
  lg.breakdown.interior_term = interior.value();
  lg.breakdown.terminal_term = terminal.value();
  lg.breakdown.initial_term = initial.value();
  lg.breakdown.total = lg.total.value();

  if (!std::isfinite(lg.breakdown.interior_term) || !std::isfinite(lg.breakdown.terminal_term) ||
      !std::isfinite(lg.breakdown.initial_term) || !std::isfinite(lg.breakdown.total)) {
    std::ostringstream os;
    os << "loss: non-finite evaluation (interior=" << lg.breakdown.interior_term
       << ", terminal=" << lg.breakdown.terminal_term << ", initial=" << lg.breakdown.initial_term
       << ", total=" << lg.breakdown.total << ")";
    raise(Errc::non_finite, os.str());
  }
  return lg;
}

// The primary objective: the general form with H(g) = (1/q)(‖g‖² + ε)^{q/2}.
inline LossGraph mfg_gan_loss(Tape& tape, const ParamSet& gen, const ParamSet& disc, const LossInputs& in,
                              const HamiltonianSpec& spec) {
  return general_hamiltonian_loss(tape, gen, disc, in, hamiltonian_callback(spec));
}

}  // namespace mfg
