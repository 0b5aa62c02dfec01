#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "mfg/error.hpp"
#include "mfg/tape.hpp"
#include "mfg/tensor.hpp"

namespace mfg {

// Conjugate exponent r' with 1/r + 1/r' = 1. Defined for r > 1.
inline double conjugate_exponent(double r) {
  if (!(r > 1.0)) raise(Errc::domain, "conjugate_exponent: need r > 1, got " + std::to_string(r));
  return r / (r - 1.0);
}

// Exponent family of the Hamiltonian (1/q)‖·‖_{s'}^q and its Lagrangian
// counterpart (1/p)‖·‖_s^p. q and s are the inputs; p and s' are always the
// exact Hölder conjugates, never set independently.
struct HamiltonianSpec {
  double q = 2.0;
  double p = 2.0;
  double s = 2.0;
  double s_prime = 2.0;
  double epsilon = 1e-12;

  static HamiltonianSpec make(double q, double s = 2.0, double epsilon = 1e-12) {
    HamiltonianSpec h;
    h.q = q;
    h.p = conjugate_exponent(q);
    h.s = s;
    h.s_prime = conjugate_exponent(s);
    h.epsilon = epsilon;
    h.validate();
    return h;
  }

  void validate() const {
    if (!(q > 1.0) || !(p > 1.0)) raise(Errc::domain, "hamiltonian: exponents must exceed 1");
    if (std::abs(1.0 / p + 1.0 / q - 1.0) > 1e-12)
      raise(Errc::precondition, "hamiltonian: p is not the conjugate of q");
    if (std::abs(1.0 / s + 1.0 / s_prime - 1.0) > 1e-12)
      raise(Errc::precondition, "hamiltonian: s' is not the conjugate of s");
    if (!(epsilon >= 0.0)) raise(Errc::precondition, "hamiltonian: epsilon must be >= 0");
  }
};

// Per-row Hamiltonian H(g) = (1/q)(Σⱼ gⱼ² + ε)^{q/2}, recorded differentiably.
// Only the Euclidean dual norm (s = s' = 2) runs on tape; other norms are
// served by the grid oracle below and are otherwise an extension point.
inline Val hamiltonian(Val grad_phi, const HamiltonianSpec& spec) {
  spec.validate();
  if (spec.s_prime != 2.0)
    raise(Errc::unsupported,
          "hamiltonian: only s' = 2 is supported on tape (requested s' = " + std::to_string(spec.s_prime) + ")");
  const Tensor& g = grad_phi.tensor();
  if (g.rank() != 2) raise(Errc::shape_mismatch, "hamiltonian: expected (n,d) gradient rows, got " + g.shape_str());
  Val sq = scalar_add(row_sum(mul(grad_phi, grad_phi)), spec.epsilon);
  return scalar_mul(pow_scalar(sq, spec.q / 2.0), 1.0 / spec.q);
}

// Convenience for a single covector, off tape.
inline double hamiltonian_value(const Tensor& p_vec, const HamiltonianSpec& spec) {
  Tape tape;
  Tensor row = Tensor::zeros({1, p_vec.numel()});
  row.data = p_vec.data;
  return hamiltonian(tape.leaf(row), spec).tensor().at(0);
}

// Ground-truth Legendre transform by brute force: max over a uniform grid of
// ⟨v, p_vec⟩ − (1/p)‖v‖_s^p. Dimension is capped at 3 because the grid is
// dense. An argmax on the grid boundary means the grid missed the true
// maximizer (its scale is ‖p_vec‖^{q−1}); that is reported, not returned.
inline double legendre_oracle(const Tensor& p_vec, const HamiltonianSpec& spec, double grid_half_width,
                              double grid_step) {
  spec.validate();
  const int64_t d = p_vec.numel();
  if (p_vec.rank() != 1 || d < 1 || d > 3)
    raise(Errc::precondition, "legendre_oracle: need a rank-1 covector with 1 <= d <= 3, got " + p_vec.shape_str());
  if (!(grid_half_width > 0.0) || !(grid_step > 0.0) || grid_step > grid_half_width)
    raise(Errc::precondition, "legendre_oracle: need 0 < grid_step <= grid_half_width");

  // Symmetric grid centered on the origin: coordinates are a single multiply,
  // so v=0 is always an exact grid point and no fused multiply-add can shift it.
  const int64_t half = static_cast<int64_t>(std::floor(grid_half_width / grid_step));
  const int64_t m = 2 * half + 1;
  const double inv_p = 1.0 / spec.p;
  const bool euclid = spec.s == 2.0;
  const bool quadratic = euclid && spec.p == 2.0;

  auto coord = [&](int64_t j) { return static_cast<double>(j - half) * grid_step; };
  auto norm_pow_s = [&](double v) { return euclid ? v * v : std::pow(std::abs(v), spec.s); };
  auto lagrangian = [&](double acc) {
    // acc = Σ|v_i|^s; L = (1/p)(acc)^{p/s}.
    if (quadratic) return 0.5 * acc;
    return inv_p * std::pow(acc, spec.p / spec.s);
  };

  double best = -std::numeric_limits<double>::infinity();
  int64_t bi = 0, bj = 0, bk = 0;

  if (d == 1) {
    const double p0 = p_vec.at(0);
    for (int64_t i = 0; i < m; ++i) {
      const double v0 = coord(i);
      const double f = v0 * p0 - lagrangian(norm_pow_s(v0));
      if (f > best) best = f, bi = i;
    }
  } else if (d == 2) {
    const double p0 = p_vec.at(0), p1 = p_vec.at(1);
    for (int64_t i = 0; i < m; ++i) {
      const double v0 = coord(i);
      const double dot0 = v0 * p0;
      const double n0 = norm_pow_s(v0);
      for (int64_t j = 0; j < m; ++j) {
        const double v1 = coord(j);
        const double f = dot0 + v1 * p1 - lagrangian(n0 + norm_pow_s(v1));
        if (f > best) best = f, bi = i, bj = j;
      }
    }
  } else {
    const double p0 = p_vec.at(0), p1 = p_vec.at(1), p2 = p_vec.at(2);
    for (int64_t i = 0; i < m; ++i) {
      const double v0 = coord(i);
      const double dot0 = v0 * p0;
      const double n0 = norm_pow_s(v0);
      for (int64_t j = 0; j < m; ++j) {
        const double dot1 = dot0 + coord(j) * p1;
        const double n1 = n0 + norm_pow_s(coord(j));
        for (int64_t k = 0; k < m; ++k) {
          const double v2 = coord(k);
          const double f = dot1 + v2 * p2 - lagrangian(n1 + norm_pow_s(v2));
          if (f > best) best = f, bi = i, bj = j, bk = k;
        }
      }
    }
  }

  auto on_edge = [&](int64_t j) { return j == 0 || j == m - 1; };
  if (on_edge(bi) || (d >= 2 && on_edge(bj)) || (d >= 3 && on_edge(bk))) {
    double norm2 = 0.0;
    for (double v : p_vec.data) norm2 += v * v;
    const double scale = std::pow(std::sqrt(norm2), spec.q - 1.0);
    raise(Errc::grid_too_narrow, "legendre_oracle: argmax sits on the grid boundary at half-width " +
                                     std::to_string(grid_half_width) +
                                     "; widen the grid (maximizer scale is about |p|^(q-1) = " +
                                     std::to_string(scale) + ")");
  }
  return best;
}

}  // namespace mfg
