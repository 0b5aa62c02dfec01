#pragma once

// Evaluation metrics: empirical moments, the closed-form Wasserstein-2
// distance between Gaussians, and CSV export of generated point clouds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace mfg {

struct MetricsRecord {
  int64_t step = 0;
  double total = 0.0;
  double interior = 0.0;
  double terminal = 0.0;
  double initial = 0.0;
  double mean_err = 0.0;      // infinity norm of the mean difference
  double cov_err = 0.0;       // Frobenius norm of the covariance difference
  double w2 = 0.0;            // Bures-Wasserstein distance
  double hjb_residual = 0.0;
  int64_t wall_ms = 0;

  bool valid() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    return std::isfinite(total) && std::isfinite(interior) && std::isfinite(terminal) &&
           std::isfinite(initial) && ok(mean_err) && ok(cov_err) && ok(w2) && ok(hjb_residual);
  }
};

// Sample mean and covariance with 1/(n-1) normalization.
inline void empirical_moments(const Tensor& samples, Tensor& mean, Tensor& cov) {
  if (samples.rank() != 2)
    raise(Errc::shape_mismatch,
          "moments: expected (n,d) samples, got " + Tensor::shape_str(samples.shape));
  const int64_t n = samples.rows(), d = samples.cols();
  if (n < 2) raise(Errc::precondition, "moments: need at least 2 samples, got " + std::to_string(n));

  mean = Tensor::zeros({d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mean.at(j) += samples.at(i, j);
  for (int64_t j = 0; j < d; ++j) mean.at(j) /= static_cast<double>(n);

  cov = Tensor::zeros({d, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < d; ++a) {
      const double da = samples.at(i, a) - mean.at(a);
      for (int64_t b = a; b < d; ++b) cov.at(a, b) += da * (samples.at(i, b) - mean.at(b));
    }
  for (int64_t a = 0; a < d; ++a)
    for (int64_t b = a; b < d; ++b) {
      cov.at(a, b) /= static_cast<double>(n - 1);
      cov.at(b, a) = cov.at(a, b);
    }
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix: a = V diag(w) V^T,
// eigenvectors in the columns of V.
inline void jacobi_eigh(const Tensor& a, Tensor& w, Tensor& v) {
  const int64_t d = a.rows();
  Tensor m = a;
  v = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i) v.at(i, i) = 1.0;

  double scale = 0.0;
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) scale = std::max(scale, std::fabs(m.at(i, j)));
  if (scale == 0.0) scale = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int64_t p = 0; p < d; ++p)
      for (int64_t q = p + 1; q < d; ++q) off = std::max(off, std::fabs(m.at(p, q)));
    if (off <= 1e-15 * scale) break;

    for (int64_t p = 0; p < d; ++p)
      for (int64_t q = p + 1; q < d; ++q) {
        const double apq = m.at(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t k = 0; k < d; ++k) {
          const double mkp = m.at(k, p), mkq = m.at(k, q);
          m.at(k, p) = c * mkp - s * mkq;
          m.at(k, q) = s * mkp + c * mkq;
        }
        for (int64_t k = 0; k < d; ++k) {
          const double mpk = m.at(p, k), mqk = m.at(q, k);
          m.at(p, k) = c * mpk - s * mqk;
          m.at(q, k) = s * mpk + c * mqk;
        }
        for (int64_t k = 0; k < d; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }

  w = Tensor::zeros({d});
  for (int64_t i = 0; i < d; ++i) w.at(i) = m.at(i, i);
}

// Symmetric PSD square root; tiny negative eigenvalues from sampling noise
// are clamped to zero.
inline Tensor sqrt_psd(const Tensor& a) {
  Tensor w, v;
  jacobi_eigh(a, w, v);
  const int64_t d = a.rows();
  Tensor out = Tensor::zeros({d, d});
  for (int64_t k = 0; k < d; ++k) {
    const double lam = std::sqrt(std::max(0.0, w.at(k)));
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j) out.at(i, j) += lam * v.at(i, k) * v.at(j, k);
  }
  return out;
}

inline void check_symmetric(const Tensor& s, const char* name) {
  if (s.rank() != 2 || s.rows() != s.cols())
    raise(Errc::shape_mismatch,
          std::string("w2: ") + name + " must be square, got " + Tensor::shape_str(s.shape));
  for (int64_t i = 0; i < s.rows(); ++i)
    for (int64_t j = i + 1; j < s.cols(); ++j)
      if (std::fabs(s.at(i, j) - s.at(j, i)) > 1e-9)
        raise(Errc::precondition, std::string("w2: ") + name + " is not symmetric");
}

}  // namespace detail

// Bures-Wasserstein distance between N(m1, s1) and N(m2, s2):
//   sqrt( |m1-m2|^2 + tr(s1 + s2 - 2 (s1^{1/2} s2 s1^{1/2})^{1/2}) )
inline double gaussian_w2(const Tensor& m1, const Tensor& s1, const Tensor& m2,
                          const Tensor& s2) {
  if (m1.rank() != 1 || m2.rank() != 1 || m1.numel() != m2.numel())
    raise(Errc::shape_mismatch, "w2: means must be equal-length vectors");
  const int64_t d = m1.numel();
  detail::check_symmetric(s1, "first covariance");
  detail::check_symmetric(s2, "second covariance");
  if (s1.rows() != d || s2.rows() != d)
    raise(Errc::shape_mismatch, "w2: covariance size does not match the mean dimension");

  const Tensor root1 = detail::sqrt_psd(s1);
  // inner = root1 * s2 * root1
  Tensor tmp = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < d; ++k) acc += root1.at(i, k) * s2.at(k, j);
      tmp.at(i, j) = acc;
    }
  Tensor inner = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < d; ++k) acc += tmp.at(i, k) * root1.at(k, j);
      inner.at(i, j) = acc;
    }
  // Jacobi noise can leave the product asymmetric at machine precision.
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = i + 1; j < d; ++j) {
      const double sym = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = sym;
      inner.at(j, i) = sym;
    }
  const Tensor cross = detail::sqrt_psd(inner);

  double d2 = 0.0;
  double scale = 1.0;
  for (int64_t i = 0; i < d; ++i) {
    const double dm = m1.at(i) - m2.at(i);
    d2 += dm * dm;
    d2 += s1.at(i, i) + s2.at(i, i) - 2.0 * cross.at(i, i);
    scale += std::fabs(s1.at(i, i)) + std::fabs(s2.at(i, i)) + dm * dm;
  }
  // The trace difference carries eigendecomposition noise of order eps*scale;
  // without this snap the square root would turn it into ~1e-8 distances
  // between identical Gaussians.
  if (d2 <= 1e-12 * scale) return 0.0;
  return std::sqrt(d2);
}

// Writes n generated points at time t as CSV: header x0,..,x{d-1}, one point
// per row, %.9g formatting, no index column.
inline void export_samples(const MlpSpec& gen_spec, const ParamSet& gen_params, double t,
                           int64_t n, const std::string& path, Rng& rng) {
  if (!(t >= 0.0 && t <= 1.0))
    raise(Errc::precondition, "export: t must lie in [0,1], got " + std::to_string(t));
  if (n < 0) raise(Errc::precondition, "export: need n >= 0");

  const int64_t d = gen_spec.output_dim;
  std::string csv;
  for (int64_t j = 0; j < d; ++j) {
    if (j) csv.push_back(',');
    csv += "x" + std::to_string(j);
  }
  csv.push_back('\n');

  if (n > 0) {
    Tape tape;
    NetOnTape gen = place_on_tape(tape, gen_params);
    Val z = tape.leaf(sample_noise(n, gen_spec.input_dim, rng));
    Val tv = tape.leaf(Tensor::full({n, 1}, t));
    const Tensor& x = forward(gen, z, tv).tensor();
    char num[40];
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < d; ++j) {
        if (j) csv.push_back(',');
        std::snprintf(num, sizeof num, "%.9g", x.at(i, j));
        csv += num;
      }
      csv.push_back('\n');
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io, "export: cannot open " + path + " for writing");
  out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  if (!out) raise(Errc::io, "export: short write to " + path);
}

}  // namespace mfg
