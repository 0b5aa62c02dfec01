#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/error.hpp"

namespace mfg {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything the
// engine needs; a scalar is any tensor with exactly one element.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;

  Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      raise(Errc::shape_mismatch, "tensor: shape " + shape_str(shape) + " does not match data length " +
                                      std::to_string(data.size()));
  }

  static Tensor zeros(std::vector<int64_t> s) {
    std::vector<double> d(static_cast<size_t>(numel_of(s)), 0.0);
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor full(std::vector<int64_t> s, double v) {
    std::vector<double> d(static_cast<size_t>(numel_of(s)), v);
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor row(std::vector<double> d) {
    int64_t n = static_cast<int64_t>(d.size());
    return Tensor({n}, std::move(d));
  }

  static Tensor matrix(int64_t r, int64_t c, std::vector<double> d) { return Tensor({r, c}, std::move(d)); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return numel() == 1; }

  int64_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 1); }
  int64_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  double value() const {
    if (!is_scalar()) raise(Errc::shape_mismatch, "tensor: value() on non-scalar shape " + shape_str(shape));
    return data[0];
  }

  // NaN/Inf detection is an explicit operation: ops never check silently.
  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return s.empty() ? 1 : n;
  }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
  }

  std::string shape_str() const { return shape_str(shape); }
};

}  // namespace mfg
