#pragma once

#include <cmath>
#include <cstdint>

#include "mfg/error.hpp"

namespace mfg {

// Counter-based random generator (Philox4x32-10). All randomness in the
// engine is a pure function of (seed, stream, step, draw index), which is
// what makes training runs replayable and checkpoint resume exact: the batch
// for outer step s can be regenerated without replaying steps 0..s-1.
class Rng {
 public:
  // Stream ids keep independent purposes statistically decoupled.
  enum Stream : uint32_t {
    kInit = 1,
    kData = 2,
    kNoiseInterior = 3,
    kNoiseInitial = 4,
    kTime = 5,
    kEval = 6,
    kTest = 7,
  };

  Rng(uint64_t seed, uint32_t stream, uint64_t step = 0)
      : key0_(static_cast<uint32_t>(seed)),
        key1_(static_cast<uint32_t>(seed >> 32)),
        ctr2_(static_cast<uint32_t>(step)),
        ctr3_(stream ^ (static_cast<uint32_t>(step >> 32) * 0x9E3779B9u)) {}

  // Uniform on [0,1), 53-bit resolution.
  double uniform() {
    if (!have_uniform_) {
      uint64_t a, b;
      next_block(a, b);
      uniform_spare_ = to_unit(b);
      have_uniform_ = true;
      return to_unit(a);
    }
    have_uniform_ = false;
    return uniform_spare_;
  }

  // Standard normal via Box-Muller; draws a dedicated block per pair.
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return normal_spare_;
    }
    uint64_t a, b;
    next_block(a, b);
    double u1 = 1.0 - to_unit(a);  // (0,1], keeps the log finite
    double u2 = to_unit(b);
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * pi() * u2;
    normal_spare_ = r * std::sin(theta);
    have_normal_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n == 0) raise(Errc::precondition, "rng: below(0)");
    return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  static constexpr double pi() { return 3.14159265358979323846; }

 private:
  static void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
  }

  void next_block(uint64_t& out0, uint64_t& out1) {
    uint32_t c0 = static_cast<uint32_t>(block_);
    uint32_t c1 = static_cast<uint32_t>(block_ >> 32);
    uint32_t c2 = ctr2_, c3 = ctr3_;
    uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      uint32_t n0 = hi1 ^ c1 ^ k0;
      uint32_t n1 = lo1;
      uint32_t n2 = hi0 ^ c3 ^ k1;
      uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    ++block_;
    out0 = (static_cast<uint64_t>(c0) << 32) | c1;
    out1 = (static_cast<uint64_t>(c2) << 32) | c3;
  }

  static double to_unit(uint64_t u) { return static_cast<double>(u >> 11) * 0x1.0p-53; }

  uint32_t key0_, key1_;
  uint32_t ctr2_, ctr3_;
  uint64_t block_ = 0;
  bool have_uniform_ = false;
  bool have_normal_ = false;
  double uniform_spare_ = 0.0;
  double normal_spare_ = 0.0;
};

}  // namespace mfg
