#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

// Every failure mode in the library maps to one code so callers (and the CLI)
// can dispatch on the category without parsing message text.
enum class Errc {
  shape_mismatch,
  domain,
  precondition,
  non_finite,
  unsupported,
  grid_too_narrow,
  io,
  checkpoint_magic,
  checkpoint_truncated,
  checkpoint_mismatch,
  idx_magic,
  idx_truncated,
  idx_dims,
  config,
  internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::shape_mismatch:       return "shape";
    case Errc::domain:               return "domain";
    case Errc::precondition:         return "precondition";
    case Errc::non_finite:           return "nonfinite";
    case Errc::unsupported:          return "unsupported";
    case Errc::grid_too_narrow:      return "grid";
    case Errc::io:                   return "io";
    case Errc::checkpoint_magic:     return "checkpoint-magic";
    case Errc::checkpoint_truncated: return "checkpoint-truncated";
    case Errc::checkpoint_mismatch:  return "checkpoint-mismatch";
    case Errc::idx_magic:            return "idx-magic";
    case Errc::idx_truncated:        return "idx-truncated";
    case Errc::idx_dims:             return "idx-dims";
    case Errc::config:               return "config";
    case Errc::internal:             return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

  Errc code() const { return code_; }
  const char* category() const { return errc_name(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace mfg
