#pragma once

// Run configuration: the trainer settings plus experiment selection, model
// widths, target description, and file locations. Serializes to a flat
// "key = value" text format; '#' starts a comment. An experiment preset pins
// dimension, exponent, and target so the named runs cannot drift; pinned keys
// may still appear in a file as long as they restate the pinned value, which
// is what makes a written effective config reloadable.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "tensor.hpp"
#include "trainer.hpp"

namespace mfg {

struct RunConfig {
  std::string experiment = "custom";  // syn1 | syn2 | syn3 | mnist | custom
  int64_t dim = 2;
  int64_t noise_dim = 0;  // 0 means: match dim
  std::vector<int64_t> gen_hidden{128, 128, 128};
  std::vector<int64_t> disc_hidden{128, 128, 128};
  std::vector<double> target_mean;  // empty means: origin
  TrainConfig train;
  std::string mnist_path;
  std::string out_dir = "run";

  int64_t effective_noise_dim() const { return noise_dim == 0 ? dim : noise_dim; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline int64_t parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size() || v.empty())
    raise(Errc::config, "config: key '" + key + "' needs an integer, got '" + v + "'");
  return static_cast<int64_t>(x);
}

inline uint64_t parse_uint(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size() || v.empty() || v[0] == '-')
    raise(Errc::config, "config: key '" + key + "' needs a non-negative integer, got '" + v + "'");
  return static_cast<uint64_t>(x);
}

inline double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end != v.c_str() + v.size() || v.empty())
    raise(Errc::config, "config: key '" + key + "' needs a number, got '" + v + "'");
  return x;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse(key, trim(item)));
  return out;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T, typename Fmt>
std::string format_list(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt(xs[i]);
  }
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "experiment",     "dim",        "noise-dim",  "gen-hidden", "disc-hidden",
      "target-mean",    "outer-steps", "inner-steps", "batch-size", "lr-gen",
      "lr-disc",        "adam-beta1", "adam-beta2", "adam-eps",   "q",
      "seed",           "eval-every", "checkpoint-every", "eval-batch", "hjb-batch",
      "mnist-path",     "out"};
  return keys;
}

inline std::string config_value(const RunConfig& c, const std::string& key) {
  using detail::format_double;
  using detail::format_list;
  if (key == "experiment") return c.experiment;
  if (key == "dim") return std::to_string(c.dim);
  if (key == "noise-dim") return std::to_string(c.noise_dim);
  if (key == "gen-hidden")
    return format_list(c.gen_hidden, [](int64_t x) { return std::to_string(x); });
  if (key == "disc-hidden")
    return format_list(c.disc_hidden, [](int64_t x) { return std::to_string(x); });
  if (key == "target-mean") return format_list(c.target_mean, format_double);
  if (key == "outer-steps") return std::to_string(c.train.outer_steps);
  if (key == "inner-steps") return std::to_string(c.train.inner_steps);
  if (key == "batch-size") return std::to_string(c.train.batch_size);
  if (key == "lr-gen") return format_double(c.train.lr_gen);
  if (key == "lr-disc") return format_double(c.train.lr_disc);
  if (key == "adam-beta1") return format_double(c.train.adam_beta1);
  if (key == "adam-beta2") return format_double(c.train.adam_beta2);
  if (key == "adam-eps") return format_double(c.train.adam_eps);
  if (key == "q") return format_double(c.train.q);
  if (key == "seed") return std::to_string(c.train.seed);
  if (key == "eval-every") return std::to_string(c.train.eval_every);
  if (key == "checkpoint-every") return std::to_string(c.train.checkpoint_every);
  if (key == "eval-batch") return std::to_string(c.train.eval_batch);
  if (key == "hjb-batch") return std::to_string(c.train.hjb_batch);
  if (key == "mnist-path") return c.mnist_path;
  if (key == "out") return c.out_dir;
  raise(Errc::config, "config: unknown key '" + key + "'");
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_list;
  using detail::parse_uint;
  if (key == "experiment") {
    if (value != "syn1" && value != "syn2" && value != "syn3" && value != "mnist" &&
        value != "custom")
      raise(Errc::config, "config: experiment must be one of syn1, syn2, syn3, mnist, custom");
    c.experiment = value;
  } else if (key == "dim") {
    c.dim = parse_int(key, value);
  } else if (key == "noise-dim") {
    c.noise_dim = parse_int(key, value);
  } else if (key == "gen-hidden") {
    c.gen_hidden = parse_list<int64_t>(key, value, parse_int);
  } else if (key == "disc-hidden") {
    c.disc_hidden = parse_list<int64_t>(key, value, parse_int);
  } else if (key == "target-mean") {
    c.target_mean = parse_list<double>(key, value, parse_double);
  } else if (key == "outer-steps") {
    c.train.outer_steps = parse_int(key, value);
  } else if (key == "inner-steps") {
    c.train.inner_steps = parse_int(key, value);
  } else if (key == "batch-size") {
    c.train.batch_size = parse_int(key, value);
  } else if (key == "lr-gen") {
    c.train.lr_gen = parse_double(key, value);
  } else if (key == "lr-disc") {
    c.train.lr_disc = parse_double(key, value);
  } else if (key == "adam-beta1") {
    c.train.adam_beta1 = parse_double(key, value);
  } else if (key == "adam-beta2") {
    c.train.adam_beta2 = parse_double(key, value);
  } else if (key == "adam-eps") {
    c.train.adam_eps = parse_double(key, value);
  } else if (key == "q") {
    c.train.q = parse_double(key, value);
  } else if (key == "seed") {
    c.train.seed = parse_uint(key, value);
  } else if (key == "eval-every") {
    c.train.eval_every = parse_int(key, value);
  } else if (key == "checkpoint-every") {
    c.train.checkpoint_every = parse_int(key, value);
  } else if (key == "eval-batch") {
    c.train.eval_batch = parse_int(key, value);
  } else if (key == "hjb-batch") {
    c.train.hjb_batch = parse_int(key, value);
  } else if (key == "mnist-path") {
    c.mnist_path = value;
  } else if (key == "out") {
    c.out_dir = value;
  } else {
    std::string valid;
    for (const auto& k : config_keys()) {
      if (!valid.empty()) valid += ", ";
      valid += k;
    }
    raise(Errc::config, "config: unknown key '" + key + "'; valid keys: " + valid);
  }
}

namespace detail {

struct PresetPin {
  std::string key;
  std::string value;
};

// The values an experiment name pins. A pinned key may be restated verbatim
// but not overridden.
inline std::vector<PresetPin> preset_pins(const std::string& experiment) {
  auto fives = [](int64_t n) {
    std::string s;
    for (int64_t i = 0; i < n; ++i) s += (i ? ",5" : "5");
    return s;
  };
  if (experiment == "syn1") return {{"dim", "2"}, {"q", "10"}, {"target-mean", fives(2)}};
  if (experiment == "syn2") return {{"dim", "2"}, {"q", "2"}, {"target-mean", fives(2)}};
  if (experiment == "syn3") return {{"dim", "10"}, {"q", "2"}, {"target-mean", fives(10)}};
  if (experiment == "mnist") return {{"dim", "784"}, {"q", "2"}, {"target-mean", ""}};
  return {};
}

}  // namespace detail

// Applies the experiment's pinned values onto c.
inline void apply_experiment_preset(RunConfig& c) {
  for (const auto& pin : detail::preset_pins(c.experiment)) set_config_value(c, pin.key, pin.value);
}

// Applies "key = value" lines onto base. An experiment line is honored first
// (wherever it appears), then its pins are enforced against the rest.
inline RunConfig parse_config_text(const std::string& text, RunConfig base,
                                   const std::string& origin = "config") {
  struct Line {
    int number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::stringstream ss(text);
  std::string raw;
  int number = 0;
  while (std::getline(ss, raw)) {
    ++number;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    raw = detail::trim(raw);
    if (raw.empty()) continue;
    const size_t eq = raw.find('=');
    if (eq == std::string::npos)
      raise(Errc::config,
            "config: " + origin + " line " + std::to_string(number) + " is not 'key = value'");
    lines.push_back(
        {number, detail::trim(raw.substr(0, eq)), detail::trim(raw.substr(eq + 1))});
  }

  RunConfig c = base;
  for (const auto& ln : lines)
    if (ln.key == "experiment") set_config_value(c, ln.key, ln.value);
  apply_experiment_preset(c);
  const auto pins = detail::preset_pins(c.experiment);
  for (const auto& ln : lines) {
    if (ln.key == "experiment") continue;
    for (const auto& pin : pins)
      if (ln.key == pin.key && ln.value != pin.value)
        raise(Errc::config, "config: key '" + ln.key + "' is pinned to '" + pin.value +
                                "' by experiment " + c.experiment);
    set_config_value(c, ln.key, ln.value);
  }
  return c;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), base, std::filesystem::path(path).filename().string());
}

inline std::string config_text(const RunConfig& c) {
  std::string out = "# effective run configuration\n";
  for (const auto& key : config_keys()) out += key + " = " + config_value(c, key) + "\n";
  return out;
}

inline void write_config_file(const RunConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io, "config: cannot open " + path + " for writing");
  out << config_text(c);
  if (!out) raise(Errc::io, "config: short write to " + path);
}

// Structural checks beyond TrainConfig::validate.
inline void validate_run_config(const RunConfig& c) {
  if (c.dim < 1) raise(Errc::config, "config: dim must be >= 1");
  if (c.noise_dim < 0) raise(Errc::config, "config: noise-dim must be >= 0");
  for (int64_t h : c.gen_hidden)
    if (h < 1) raise(Errc::config, "config: gen-hidden widths must be >= 1");
  for (int64_t h : c.disc_hidden)
    if (h < 1) raise(Errc::config, "config: disc-hidden widths must be >= 1");
  if (!c.target_mean.empty() && static_cast<int64_t>(c.target_mean.size()) != c.dim)
    raise(Errc::config, "config: target-mean has " + std::to_string(c.target_mean.size()) +
                            " entries but dim is " + std::to_string(c.dim));
  if (c.experiment == "mnist" && !c.target_mean.empty())
    raise(Errc::config, "config: the mnist experiment takes no target-mean");
  c.train.validate();
}

inline MlpSpec generator_spec(const RunConfig& c) {
  MlpSpec s;
  s.input_dim = c.effective_noise_dim();
  s.hidden = c.gen_hidden;
  s.output_dim = c.dim;
  s.time_input = true;
  s.sigmoid_output = (c.experiment == "mnist");
  return s;
}

inline MlpSpec discriminator_spec(const RunConfig& c) {
  MlpSpec s;
  s.input_dim = c.dim;
  s.hidden = c.disc_hidden;
  s.output_dim = 1;
  s.time_input = true;
  return s;
}

// Identity-covariance Gaussian at target-mean (origin when unset).
inline GaussianTarget gaussian_target(const RunConfig& c) {
  std::vector<double> mean = c.target_mean;
  if (mean.empty()) mean.assign(static_cast<size_t>(c.dim), 0.0);
  return GaussianTarget::isotropic(mean);
}

}  // namespace mfg
