#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/error.hpp"
#include "mfg/rng.hpp"
#include "mfg/tape.hpp"
#include "mfg/tensor.hpp"

namespace mfg {

// Architecture of a fully connected network. `input_dim` is the data
// dimension; when `time_input` is set the network consumes one extra column
// holding the time coordinate. Hidden activations are tanh; the output layer
// is linear unless `sigmoid_output` squashes it into (0,1).
struct MlpSpec {
  int64_t input_dim = 0;
  std::vector<int64_t> hidden;
  int64_t output_dim = 0;
  bool time_input = false;
  bool sigmoid_output = false;

  // Widths of consecutive layers, including the time column when present.
  std::vector<int64_t> layer_dims() const {
    std::vector<int64_t> d;
    d.push_back(input_dim + (time_input ? 1 : 0));
    for (int64_t h : hidden) d.push_back(h);
    d.push_back(output_dim);
    return d;
  }

  int64_t layer_count() const { return static_cast<int64_t>(hidden.size()) + 1; }

  int64_t param_count() const {
    auto d = layer_dims();
    int64_t n = 0;
    for (size_t l = 0; l + 1 < d.size(); ++l) n += d[l] * d[l + 1] + d[l + 1];
    return n;
  }

  bool same_layout(const MlpSpec& o) const {
    return input_dim == o.input_dim && hidden == o.hidden && output_dim == o.output_dim &&
           time_input == o.time_input;
  }

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0)
      raise(Errc::precondition, "network: input and output dims must be positive");
    for (int64_t h : hidden)
      if (h <= 0) raise(Errc::precondition, "network: hidden widths must be positive");
  }
};

// Concrete parameter values, stored off-tape. Layout order is fixed:
// W0, b0, W1, b1, ... with W_l shaped (in_l, out_l) and b_l shaped (1, out_l).
struct ParamSet {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  int64_t count() const {
    int64_t n = 0;
    for (const Tensor& w : weights) n += w.numel();
    for (const Tensor& b : biases) n += b.numel();
    return n;
  }

  bool all_finite() const {
    for (const Tensor& w : weights)
      if (!w.all_finite()) return false;
    for (const Tensor& b : biases)
      if (!b.all_finite()) return false;
    return true;
  }
};

// Xavier-uniform weights, zero biases. Draw order is row-major per layer, so
// a given (seed, stream, step) triple pins every parameter.
inline ParamSet init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamSet p;
  p.spec = spec;
  auto d = spec.layer_dims();
  for (size_t l = 0; l + 1 < d.size(); ++l) {
    const int64_t fan_in = d[l], fan_out = d[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.data) v = bound * (2.0 * rng.uniform() - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Tensor::zeros({1, fan_out}));
  }
  return p;
}

inline std::vector<double> flatten(const ParamSet& p) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(p.count()));
  for (size_t l = 0; l < p.weights.size(); ++l) {
    out.insert(out.end(), p.weights[l].data.begin(), p.weights[l].data.end());
    out.insert(out.end(), p.biases[l].data.begin(), p.biases[l].data.end());
  }
  return out;
}

inline ParamSet unflatten(const MlpSpec& spec, const std::vector<double>& flat) {
  if (static_cast<int64_t>(flat.size()) != spec.param_count())
    raise(Errc::precondition, "network: expected " + std::to_string(spec.param_count()) +
                                  " parameters, got " + std::to_string(flat.size()));
  ParamSet p;
  p.spec = spec;
  auto d = spec.layer_dims();
  size_t off = 0;
  for (size_t l = 0; l + 1 < d.size(); ++l) {
    const int64_t fan_in = d[l], fan_out = d[l + 1];
    Tensor w = Tensor::zeros({fan_in, fan_out});
    std::copy_n(flat.begin() + static_cast<int64_t>(off), fan_in * fan_out, w.data.begin());
    off += static_cast<size_t>(fan_in * fan_out);
    Tensor b = Tensor::zeros({1, fan_out});
    std::copy_n(flat.begin() + static_cast<int64_t>(off), fan_out, b.data.begin());
    off += static_cast<size_t>(fan_out);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

// Parameters placed on a tape as leaves, ready for forward passes and grad().
struct NetOnTape {
  MlpSpec spec;
  std::vector<Val> weights;
  std::vector<Val> biases;

  // Leaves in flatten order W0, b0, W1, b1, ...
  std::vector<Val> all() const {
    std::vector<Val> v;
    for (size_t l = 0; l < weights.size(); ++l) {
      v.push_back(weights[l]);
      v.push_back(biases[l]);
    }
    return v;
  }
};

inline NetOnTape place_on_tape(Tape& tape, const ParamSet& p) {
  NetOnTape n;
  n.spec = p.spec;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    n.weights.push_back(tape.leaf(p.weights[l]));
    n.biases.push_back(tape.leaf(p.biases[l]));
  }
  return n;
}

// Reads gradients back into the off-tape layout. `grads` must come from
// grad(..., net.all()).
inline ParamSet grads_to_params(const MlpSpec& spec, const std::vector<Val>& grads) {
  if (grads.size() != 2 * (spec.hidden.size() + 1))
    raise(Errc::precondition, "network: gradient list does not match layer count");
  ParamSet p;
  p.spec = spec;
  for (size_t l = 0; l < grads.size(); l += 2) {
    p.weights.push_back(grads[l].tensor());
    p.biases.push_back(grads[l + 1].tensor());
  }
  return p;
}

namespace detail {

inline Val sigmoid(Val h) {
  // 1/(1+e^-z) written through tanh: 0.5 * (tanh(z/2) + 1).
  return scalar_add(scalar_mul(mfg::tanh(scalar_mul(h, 0.5)), 0.5), 0.5);
}

inline Val forward_impl(const NetOnTape& net, Val h) {
  const int64_t rows = h.tensor().shape[0];
  const size_t layers = net.weights.size();
  for (size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, net.weights[l]), repeat_rows(net.biases[l], rows));
    if (l + 1 < layers)
      h = mfg::tanh(h);
    else if (net.spec.sigmoid_output)
      h = sigmoid(h);
  }
  return h;
}

}  // namespace detail

// Forward pass for a network without a time column. `x` is (n, input_dim).
inline Val forward(const NetOnTape& net, Val x) {
  if (net.spec.time_input)
    raise(Errc::precondition, "network: time column required, call forward(net, x, t)");
  const Tensor& xt = x.tensor();
  if (xt.rank() != 2 || xt.shape[1] != net.spec.input_dim)
    raise(Errc::shape_mismatch, "network: expected (n," + std::to_string(net.spec.input_dim) +
                                    ") input, got " + xt.shape_str());
  return detail::forward_impl(net, x);
}

// Forward pass with a time column. `x` is (n, input_dim), `t` is (n, 1); rows
// pass through independently, which is what makes per-sample input gradients
// recoverable from one batched call.
inline Val forward(const NetOnTape& net, Val x, Val t) {
  if (!net.spec.time_input)
    raise(Errc::precondition, "network: no time column in this network, call forward(net, x)");
  const Tensor& xt = x.tensor();
  const Tensor& tt = t.tensor();
  if (xt.rank() != 2 || xt.shape[1] != net.spec.input_dim)
    raise(Errc::shape_mismatch, "network: expected (n," + std::to_string(net.spec.input_dim) +
                                    ") input, got " + xt.shape_str());
  if (tt.rank() != 2 || tt.shape[0] != xt.shape[0] || tt.shape[1] != 1)
    raise(Errc::shape_mismatch,
          "network: expected (" + std::to_string(xt.shape[0]) + ",1) time column, got " + tt.shape_str());
  return detail::forward_impl(net, concat_cols(x, t));
}

// -- checkpoint serialization -------------------------------------------------
//
// Layout: 8 magic bytes "MFGGAN1\0", one ASCII header line
// "dims=<input>,<h1>,...,<output>;time=<0|1>;count=<n>\n", then <n> IEEE-754
// doubles, little-endian, in flatten order. `dims` lists the logical input
// dimension; the time column is carried by the flag, not the dims.

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'G', 'G', 'A', 'N', '1', '\0'};

inline std::string checkpoint_header(const MlpSpec& spec) {
  std::ostringstream os;
  os << "dims=" << spec.input_dim;
  for (int64_t h : spec.hidden) os << "," << h;
  os << "," << spec.output_dim;
  os << ";time=" << (spec.time_input ? 1 : 0);
  os << ";count=" << spec.param_count() << "\n";
  return os.str();
}

namespace detail {

inline void put_le64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint64_t get_le64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamSet& p) {
  std::string buf;
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  buf += checkpoint_header(p.spec);
  std::vector<double> flat = flatten(p);
  buf.reserve(buf.size() + flat.size() * 8);
  for (double v : flat) detail::put_le64(buf, std::bit_cast<uint64_t>(v));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(Errc::io, "checkpoint: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) raise(Errc::io, "checkpoint: write failed for " + path);
}

// Loads a checkpoint, reconstructing the layer layout from the header.
// `sigmoid_output` is not part of the format; the caller sets it afterwards.
inline ParamSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(Errc::io, "checkpoint: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (raw.size() < sizeof(kCheckpointMagic)) raise(Errc::checkpoint_truncated, "checkpoint: file shorter than magic");
  if (std::memcmp(raw.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    raise(Errc::checkpoint_magic, "checkpoint: bad magic in " + path);

  const size_t nl = raw.find('\n', sizeof(kCheckpointMagic));
  if (nl == std::string::npos) raise(Errc::checkpoint_truncated, "checkpoint: header line not terminated");
  const std::string header = raw.substr(sizeof(kCheckpointMagic), nl - sizeof(kCheckpointMagic));

  std::vector<int64_t> dims;
  int time_flag = -1;
  int64_t count = -1;
  {
    std::istringstream hs(header);
    std::string field;
    while (std::getline(hs, field, ';')) {
      const size_t eq = field.find('=');
      if (eq == std::string::npos) raise(Errc::checkpoint_mismatch, "checkpoint: malformed header field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      try {
        if (key == "dims") {
          std::istringstream ds(val);
          std::string d;
          while (std::getline(ds, d, ',')) dims.push_back(std::stoll(d));
        } else if (key == "time") {
          time_flag = std::stoi(val);
        } else if (key == "count") {
          count = std::stoll(val);
        } else {
          raise(Errc::checkpoint_mismatch, "checkpoint: unknown header field '" + key + "'");
        }
      } catch (const Error&) {
        throw;
      } catch (const std::exception&) {
        raise(Errc::checkpoint_mismatch, "checkpoint: unparsable header value '" + val + "'");
      }
    }
  }
  if (dims.size() < 2 || time_flag < 0 || time_flag > 1 || count < 0)
    raise(Errc::checkpoint_mismatch, "checkpoint: incomplete header '" + header + "'");

  MlpSpec spec;
  spec.input_dim = dims.front();
  spec.hidden.assign(dims.begin() + 1, dims.end() - 1);
  spec.output_dim = dims.back();
  spec.time_input = time_flag == 1;
  spec.validate();
  if (spec.param_count() != count)
    raise(Errc::checkpoint_mismatch, "checkpoint: count " + std::to_string(count) +
                                         " does not match dims (expect " +
                                         std::to_string(spec.param_count()) + ")");

  const size_t payload = raw.size() - nl - 1;
  const size_t want = static_cast<size_t>(count) * 8;
  if (payload < want) raise(Errc::checkpoint_truncated, "checkpoint: payload holds " + std::to_string(payload / 8) +
                                                            " of " + std::to_string(count) + " values");
  if (payload > want) raise(Errc::checkpoint_mismatch, "checkpoint: trailing bytes after payload");

  std::vector<double> flat(static_cast<size_t>(count));
  const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data()) + nl + 1;
  for (size_t i = 0; i < flat.size(); ++i) flat[i] = std::bit_cast<double>(detail::get_le64(p + 8 * i));
  return unflatten(spec, flat);
}

// Loads and checks the layer layout against what the caller expects.
inline ParamSet load_checkpoint(const std::string& path, const MlpSpec& expected) {
  ParamSet p = load_checkpoint(path);
  if (!p.spec.same_layout(expected))
    raise(Errc::checkpoint_mismatch, "checkpoint: layout " + checkpoint_header(p.spec).substr(0, checkpoint_header(p.spec).find('\n')) +
                                         " does not match the requested network");
  p.spec.sigmoid_output = expected.sigmoid_output;
  return p;
}

}  // namespace mfg
