#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "mfg/error.hpp"
#include "mfg/tensor.hpp"

namespace mfg {

// Operation kinds. Every kind has an eager forward kernel and a backward rule
// that is itself expressed through recorded operations, so gradients are
// ordinary tape nodes and can be differentiated again. This is what lets the
// loss contain input-gradients of the discriminator and still be
// differentiable in the network parameters.
enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScalarAdd,
  kScalarMul,
  kMatmul,
  kTranspose,
  kConcatCols,
  kSliceCols,
  kPadCols,
  kRowSum,
  kColSum,
  kRepeatCols,
  kRepeatRows,
  kSum,
  kMean,
  kBroadcastScalar,
  kTanh,
  kPowScalar,
  kLog,
  kExp,
  kSumSq,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarAdd: return "scalar_add";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kPadCols: return "pad_cols";
    case Op::kRowSum: return "row_sum";
    case Op::kColSum: return "col_sum";
    case Op::kRepeatCols: return "repeat_cols";
    case Op::kRepeatRows: return "repeat_rows";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kTanh: return "tanh";
    case Op::kPowScalar: return "pow";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kSumSq: return "sumsq";
  }
  return "?";
}

// One recorded operation. `a`, `b` index parent nodes (-1 when absent),
// `c` carries a scalar attribute (constant or exponent), `i0`/`i1` carry
// integer attributes (slice offset/length, pad widths, repeat counts,
// broadcast target shape). Parents always precede the node in tape order.
struct Node {
  Op op;
  int a = -1;
  int b = -1;
  double c = 0.0;
  int64_t i0 = 0;
  int64_t i1 = 0;
  Tensor value;
};

class Tape;

// Lightweight handle to a node on a tape.
struct Val {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& tensor() const;
  const std::vector<int64_t>& shape() const;
  double value() const { return tensor().value(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Append-only record of a computation. Single-owner: a tape must not be
// shared across threads while recording. Replaying the tape reproduces every
// node value bit-identically (verify_replay checks exactly that).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  Val leaf(Tensor t) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(t);
    return push(std::move(n));
  }

  Val constant(double v) { return leaf(Tensor::scalar(v)); }

  Val record(Op op, int a, int b, double c = 0.0, int64_t i0 = 0, int64_t i1 = 0) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.i0 = i0;
    n.i1 = i1;
    n.value = eval_node(n);
    return push(std::move(n));
  }

  // Re-executes every non-leaf node from its parents and compares bitwise.
  bool verify_replay() const {
    for (const Node& n : nodes_) {
      if (n.op == Op::kLeaf) continue;
      Tensor again = eval_node(n);
      if (again.shape != n.value.shape) return false;
      if (std::memcmp(again.data.data(), n.value.data.data(), again.data.size() * sizeof(double)) != 0)
        return false;
    }
    return true;
  }

  void reset() { nodes_.clear(); }

 private:
  friend struct Val;

  Val push(Node n) {
    nodes_.push_back(std::move(n));
    return Val{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& pv(int id) const { return nodes_[static_cast<size_t>(id)].value; }

  Tensor eval_node(const Node& n) const;

  std::vector<Node> nodes_;
};

inline const Tensor& Val::tensor() const { return tape->node(id).value; }
inline const std::vector<int64_t>& Val::shape() const { return tensor().shape; }

namespace detail {

inline void matmul_kernel(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
  std::fill(C, C + n * m, 0.0);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* a0 = A + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c0 = C + i * m;
    double* c1 = c0 + m;
    double* c2 = c1 + m;
    double* c3 = c2 + m;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* b = B + kk * m;
      const double v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
      for (int64_t j = 0; j < m; ++j) {
        const double bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < n; ++i) {
    const double* a = A + i * k;
    double* c = C + i * m;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* b = B + kk * m;
      const double v = a[kk];
      for (int64_t j = 0; j < m; ++j) c[j] += v * b[j];
    }
  }
}

[[noreturn]] inline void shape_error(Op op, const Tensor& a, const Tensor& b) {
  raise(Errc::shape_mismatch,
        std::string(op_name(op)) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

[[noreturn]] inline void shape_error(Op op, const Tensor& a, const std::string& why) {
  raise(Errc::shape_mismatch, std::string(op_name(op)) + ": " + why + ", got shape " + a.shape_str());
}

}  // namespace detail

inline Tensor Tape::eval_node(const Node& n) const {
  switch (n.op) {
    case Op::kLeaf:
      return n.value;

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = pv(n.a);
      const Tensor& b = pv(n.b);
      const bool as = a.is_scalar(), bs = b.is_scalar();
      if (!a.same_shape(b) && !as && !bs) detail::shape_error(n.op, a, b);
      const Tensor& big = (as && !bs) ? b : a;
      Tensor out = Tensor::zeros(big.shape);
      const int64_t n_el = big.numel();
      const double* pa = a.data.data();
      const double* pb = b.data.data();
      double* po = out.data.data();
      const int64_t sa = as ? 0 : 1, sb = bs ? 0 : 1;
      switch (n.op) {
        case Op::kAdd:
          for (int64_t i = 0; i < n_el; ++i) po[i] = pa[i * sa] + pb[i * sb];
          break;
        case Op::kSub:
          for (int64_t i = 0; i < n_el; ++i) po[i] = pa[i * sa] - pb[i * sb];
          break;
        default:
          for (int64_t i = 0; i < n_el; ++i) po[i] = pa[i * sa] * pb[i * sb];
          break;
      }
      return out;
    }

    case Op::kScalarAdd: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v += n.c;
      return out;
    }
    case Op::kScalarMul: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v *= n.c;
      return out;
    }

    case Op::kMatmul: {
      const Tensor& a = pv(n.a);
      const Tensor& b = pv(n.b);
      if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) detail::shape_error(n.op, a, b);
      Tensor out = Tensor::zeros({a.shape[0], b.shape[1]});
      detail::matmul_kernel(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1], b.shape[1]);
      return out;
    }

    case Op::kTranspose: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2) detail::shape_error(n.op, a, "expected rank-2 tensor");
      Tensor out = Tensor::zeros({a.shape[1], a.shape[0]});
      for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
      return out;
    }

    case Op::kConcatCols: {
      const Tensor& a = pv(n.a);
      const Tensor& b = pv(n.b);
      if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0]) detail::shape_error(n.op, a, b);
      const int64_t rows = a.shape[0], ka = a.shape[1], kb = b.shape[1];
      Tensor out = Tensor::zeros({rows, ka + kb});
      for (int64_t i = 0; i < rows; ++i) {
        std::copy_n(a.data.data() + i * ka, ka, out.data.data() + i * (ka + kb));
        std::copy_n(b.data.data() + i * kb, kb, out.data.data() + i * (ka + kb) + ka);
      }
      return out;
    }

    case Op::kSliceCols: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2) detail::shape_error(n.op, a, "expected rank-2 tensor");
      const int64_t off = n.i0, len = n.i1;
      if (off < 0 || len < 0 || off + len > a.shape[1])
        detail::shape_error(n.op, a, "slice [" + std::to_string(off) + "," + std::to_string(off + len) +
                                         ") out of bounds");
      Tensor out = Tensor::zeros({a.shape[0], len});
      for (int64_t i = 0; i < a.shape[0]; ++i)
        std::copy_n(a.data.data() + i * a.shape[1] + off, len, out.data.data() + i * len);
      return out;
    }

    case Op::kPadCols: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2) detail::shape_error(n.op, a, "expected rank-2 tensor");
      const int64_t left = n.i0, right = n.i1;
      if (left < 0 || right < 0) detail::shape_error(n.op, a, "negative padding");
      const int64_t w = left + a.shape[1] + right;
      Tensor out = Tensor::zeros({a.shape[0], w});
      for (int64_t i = 0; i < a.shape[0]; ++i)
        std::copy_n(a.data.data() + i * a.shape[1], a.shape[1], out.data.data() + i * w + left);
      return out;
    }

    case Op::kRowSum: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2) detail::shape_error(n.op, a, "expected rank-2 tensor");
      Tensor out = Tensor::zeros({a.shape[0], 1});
      for (int64_t i = 0; i < a.shape[0]; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < a.shape[1]; ++j) s += a.at(i, j);
        out.at(i, 0) = s;
      }
      return out;
    }

    case Op::kColSum: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2) detail::shape_error(n.op, a, "expected rank-2 tensor");
      Tensor out = Tensor::zeros({1, a.shape[1]});
      for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < a.shape[1]; ++j) out.at(0, j) += a.at(i, j);
      return out;
    }

    case Op::kRepeatCols: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2 || a.shape[1] != 1) detail::shape_error(n.op, a, "expected (n,1) tensor");
      Tensor out = Tensor::zeros({a.shape[0], n.i0});
      for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < n.i0; ++j) out.at(i, j) = a.at(i, 0);
      return out;
    }

    case Op::kRepeatRows: {
      const Tensor& a = pv(n.a);
      if (a.rank() != 2 || a.shape[0] != 1) detail::shape_error(n.op, a, "expected (1,k) tensor");
      Tensor out = Tensor::zeros({n.i0, a.shape[1]});
      for (int64_t i = 0; i < n.i0; ++i)
        std::copy_n(a.data.data(), a.shape[1], out.data.data() + i * a.shape[1]);
      return out;
    }

    case Op::kSum: {
      const Tensor& a = pv(n.a);
      double s = 0.0;
      for (double v : a.data) s += v;
      return Tensor::scalar(s);
    }

    case Op::kMean: {
      const Tensor& a = pv(n.a);
      double s = 0.0;
      for (double v : a.data) s += v;
      return Tensor::scalar(s / static_cast<double>(a.numel()));
    }

    case Op::kBroadcastScalar: {
      const Tensor& a = pv(n.a);
      if (!a.is_scalar()) detail::shape_error(n.op, a, "expected scalar");
      std::vector<int64_t> shape = n.i1 > 0 ? std::vector<int64_t>{n.i0, n.i1} : std::vector<int64_t>{n.i0};
      return Tensor::full(std::move(shape), a.data[0]);
    }

    case Op::kTanh: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v = std::tanh(v);
      return out;
    }

    case Op::kPowScalar: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v = std::pow(v, n.c);
      return out;
    }

    case Op::kLog: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v = std::log(v);
      return out;
    }

    case Op::kExp: {
      Tensor out = pv(n.a);
      for (double& v : out.data) v = std::exp(v);
      return out;
    }

    case Op::kSumSq: {
      const Tensor& a = pv(n.a);
      double s = 0.0;
      for (double v : a.data) s += v * v;
      return Tensor::scalar(s);
    }
  }
  raise(Errc::internal, "eval_node: unknown op");
}

namespace detail {

inline void check_same_tape(Val a, Val b, Op op) {
  if (a.tape != b.tape)
    raise(Errc::precondition, std::string(op_name(op)) + ": operands recorded on different tapes");
}

}  // namespace detail

// -- recording API ----------------------------------------------------------

inline Val add(Val a, Val b) {
  detail::check_same_tape(a, b, Op::kAdd);
  return a.tape->record(Op::kAdd, a.id, b.id);
}
inline Val sub(Val a, Val b) {
  detail::check_same_tape(a, b, Op::kSub);
  return a.tape->record(Op::kSub, a.id, b.id);
}
inline Val mul(Val a, Val b) {
  detail::check_same_tape(a, b, Op::kMul);
  return a.tape->record(Op::kMul, a.id, b.id);
}
inline Val scalar_add(Val a, double c) { return a.tape->record(Op::kScalarAdd, a.id, -1, c); }
inline Val scalar_mul(Val a, double c) { return a.tape->record(Op::kScalarMul, a.id, -1, c); }
inline Val matmul(Val a, Val b) {
  detail::check_same_tape(a, b, Op::kMatmul);
  return a.tape->record(Op::kMatmul, a.id, b.id);
}
inline Val transpose(Val a) { return a.tape->record(Op::kTranspose, a.id, -1); }
inline Val concat_cols(Val a, Val b) {
  detail::check_same_tape(a, b, Op::kConcatCols);
  return a.tape->record(Op::kConcatCols, a.id, b.id);
}
inline Val slice_cols(Val a, int64_t off, int64_t len) {
  return a.tape->record(Op::kSliceCols, a.id, -1, 0.0, off, len);
}
inline Val pad_cols(Val a, int64_t left, int64_t right) {
  return a.tape->record(Op::kPadCols, a.id, -1, 0.0, left, right);
}
inline Val row_sum(Val a) { return a.tape->record(Op::kRowSum, a.id, -1); }
inline Val col_sum(Val a) { return a.tape->record(Op::kColSum, a.id, -1); }
inline Val repeat_cols(Val a, int64_t k) { return a.tape->record(Op::kRepeatCols, a.id, -1, 0.0, k); }
inline Val repeat_rows(Val a, int64_t n) { return a.tape->record(Op::kRepeatRows, a.id, -1, 0.0, n); }
inline Val sum(Val a) { return a.tape->record(Op::kSum, a.id, -1); }
inline Val mean(Val a) { return a.tape->record(Op::kMean, a.id, -1); }
inline Val broadcast_scalar(Val a, const std::vector<int64_t>& shape) {
  if (shape.empty() || shape.size() > 2)
    raise(Errc::shape_mismatch, "broadcast_scalar: target rank must be 1 or 2");
  return a.tape->record(Op::kBroadcastScalar, a.id, -1, 0.0, shape[0], shape.size() == 2 ? shape[1] : 0);
}
inline Val tanh(Val a) { return a.tape->record(Op::kTanh, a.id, -1); }
inline Val pow_scalar(Val a, double e) {
  // Negative bases make fractional powers ill-defined; reject them eagerly.
  for (double v : a.tensor().data)
    if (v < 0.0)
      raise(Errc::domain, "pow: negative base " + std::to_string(v) + " (base >= 0 enforced)");
  return a.tape->record(Op::kPowScalar, a.id, -1, e);
}
inline Val log(Val a) { return a.tape->record(Op::kLog, a.id, -1); }
inline Val exp(Val a) { return a.tape->record(Op::kExp, a.id, -1); }
inline Val sumsq(Val a) { return a.tape->record(Op::kSumSq, a.id, -1); }

inline Val operator+(Val a, Val b) { return add(a, b); }
inline Val operator-(Val a, Val b) { return sub(a, b); }
inline Val operator*(Val a, Val b) { return mul(a, b); }
inline Val operator+(Val a, double c) { return scalar_add(a, c); }
inline Val operator-(Val a, double c) { return scalar_add(a, -c); }
inline Val operator*(Val a, double c) { return scalar_mul(a, c); }
inline Val operator*(double c, Val a) { return scalar_mul(a, c); }
inline Val operator-(Val a) { return scalar_mul(a, -1.0); }

// -- reverse pass ------------------------------------------------------------

// Gradient of a scalar node with respect to `wrt`. The backward pass emits
// new nodes onto the same tape, so the returned gradients can be
// differentiated again; `create_graph` documents whether the caller intends
// to do so (the recording is identical either way). Nodes not reachable from
// the output get a zero gradient of matching shape rather than an error.
inline std::vector<Val> grad(Val output, const std::vector<Val>& wrt, bool create_graph = false) {
  (void)create_graph;
  Tape& tape = *output.tape;
  if (!output.tensor().is_scalar())
    raise(Errc::precondition, "grad: output must be scalar, got shape " + output.tensor().shape_str());
  for (Val w : wrt)
    if (w.tape != output.tape) raise(Errc::precondition, "grad: wrt node recorded on a different tape");

  const int top = output.id;
  std::vector<uint8_t> is_wrt(static_cast<size_t>(top) + 1, 0);
  for (Val w : wrt)
    if (w.id <= top) is_wrt[static_cast<size_t>(w.id)] = 1;

  // Relevant nodes lie on a path from some wrt node to the output.
  std::vector<uint8_t> from_wrt(static_cast<size_t>(top) + 1, 0);
  for (int i = 0; i <= top; ++i) {
    const Node& n = tape.node(i);
    from_wrt[static_cast<size_t>(i)] =
        is_wrt[static_cast<size_t>(i)] || (n.a >= 0 && from_wrt[static_cast<size_t>(n.a)]) ||
        (n.b >= 0 && from_wrt[static_cast<size_t>(n.b)]);
  }
  std::vector<uint8_t> to_out(static_cast<size_t>(top) + 1, 0);
  to_out[static_cast<size_t>(top)] = 1;
  for (int i = top; i >= 0; --i) {
    if (!to_out[static_cast<size_t>(i)]) continue;
    const Node& n = tape.node(i);
    if (n.a >= 0) to_out[static_cast<size_t>(n.a)] = 1;
    if (n.b >= 0) to_out[static_cast<size_t>(n.b)] = 1;
  }

  std::vector<int> adj(static_cast<size_t>(top) + 1, -1);
  adj[static_cast<size_t>(top)] = tape.leaf(Tensor::scalar(1.0)).id;

  auto relevant = [&](int id) {
    return id >= 0 && from_wrt[static_cast<size_t>(id)] && to_out[static_cast<size_t>(id)];
  };
  auto accumulate = [&](int id, Val contrib) {
    int& slot = adj[static_cast<size_t>(id)];
    slot = (slot < 0) ? contrib.id : add(Val{&tape, slot}, contrib).id;
  };

  for (int i = top; i >= 0; --i) {
    if (!relevant(i) || adj[static_cast<size_t>(i)] < 0) continue;
    const Node n = tape.node(i);  // copy: tape grows during emission
    const Val g{&tape, adj[static_cast<size_t>(i)]};
    const Val self{&tape, i};
    const bool want_a = relevant(n.a);
    const bool want_b = relevant(n.b);
    if (!want_a && !want_b) continue;
    const Val pa{&tape, n.a};
    const Val pb{&tape, n.b};

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        const bool a_scalar = pa.tensor().is_scalar() && !pb.tensor().is_scalar();
        const bool b_scalar = pb.tensor().is_scalar() && !pa.tensor().is_scalar();
        if (want_a) accumulate(n.a, a_scalar ? sum(g) : g);
        if (want_b) accumulate(n.b, b_scalar ? sum(g) : g);
        break;
      }
      case Op::kSub: {
        const bool a_scalar = pa.tensor().is_scalar() && !pb.tensor().is_scalar();
        const bool b_scalar = pb.tensor().is_scalar() && !pa.tensor().is_scalar();
        if (want_a) accumulate(n.a, a_scalar ? sum(g) : g);
        if (want_b) accumulate(n.b, b_scalar ? scalar_mul(sum(g), -1.0) : scalar_mul(g, -1.0));
        break;
      }
      case Op::kMul: {
        const bool a_scalar = pa.tensor().is_scalar() && !pb.tensor().is_scalar();
        const bool b_scalar = pb.tensor().is_scalar() && !pa.tensor().is_scalar();
        if (want_a) accumulate(n.a, a_scalar ? sum(mul(g, pb)) : mul(g, pb));
        if (want_b) accumulate(n.b, b_scalar ? sum(mul(g, pa)) : mul(g, pa));
        break;
      }
      case Op::kScalarAdd:
        if (want_a) accumulate(n.a, g);
        break;
      case Op::kScalarMul:
        if (want_a) accumulate(n.a, scalar_mul(g, n.c));
        break;
      case Op::kMatmul:
        if (want_a) accumulate(n.a, matmul(g, transpose(pb)));
        if (want_b) accumulate(n.b, matmul(transpose(pa), g));
        break;
      case Op::kTranspose:
        if (want_a) accumulate(n.a, transpose(g));
        break;
      case Op::kConcatCols: {
        const int64_t ka = pa.tensor().shape[1];
        const int64_t kb = pb.tensor().shape[1];
        if (want_a) accumulate(n.a, slice_cols(g, 0, ka));
        if (want_b) accumulate(n.b, slice_cols(g, ka, kb));
        break;
      }
      case Op::kSliceCols:
        if (want_a) accumulate(n.a, pad_cols(g, n.i0, pa.tensor().shape[1] - n.i0 - n.i1));
        break;
      case Op::kPadCols:
        if (want_a) accumulate(n.a, slice_cols(g, n.i0, pa.tensor().shape[1]));
        break;
      case Op::kRowSum:
        if (want_a) accumulate(n.a, repeat_cols(g, pa.tensor().shape[1]));
        break;
      case Op::kColSum:
        if (want_a) accumulate(n.a, repeat_rows(g, pa.tensor().shape[0]));
        break;
      case Op::kRepeatCols:
        if (want_a) accumulate(n.a, row_sum(g));
        break;
      case Op::kRepeatRows:
        if (want_a) accumulate(n.a, col_sum(g));
        break;
      case Op::kSum:
        if (want_a) accumulate(n.a, broadcast_scalar(g, pa.tensor().shape));
        break;
      case Op::kMean:
        if (want_a)
          accumulate(n.a, broadcast_scalar(scalar_mul(g, 1.0 / static_cast<double>(pa.tensor().numel())),
                                           pa.tensor().shape));
        break;
      case Op::kBroadcastScalar:
        if (want_a) accumulate(n.a, sum(g));
        break;
      case Op::kTanh:
        // d tanh = 1 - tanh^2, built from the node's own value.
        if (want_a) accumulate(n.a, mul(g, scalar_add(scalar_mul(mul(self, self), -1.0), 1.0)));
        break;
      case Op::kPowScalar:
        if (want_a) accumulate(n.a, mul(g, scalar_mul(pow_scalar(pa, n.c - 1.0), n.c)));
        break;
      case Op::kLog:
        // 1/x is fine for any nonzero x, so bypass the base >= 0 guard.
        if (want_a) accumulate(n.a, mul(g, tape.record(Op::kPowScalar, n.a, -1, -1.0)));
        break;
      case Op::kExp:
        if (want_a) accumulate(n.a, mul(g, self));
        break;
      case Op::kSumSq:
        if (want_a) accumulate(n.a, scalar_mul(mul(g, pa), 2.0));
        break;
    }
  }

  std::vector<Val> out;
  out.reserve(wrt.size());
  for (Val w : wrt) {
    const int a = w.id <= top ? adj[static_cast<size_t>(w.id)] : -1;
    out.push_back(a >= 0 ? Val{&tape, a} : tape.leaf(Tensor::zeros(w.tensor().shape)));
  }
  return out;
}

inline Val grad1(Val output, Val wrt, bool create_graph = false) {
  return grad(output, std::vector<Val>{wrt}, create_graph)[0];
}

// -- finite-difference oracle -------------------------------------------------

// Compares the tape gradient of a scalar-valued builder against central
// differences. Returns the max over coordinates of
// |analytic - numeric| / max(1, |analytic|).
inline double finite_diff_check(const std::function<Val(Tape&, Val)>& f, const Tensor& x, double step) {
  if (step <= 0.0) raise(Errc::precondition, "finite_diff_check: step must be > 0");

  Tape tape;
  Val xv = tape.leaf(x);
  Val y = f(tape, xv);
  if (!y.tensor().is_scalar())
    raise(Errc::precondition, "finite_diff_check: f must be scalar-valued, got " + y.tensor().shape_str());
  if (!std::isfinite(y.value())) raise(Errc::non_finite, "finite_diff_check: non-finite f value at x");
  Tensor analytic = grad(y, {xv})[0].tensor();

  auto eval_at = [&](const Tensor& p) {
    Tape t2;
    Val v = f(t2, t2.leaf(p));
    double r = v.value();
    if (!std::isfinite(r)) raise(Errc::non_finite, "finite_diff_check: non-finite f value near x");
    return r;
  };

  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor hi = x, lo = x;
    hi.at(i) += step;
    lo.at(i) -= step;
    const double numeric = (eval_at(hi) - eval_at(lo)) / (2.0 * step);
    const double a = analytic.at(i);
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace mfg
