#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace swlab {

// Reverse-mode automatic differentiation over scalars and fixed-length
// vectors. Nodes are appended to a Wengert list; the adjoint pass is itself
// recorded as tape nodes, so differentiating a gradient a second time is the
// same mechanism applied again. That is what makes parameter gradients of
// gradient-norm penalties (second-order quantities) come out of one engine.
//
// A Tape is single-threaded and must never be shared mutably. Distinct tapes
// may run concurrently without coordination.

enum class Op : std::uint8_t {
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSquare,
  kSqrt,
  kMaxS,      // elementwise max(a, c0); derivative 1 at the tie
  kRelu,      // derivative 0 at exactly 0
  kTanh,
  kSum,       // vector -> scalar
  kMean,      // vector -> scalar
  kDot,       // (vector, vector) -> scalar
  kSqNorm,    // vector -> scalar, sum of squares
  kMatVec,    // (matrix as row-major i0 x i1 vector, vector) -> vector
  kMatTVec,   // transposed product, same matrix layout
  kOuter,     // (len r, len c) -> row-major r*c
  kSMul,      // a * c0 elementwise
  kSAxpB,     // a * c0 + c1 elementwise
  kBroadcast, // scalar -> vector of length i0
  kScaleVS,   // vector a times scalar node b
  kPick,      // a[i0] -> scalar
  kScatter,   // scalar -> vector of length i0 with value at index i1
  kSlice,     // a[i0 .. i0+len) -> vector
  kScatterRange,  // vector -> zero vector of length i0 with a at offset i1
  kMaskMul,   // a * mask(parent b); mask mode in i0
};

// Mask modes for kMaskMul. The mask is a function of the reference node's
// recorded value only, so no derivative flows into the reference.
inline constexpr std::uint32_t kMaskGtZero = 0;  // 1[ref > 0]
inline constexpr std::uint32_t kMaskGeC = 1;     // 1[ref >= c0]

struct Var {
  std::uint32_t index = kInvalid;
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  bool valid() const { return index != kInvalid; }
};

class Tape {
 public:
  struct Node {
    Op op;
    std::uint32_t a, b;   // parent indices, kNone if absent
    std::size_t ofs;      // offset into the value arena
    std::uint32_t len;
    std::uint32_t i0, i1; // op-specific integers (dims, indices, mask mode)
    double c0, c1;        // op-specific scalars
  };
  static constexpr std::uint32_t kNone = 0xffffffffu;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  // Checkpoints mark a prefix of the tape; truncating to one and re-recording
  // is equivalent to a fresh tape for the re-recorded region.
  struct Checkpoint {
    std::size_t nodes;
    std::size_t vals;
  };
  Checkpoint checkpoint() const { return {nodes_.size(), vals_.size()}; }
  void truncate(Checkpoint cp) {
    nodes_.resize(cp.nodes);
    vals_.resize(cp.vals);
  }
  void reset() { truncate({0, 0}); }

  std::span<const double> value(Var v) const {
    const Node& n = node(v);
    return {vals_.data() + n.ofs, n.len};
  }
  double scalar(Var v) const {
    const Node& n = node(v);
    if (n.len != 1) throw std::invalid_argument("tape: node is not scalar");
    return vals_[n.ofs];
  }
  std::uint32_t length(Var v) const { return node(v).len; }

  // ---- leaf inputs -------------------------------------------------------

  Var constant(double x) {
    Var v = push(Op::kConst, kNone, kNone, 1);
    mut(v)[0] = x;
    return v;
  }
  Var constant(std::span<const double> x) {
    Var v = push(Op::kConst, kNone, kNone, check_len(x.size()));
    auto out = mut(v);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
    return v;
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    same_len(a, b, "add");
    Var v = push(Op::kAdd, a.index, b.index, length(a));
    binary_loop(v, a, b, [](double x, double y) { return x + y; });
    return v;
  }
  Var sub(Var a, Var b) {
    same_len(a, b, "sub");
    Var v = push(Op::kSub, a.index, b.index, length(a));
    binary_loop(v, a, b, [](double x, double y) { return x - y; });
    return v;
  }
  Var mul(Var a, Var b) {
    same_len(a, b, "mul");
    Var v = push(Op::kMul, a.index, b.index, length(a));
    binary_loop(v, a, b, [](double x, double y) { return x * y; });
    return v;
  }
  Var div(Var a, Var b) {
    same_len(a, b, "div");
    Var v = push(Op::kDiv, a.index, b.index, length(a));
    binary_loop(v, a, b, [](double x, double y) { return x / y; });
    return v;
  }
  Var neg(Var a) {
    Var v = push(Op::kNeg, a.index, kNone, length(a));
    unary_loop(v, a, [](double x) { return -x; });
    return v;
  }
  Var square(Var a) {
    Var v = push(Op::kSquare, a.index, kNone, length(a));
    unary_loop(v, a, [](double x) { return x * x; });
    return v;
  }
  Var sqrt(Var a) {
    Var v = push(Op::kSqrt, a.index, kNone, length(a));
    unary_loop(v, a, [](double x) { return std::sqrt(x); });
    return v;
  }
  Var maxs(Var a, double c) {
    Var v = push(Op::kMaxS, a.index, kNone, length(a));
    mut_node(v).c0 = c;
    unary_loop(v, a, [c](double x) { return x > c ? x : c; });
    return v;
  }
  Var relu(Var a) {
    Var v = push(Op::kRelu, a.index, kNone, length(a));
    unary_loop(v, a, [](double x) { return x > 0.0 ? x : 0.0; });
    return v;
  }
  Var tanh(Var a) {
    Var v = push(Op::kTanh, a.index, kNone, length(a));
    unary_loop(v, a, [](double x) { return std::tanh(x); });
    return v;
  }
  Var smul(Var a, double c) {
    Var v = push(Op::kSMul, a.index, kNone, length(a));
    mut_node(v).c0 = c;
    unary_loop(v, a, [c](double x) { return x * c; });
    return v;
  }
  Var saxpb(Var a, double s, double b) {
    Var v = push(Op::kSAxpB, a.index, kNone, length(a));
    mut_node(v).c0 = s;
    mut_node(v).c1 = b;
    unary_loop(v, a, [s, b](double x) { return x * s + b; });
    return v;
  }

  // ---- reductions and products -------------------------------------------

  Var sum(Var a) {
    Var v = push(Op::kSum, a.index, kNone, 1);
    double acc = 0.0;
    for (double x : value_of(a)) acc += x;
    mut(v)[0] = acc;
    return v;
  }
  Var mean(Var a) {
    Var v = push(Op::kMean, a.index, kNone, 1);
    double acc = 0.0;
    auto xs = value_of(a);
    for (double x : xs) acc += x;
    mut(v)[0] = acc / static_cast<double>(xs.size());
    return v;
  }
  Var dot(Var a, Var b) {
    same_len(a, b, "dot");
    Var v = push(Op::kDot, a.index, b.index, 1);
    double acc = 0.0;
    auto xs = value_of(a);
    auto ys = value_of(b);
    for (std::size_t i = 0; i < xs.size(); ++i) acc += xs[i] * ys[i];
    mut(v)[0] = acc;
    return v;
  }
  Var sqnorm(Var a) {
    Var v = push(Op::kSqNorm, a.index, kNone, 1);
    double acc = 0.0;
    for (double x : value_of(a)) acc += x * x;
    mut(v)[0] = acc;
    return v;
  }

  // w holds a row-major rows x cols matrix; returns w * x of length rows.
  Var matvec(Var w, Var x, std::uint32_t rows, std::uint32_t cols) {
    if (length(w) != rows * cols || length(x) != cols)
      throw std::invalid_argument("matvec: dimension mismatch");
    Var v = push(Op::kMatVec, w.index, x.index, rows);
    mut_node(v).i0 = rows;
    mut_node(v).i1 = cols;
    const double* wp = value_of(w).data();
    const double* xp = value_of(x).data();
    auto out = mut(v);
    for (std::uint32_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* row = wp + static_cast<std::size_t>(r) * cols;
      for (std::uint32_t c = 0; c < cols; ++c) acc += row[c] * xp[c];
      out[r] = acc;
    }
    return v;
  }

  // Returns w^T * y of length cols, with w as in matvec.
  Var mattvec(Var w, Var y, std::uint32_t rows, std::uint32_t cols) {
    if (length(w) != rows * cols || length(y) != rows)
      throw std::invalid_argument("mattvec: dimension mismatch");
    Var v = push(Op::kMatTVec, w.index, y.index, cols);
    mut_node(v).i0 = rows;
    mut_node(v).i1 = cols;
    const double* wp = value_of(w).data();
    const double* yp = value_of(y).data();
    auto out = mut(v);
    for (std::uint32_t c = 0; c < cols; ++c) out[c] = 0.0;
    for (std::uint32_t r = 0; r < rows; ++r) {
      const double* row = wp + static_cast<std::size_t>(r) * cols;
      const double yr = yp[r];
      for (std::uint32_t c = 0; c < cols; ++c) out[c] += yr * row[c];
    }
    return v;
  }

  Var outer(Var u, Var v2) {
    const std::uint32_t r = length(u);
    const std::uint32_t c = length(v2);
    Var v = push(Op::kOuter, u.index, v2.index, r * c);
    mut_node(v).i0 = r;
    mut_node(v).i1 = c;
    const double* up = value_of(u).data();
    const double* vp = value_of(v2).data();
    auto out = mut(v);
    for (std::uint32_t i = 0; i < r; ++i)
      for (std::uint32_t j = 0; j < c; ++j) out[std::size_t(i) * c + j] = up[i] * vp[j];
    return v;
  }

  // ---- structural --------------------------------------------------------

  Var broadcast(Var s, std::uint32_t n) {
    if (length(s) != 1) throw std::invalid_argument("broadcast: source not scalar");
    Var v = push(Op::kBroadcast, s.index, kNone, n);
    mut_node(v).i0 = n;
    const double x = value_of(s)[0];
    for (auto& o : mut(v)) o = x;
    return v;
  }
  Var scale_vs(Var a, Var s) {
    if (length(s) != 1) throw std::invalid_argument("scale_vs: scale not scalar");
    Var v = push(Op::kScaleVS, a.index, s.index, length(a));
    const double c = value_of(s)[0];
    unary_loop(v, a, [c](double x) { return x * c; });
    return v;
  }
  Var pick(Var a, std::uint32_t i) {
    if (i >= length(a)) throw std::invalid_argument("pick: index out of range");
    Var v = push(Op::kPick, a.index, kNone, 1);
    mut_node(v).i0 = i;
    mut(v)[0] = value_of(a)[i];
    return v;
  }
  Var scatter(Var s, std::uint32_t i, std::uint32_t n) {
    if (length(s) != 1) throw std::invalid_argument("scatter: source not scalar");
    if (i >= n) throw std::invalid_argument("scatter: index out of range");
    Var v = push(Op::kScatter, s.index, kNone, n);
    mut_node(v).i0 = n;
    mut_node(v).i1 = i;
    auto out = mut(v);
    for (auto& o : out) o = 0.0;
    out[i] = value_of(s)[0];
    return v;
  }
  Var slice(Var a, std::uint32_t ofs, std::uint32_t len) {
    if (ofs + len > length(a)) throw std::invalid_argument("slice: out of range");
    Var v = push(Op::kSlice, a.index, kNone, len);
    mut_node(v).i0 = ofs;
    auto in = value_of(a);
    auto out = mut(v);
    for (std::uint32_t i = 0; i < len; ++i) out[i] = in[ofs + i];
    return v;
  }
  Var scatter_range(Var a, std::uint32_t ofs, std::uint32_t n) {
    if (ofs + length(a) > n) throw std::invalid_argument("scatter_range: out of range");
    Var v = push(Op::kScatterRange, a.index, kNone, n);
    mut_node(v).i0 = n;
    mut_node(v).i1 = ofs;
    auto in = value_of(a);
    auto out = mut(v);
    for (auto& o : out) o = 0.0;
    for (std::uint32_t i = 0; i < in.size(); ++i) out[ofs + i] = in[i];
    return v;
  }
  Var mask_mul(Var a, Var ref, std::uint32_t mode, double c = 0.0) {
    same_len(a, ref, "mask_mul");
    Var v = push(Op::kMaskMul, a.index, ref.index, length(a));
    mut_node(v).i0 = mode;
    mut_node(v).c0 = c;
    auto xs = value_of(a);
    auto rs = value_of(ref);
    auto out = mut(v);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const bool on = mode == kMaskGtZero ? rs[i] > 0.0 : rs[i] >= c;
      out[i] = on ? xs[i] : 0.0;
    }
    return v;
  }

  // ---- adjoint pass -------------------------------------------------------

  // Records the adjoint computation of a scalar root onto this tape and
  // returns one gradient node per requested variable (a zero constant when
  // the root does not depend on it). Because the result is ordinary tape
  // nodes, calling backward on a returned gradient yields second-order
  // derivatives.
  std::vector<Var> backward(Var root, std::span<const Var> wrt) {
    if (length(root) != 1)
      throw std::invalid_argument("backward: root must be scalar");
    const std::uint32_t n = root.index + 1;

    // anc: contributes to root; dep: depends on some wrt.
    anc_.assign(n, 0);
    dep_.assign(n, 0);
    anc_[root.index] = 1;
    for (Var w : wrt) {
      if (w.index >= n) continue;  // recorded after root: independent
      dep_[w.index] = 1;
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      const Node& nd = nodes_[i];
      if (!dep_[i]) {
        if ((nd.a != kNone && dep_[nd.a]) || (nd.b != kNone && dep_[nd.b]))
          dep_[i] = 1;
      }
    }
    for (std::uint32_t i = root.index;; --i) {
      if (anc_[i]) {
        const Node& nd = nodes_[i];
        if (nd.a != kNone) anc_[nd.a] = 1;
        if (nd.b != kNone) anc_[nd.b] = 1;
      }
      if (i == 0) break;
    }

    adj_.assign(n, kNone);
    adj_[root.index] = constant(1.0).index;

    for (std::uint32_t i = root.index;; --i) {
      if (anc_[i] && dep_[i] && adj_[i] != kNone) propagate(i);
      if (i == 0) break;
    }

    std::vector<Var> grads;
    grads.reserve(wrt.size());
    for (Var w : wrt) {
      if (w.index < n && adj_[w.index] != kNone) {
        grads.push_back(Var{adj_[w.index]});
      } else {
        grads.push_back(zero_like(w));
      }
    }
    return grads;
  }

  std::vector<Var> backward(Var root, std::initializer_list<Var> wrt) {
    return backward(root, std::span<const Var>(wrt.begin(), wrt.size()));
  }

 private:
  const Node& node(Var v) const {
    if (!v.valid() || v.index >= nodes_.size())
      throw std::invalid_argument("tape: invalid node handle");
    return nodes_[v.index];
  }
  Node& mut_node(Var v) { return nodes_[v.index]; }
  std::span<const double> value_of(Var v) const {
    const Node& n = nodes_[v.index];
    return {vals_.data() + n.ofs, n.len};
  }
  std::span<double> mut(Var v) {
    const Node& n = nodes_[v.index];
    return {vals_.data() + n.ofs, n.len};
  }

  static std::uint32_t check_len(std::size_t n) {
    if (n == 0) throw std::invalid_argument("tape: empty vector");
    return static_cast<std::uint32_t>(n);
  }
  void same_len(Var a, Var b, const char* what) const {
    if (node(a).len != node(b).len)
      throw std::invalid_argument(std::string(what) + ": length mismatch");
  }

  Var push(Op op, std::uint32_t a, std::uint32_t b, std::uint32_t len) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.ofs = vals_.size();
    n.len = len;
    n.i0 = n.i1 = 0;
    n.c0 = n.c1 = 0.0;
    vals_.resize(vals_.size() + len);
    nodes_.push_back(n);
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename F>
  void unary_loop(Var v, Var a, F&& f) {
    // value arrays may have been reallocated by push; fetch spans afterwards
    auto in = value_of(a);
    auto out = mut(v);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  }
  template <typename F>
  void binary_loop(Var v, Var a, Var b, F&& f) {
    auto x = value_of(a);
    auto y = value_of(b);
    auto out = mut(v);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  }

  Var zero_like(Var w) {
    const std::uint32_t len = length(w);
    Var v = push(Op::kConst, kNone, kNone, len);
    for (auto& o : mut(v)) o = 0.0;
    return v;
  }

  void accumulate(std::uint32_t target, Var contribution) {
    if (adj_[target] == kNone) {
      adj_[target] = contribution.index;
    } else {
      adj_[target] = add(Var{adj_[target]}, contribution).index;
    }
  }
  void accumulate_neg(std::uint32_t target, Var contribution) {
    if (adj_[target] == kNone) {
      adj_[target] = neg(contribution).index;
    } else {
      adj_[target] = sub(Var{adj_[target]}, contribution).index;
    }
  }
  bool wants(std::uint32_t i) const {
    return i != kNone && anc_[i] && dep_[i];
  }

  // Record the vector-Jacobian product of node i into its parents' adjoints.
  // Every rule below is expressed with recordable ops, which is what closes
  // the engine under repeated differentiation.
  void propagate(std::uint32_t i) {
    const Node nd = nodes_[i];  // by value: recording may reallocate nodes_
    const Var y{i};
    const Var g{adj_[i]};
    switch (nd.op) {
      case Op::kConst:
        break;
      case Op::kAdd:
        if (wants(nd.a)) accumulate(nd.a, g);
        if (wants(nd.b)) accumulate(nd.b, g);
        break;
      case Op::kSub:
        if (wants(nd.a)) accumulate(nd.a, g);
        if (wants(nd.b)) accumulate_neg(nd.b, g);
        break;
      case Op::kMul:
        if (wants(nd.a)) accumulate(nd.a, mul(g, Var{nd.b}));
        if (wants(nd.b)) accumulate(nd.b, mul(g, Var{nd.a}));
        break;
      case Op::kDiv: {
        Var gb{Var::kInvalid};
        if (wants(nd.a) || wants(nd.b)) gb = div(g, Var{nd.b});
        if (wants(nd.a)) accumulate(nd.a, gb);
        if (wants(nd.b)) accumulate_neg(nd.b, mul(gb, y));
        break;
      }
      case Op::kNeg:
        if (wants(nd.a)) accumulate_neg(nd.a, g);
        break;
      case Op::kSquare:
        if (wants(nd.a)) accumulate(nd.a, smul(mul(g, Var{nd.a}), 2.0));
        break;
      case Op::kSqrt:
        if (wants(nd.a)) accumulate(nd.a, div(g, smul(y, 2.0)));
        break;
      case Op::kMaxS:
        if (wants(nd.a)) accumulate(nd.a, mask_mul(g, Var{nd.a}, kMaskGeC, nd.c0));
        break;
      case Op::kRelu:
        if (wants(nd.a)) accumulate(nd.a, mask_mul(g, Var{nd.a}, kMaskGtZero));
        break;
      case Op::kTanh:
        if (wants(nd.a)) accumulate(nd.a, mul(g, saxpb(square(y), -1.0, 1.0)));
        break;
      case Op::kSum:
        if (wants(nd.a)) accumulate(nd.a, broadcast(g, nodes_[nd.a].len));
        break;
      case Op::kMean: {
        if (wants(nd.a)) {
          const std::uint32_t len = nodes_[nd.a].len;
          accumulate(nd.a, broadcast(smul(g, 1.0 / len), len));
        }
        break;
      }
      case Op::kDot:
        if (wants(nd.a)) accumulate(nd.a, scale_vs(Var{nd.b}, g));
        if (wants(nd.b)) accumulate(nd.b, scale_vs(Var{nd.a}, g));
        break;
      case Op::kSqNorm:
        if (wants(nd.a)) accumulate(nd.a, scale_vs(Var{nd.a}, smul(g, 2.0)));
        break;
      case Op::kMatVec:
        if (wants(nd.a)) accumulate(nd.a, outer(g, Var{nd.b}));
        if (wants(nd.b)) accumulate(nd.b, mattvec(Var{nd.a}, g, nd.i0, nd.i1));
        break;
      case Op::kMatTVec:
        if (wants(nd.a)) accumulate(nd.a, outer(Var{nd.b}, g));
        if (wants(nd.b)) accumulate(nd.b, matvec(Var{nd.a}, g, nd.i0, nd.i1));
        break;
      case Op::kOuter:
        if (wants(nd.a)) accumulate(nd.a, matvec(g, Var{nd.b}, nd.i0, nd.i1));
        if (wants(nd.b)) accumulate(nd.b, mattvec(g, Var{nd.a}, nd.i0, nd.i1));
        break;
      case Op::kSMul:
        if (wants(nd.a)) accumulate(nd.a, smul(g, nd.c0));
        break;
      case Op::kSAxpB:
        if (wants(nd.a)) accumulate(nd.a, smul(g, nd.c0));
        break;
      case Op::kBroadcast:
        if (wants(nd.a)) accumulate(nd.a, sum(g));
        break;
      case Op::kScaleVS:
        if (wants(nd.a)) accumulate(nd.a, scale_vs(g, Var{nd.b}));
        if (wants(nd.b)) accumulate(nd.b, dot(g, Var{nd.a}));
        break;
      case Op::kPick:
        if (wants(nd.a)) accumulate(nd.a, scatter(g, nd.i0, nodes_[nd.a].len));
        break;
      case Op::kScatter:
        if (wants(nd.a)) accumulate(nd.a, pick(g, nd.i1));
        break;
      case Op::kSlice:
        if (wants(nd.a)) accumulate(nd.a, scatter_range(g, nd.i0, nodes_[nd.a].len));
        break;
      case Op::kScatterRange:
        if (wants(nd.a)) accumulate(nd.a, slice(g, nd.i1, nodes_[nd.a].len));
        break;
      case Op::kMaskMul:
        if (wants(nd.a)) accumulate(nd.a, mask_mul(g, Var{nd.b}, nd.i0, nd.c0));
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  // scratch for backward; members so capacity is reused across calls
  std::vector<std::uint8_t> anc_, dep_;
  std::vector<std::uint32_t> adj_;
};

// Max relative gradient error of a scalar taped function against central
// finite differences: max_i |analytic_i - fd_i| / max(1, |fd_i|).
template <typename F>
double grad_check(F&& f, std::span<const double> point, double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");
  std::vector<double> analytic(point.size());
  {
    Tape tape;
    Var x = tape.constant(point);
    Var y = f(tape, x);
    auto grads = tape.backward(y, {x});
    auto g = tape.value(grads[0]);
    for (std::size_t i = 0; i < point.size(); ++i) analytic[i] = g[i];
  }
  double worst = 0.0;
  std::vector<double> p(point.begin(), point.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    Tape tp;
    const double fp = tp.scalar(f(tp, tp.constant(std::span<const double>(p))));
    p[i] = saved - h;
    Tape tm;
    const double fm = tm.scalar(f(tm, tm.constant(std::span<const double>(p))));
    p[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    if (err > worst || std::isnan(err)) worst = std::isnan(err) ? err : std::max(worst, err);
  }
  return worst;
}

}  // namespace swlab
