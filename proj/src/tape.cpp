#include "deqn/tape.hpp"

#include <cmath>

#include "deqn/kernels.hpp"

namespace deqn {

Shape Var::shape() const { return tape->node(id).shape; }

std::span<const double> Var::data() const {
  const auto& v = tape->node(id).value;
  return {v.data(), v.size()};
}

double Var::item() const {
  const auto& n = tape->node(id);
  if (n.shape.size() != 1) throw TapeError("item() requires a 1x1 value");
  return n.value[0];
}

std::int32_t Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

Var Tape::leaf(Shape s, std::span<const double> data, bool requires_grad) {
  if (static_cast<int>(data.size()) != s.size())
    throw TapeError("leaf data size does not match shape");
  Node n;
  n.op = Op::Leaf;
  n.shape = s;
  n.requires_grad = requires_grad;
  n.value.assign(data.begin(), data.end());
  return {this, push(std::move(n))};
}

Var Tape::scalar(double v) { return leaf({1, 1}, std::span(&v, 1), false); }

Var Tape::ones(Shape s) {
  std::vector<double> v(s.size(), 1.0);
  return leaf(s, v, false);
}

Var Tape::zeros(Shape s, bool requires_grad) {
  std::vector<double> v(s.size(), 0.0);
  return leaf(s, v, requires_grad);
}

Var Tape::full(Shape s, double x) {
  std::vector<double> v(s.size(), x);
  return leaf(s, v, false);
}

void Tape::set_leaf_value(Var v, std::span<const double> data) {
  Node& n = nodes_[v.id];
  if (n.op != Op::Leaf) throw TapeError("set_leaf_value: not a leaf");
  if (data.size() != n.value.size()) throw TapeError("set_leaf_value: size");
  n.value.assign(data.begin(), data.end());
}

namespace {

inline double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_val(double x) {
  // log(1 + e^x), overflow-safe.
  const double m = x > 0.0 ? x : 0.0;
  return m + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

Var Tape::unary(Op op, Var a) {
  const Node& na = nodes_[a.id];
  Node n;
  n.op = op;
  n.shape = na.shape;
  const bool differentiable = op != Op::Sign && op != Op::Step;
  n.requires_grad = differentiable && na.requires_grad;
  n.in0 = a.id;
  n.value.resize(na.shape.size());
  const double* x = na.value.data();
  double* y = n.value.data();
  const int sz = na.shape.size();
  using kernels::map1;
  switch (op) {
    case Op::Neg: map1(x, y, sz, [](double v) { return -v; }); break;
    case Op::Log: map1(x, y, sz, [](double v) { return std::log(v); }); break;
    case Op::Exp: map1(x, y, sz, [](double v) { return std::exp(v); }); break;
    case Op::Sin: map1(x, y, sz, [](double v) { return std::sin(v); }); break;
    case Op::Cos: map1(x, y, sz, [](double v) { return std::cos(v); }); break;
    case Op::Sqrt: map1(x, y, sz, [](double v) { return std::sqrt(v); }); break;
    case Op::Tanh: map1(x, y, sz, [](double v) { return std::tanh(v); }); break;
    case Op::Abs: map1(x, y, sz, [](double v) { return std::fabs(v); }); break;
    case Op::Sigmoid: map1(x, y, sz, sigmoid_val); break;
    case Op::Softplus: map1(x, y, sz, softplus_val); break;
    case Op::Relu:
      map1(x, y, sz, [](double v) { return v > 0.0 ? v : 0.0; });
      break;
    case Op::Sign:
      map1(x, y, sz, [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
      break;
    case Op::Step:
      map1(x, y, sz, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
      break;
    default: throw TapeError("unary: bad op");
  }
  return {this, push(std::move(n))};
}

Var Tape::neg(Var a) { return unary(Op::Neg, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::sin(Var a) { return unary(Op::Sin, a); }
Var Tape::cos(Var a) { return unary(Op::Cos, a); }
Var Tape::sqrt(Var a) { return unary(Op::Sqrt, a); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a); }
Var Tape::abs(Var a) { return unary(Op::Abs, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::softplus(Var a) { return unary(Op::Softplus, a); }
Var Tape::relu(Var a) { return unary(Op::Relu, a); }
Var Tape::sign(Var a) { return unary(Op::Sign, a); }
Var Tape::step(Var a) { return unary(Op::Step, a); }

namespace {

inline bool bcast_ok(int d, int out) { return d == out || d == 1; }

Shape broadcast_shape(Shape a, Shape b) {
  Shape out;
  out.rows = a.rows > b.rows ? a.rows : b.rows;
  out.cols = a.cols > b.cols ? a.cols : b.cols;
  if (!bcast_ok(a.rows, out.rows) || !bcast_ok(a.cols, out.cols) ||
      !bcast_ok(b.rows, out.rows) || !bcast_ok(b.cols, out.cols))
    throw TapeError("incompatible shapes for elementwise op");
  return out;
}

}  // namespace

Var Tape::binary(Op op, Var a, Var b) {
  const Node& na = nodes_[a.id];
  const Node& nb = nodes_[b.id];
  Node n;
  n.op = op;
  n.shape = broadcast_shape(na.shape, nb.shape);
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value.resize(n.shape.size());
  const auto run = [&](auto f) {
    kernels::map2_bcast(na.value.data(), na.shape.rows, na.shape.cols,
                        nb.value.data(), nb.shape.rows, nb.shape.cols,
                        n.value.data(), n.shape.rows, n.shape.cols, f);
  };
  switch (op) {
    case Op::Add: run([](double x, double y) { return x + y; }); break;
    case Op::Sub: run([](double x, double y) { return x - y; }); break;
    case Op::Mul: run([](double x, double y) { return x * y; }); break;
    case Op::Div: run([](double x, double y) { return x / y; }); break;
    case Op::Pow: run([](double x, double y) { return std::pow(x, y); }); break;
    default: throw TapeError("binary: bad op");
  }
  return {this, push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }
Var Tape::pow(Var a, Var b) { return binary(Op::Pow, a, b); }

Var Tape::matmul(Var a, Var b, bool ta, bool tb) {
  const Node& na = nodes_[a.id];
  const Node& nb = nodes_[b.id];
  const int M = ta ? na.shape.cols : na.shape.rows;
  const int Ka = ta ? na.shape.rows : na.shape.cols;
  const int Kb = tb ? nb.shape.cols : nb.shape.rows;
  const int N = tb ? nb.shape.rows : nb.shape.cols;
  if (Ka != Kb) throw TapeError("matmul: inner dimensions differ");
  Node n;
  n.op = Op::Matmul;
  n.shape = {M, N};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.in0 = a.id;
  n.in1 = b.id;
  n.aux0 = (ta ? 1 : 0) | (tb ? 2 : 0);
  n.value.resize(static_cast<std::size_t>(M) * N);
  kernels::matmul(na.value.data(), nb.value.data(), n.value.data(), M, Ka, N,
                  ta, tb);
  return {this, push(std::move(n))};
}

Var Tape::sum_all(Var a) {
  const Node& na = nodes_[a.id];
  Node n;
  n.op = Op::SumAll;
  n.shape = {1, 1};
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.value = {kernels::sum_all(na.value.data(), na.shape.size())};
  return {this, push(std::move(n))};
}

Var Tape::col_sum(Var a) {
  const Node& na = nodes_[a.id];
  Node n;
  n.op = Op::ColSum;
  n.shape = {1, na.shape.cols};
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.value.resize(na.shape.cols);
  kernels::col_sum(na.value.data(), na.shape.rows, na.shape.cols,
                   n.value.data());
  return {this, push(std::move(n))};
}

Var Tape::row_sum(Var a) {
  const Node& na = nodes_[a.id];
  Node n;
  n.op = Op::RowSum;
  n.shape = {na.shape.rows, 1};
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.value.resize(na.shape.rows);
  kernels::row_sum(na.value.data(), na.shape.rows, na.shape.cols,
                   n.value.data());
  return {this, push(std::move(n))};
}

Var Tape::broadcast_to(Var a, Shape s) {
  const Node& na = nodes_[a.id];
  if (na.shape == s) return a;
  if (!bcast_ok(na.shape.rows, s.rows) || !bcast_ok(na.shape.cols, s.cols))
    throw TapeError("broadcast_to: incompatible shapes");
  Node n;
  n.op = Op::Broadcast;
  n.shape = s;
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.value.resize(s.size());
  kernels::map2_bcast(na.value.data(), na.shape.rows, na.shape.cols,
                      na.value.data(), na.shape.rows, na.shape.cols,
                      n.value.data(), s.rows, s.cols,
                      [](double x, double) { return x; });
  return {this, push(std::move(n))};
}

Var Tape::hstack(std::span<const Var> parts) {
  if (parts.empty()) throw TapeError("hstack: no inputs");
  Node n;
  n.op = Op::HStack;
  const int rows = nodes_[parts[0].id].shape.rows;
  int cols = 0;
  for (Var p : parts) {
    const Node& np = nodes_[p.id];
    if (np.shape.rows != rows) throw TapeError("hstack: row mismatch");
    cols += np.shape.cols;
    n.requires_grad = n.requires_grad || np.requires_grad;
  }
  n.shape = {rows, cols};
  n.in0 = parts[0].id;
  if (parts.size() > 1) n.in1 = parts[1].id;
  for (std::size_t i = 2; i < parts.size(); ++i)
    n.extra.push_back(parts[i].id);
  n.value.resize(n.shape.size());
  int off = 0;
  for (Var p : parts) {
    const Node& np = nodes_[p.id];
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < np.shape.cols; ++j)
        n.value[static_cast<std::size_t>(i) * cols + off + j] =
            np.value[static_cast<std::size_t>(i) * np.shape.cols + j];
    off += np.shape.cols;
  }
  return {this, push(std::move(n))};
}

Var Tape::col_slice(Var a, int offset, int width) {
  const Node& na = nodes_[a.id];
  if (offset < 0 || width < 1 || offset + width > na.shape.cols)
    throw TapeError("col_slice: out of range");
  Node n;
  n.op = Op::ColSlice;
  n.shape = {na.shape.rows, width};
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.aux0 = offset;
  n.aux1 = width;
  n.value.resize(n.shape.size());
  for (int i = 0; i < na.shape.rows; ++i)
    for (int j = 0; j < width; ++j)
      n.value[static_cast<std::size_t>(i) * width + j] =
          na.value[static_cast<std::size_t>(i) * na.shape.cols + offset + j];
  return {this, push(std::move(n))};
}

Var Tape::pad_cols(Var a, int total_cols, int offset) {
  const Node& na = nodes_[a.id];
  if (offset < 0 || offset + na.shape.cols > total_cols)
    throw TapeError("pad_cols: out of range");
  Node n;
  n.op = Op::PadCols;
  n.shape = {na.shape.rows, total_cols};
  n.requires_grad = na.requires_grad;
  n.in0 = a.id;
  n.aux0 = offset;
  n.aux1 = na.shape.cols;
  n.value.assign(n.shape.size(), 0.0);
  for (int i = 0; i < na.shape.rows; ++i)
    for (int j = 0; j < na.shape.cols; ++j)
      n.value[static_cast<std::size_t>(i) * total_cols + offset + j] =
          na.value[static_cast<std::size_t>(i) * na.shape.cols + j];
  return {this, push(std::move(n))};
}

Var Tape::mean_all(Var a) {
  const int n = nodes_[a.id].shape.size();
  return div(sum_all(a), scalar(static_cast<double>(n)));
}

Var detach(Var v) {
  return v.tape->leaf(v.shape(), v.data(), false);
}

namespace {

// Reduce `adj` back to `target` shape after a broadcasting op.
Var reduce_to(Tape& t, Var adj, Shape target) {
  Shape s = adj.shape();
  if (s == target) return adj;
  if (target.rows == 1 && target.cols == 1) return t.sum_all(adj);
  if (target.rows == 1) return t.col_sum(adj);
  if (target.cols == 1) return t.row_sum(adj);
  throw TapeError("reduce_to: unsupported reduction");
}

}  // namespace

std::vector<Var> grad(Var output, std::span<const Var> wrt,
                      std::optional<Var> seed, bool* disconnected) {
  Tape& t = *output.tape;
  const std::int32_t n0 = output.id + 1;

  // Which nodes can reach a wrt leaf through differentiable links.
  std::vector<char> reach(n0, 0);
  for (Var w : wrt) {
    if (w.tape != &t) throw TapeError("grad: wrt on a different tape");
    if (w.id < n0) reach[w.id] = 1;
  }
  for (std::int32_t i = 0; i < n0; ++i) {
    const Node& nd = t.node(i);
    if (nd.op == Op::Leaf || nd.op == Op::Sign || nd.op == Op::Step) continue;
    bool r = (nd.in0 >= 0 && reach[nd.in0]) || (nd.in1 >= 0 && reach[nd.in1]);
    for (std::int32_t e : nd.extra) r = r || reach[e];
    if (r) reach[i] = 1;
  }

  if (!reach[output.id]) {
    if (disconnected) *disconnected = true;
    std::vector<Var> out;
    out.reserve(wrt.size());
    for (Var w : wrt) out.push_back(t.zeros(w.shape()));
    return out;
  }
  if (disconnected) *disconnected = false;

  std::vector<std::optional<Var>> adj(n0);
  adj[output.id] = seed ? *seed : t.ones(output.shape());
  if (adj[output.id]->shape() != output.shape())
    throw TapeError("grad: seed shape mismatch");

  auto accumulate = [&](std::int32_t id, Var contrib) {
    if (!reach[id]) return;
    contrib = reduce_to(t, contrib, t.node(id).shape);
    adj[id] = adj[id] ? t.add(*adj[id], contrib) : contrib;
  };

  for (std::int32_t i = output.id; i >= 0; --i) {
    if (!adj[i] || !reach[i]) continue;
    // Copy the structural fields; pushing adjoint nodes may reallocate.
    struct NodeView {
      Op op;
      std::int32_t in0, in1, aux0, aux1;
      std::vector<std::int32_t> extra;
    } nd;
    {
      const Node& src = t.node(i);
      nd = {src.op, src.in0, src.in1, src.aux0, src.aux1, src.extra};
    }
    if (nd.op == Op::Leaf) continue;
    Var a = nd.in0 >= 0 ? Var{&t, nd.in0} : Var{};
    Var b = nd.in1 >= 0 ? Var{&t, nd.in1} : Var{};
    Var g = *adj[i];
    Var y{&t, i};
    switch (nd.op) {
      case Op::Neg: accumulate(a.id, t.neg(g)); break;
      case Op::Log: accumulate(a.id, t.div(g, a)); break;
      case Op::Exp: accumulate(a.id, t.mul(g, y)); break;
      case Op::Sin: accumulate(a.id, t.mul(g, t.cos(a))); break;
      case Op::Cos: accumulate(a.id, t.neg(t.mul(g, t.sin(a)))); break;
      case Op::Sqrt:
        accumulate(a.id, t.div(g, t.mul(t.scalar(2.0), y)));
        break;
      case Op::Tanh:
        accumulate(a.id, t.mul(g, t.sub(t.scalar(1.0), t.mul(y, y))));
        break;
      case Op::Abs: accumulate(a.id, t.mul(g, t.sign(a))); break;
      case Op::Sigmoid:
        accumulate(a.id, t.mul(g, t.mul(y, t.sub(t.scalar(1.0), y))));
        break;
      case Op::Softplus: accumulate(a.id, t.mul(g, t.sigmoid(a))); break;
      case Op::Relu: accumulate(a.id, t.mul(g, t.step(a))); break;
      case Op::Sign:
      case Op::Step:
        break;
      case Op::Add:
        if (reach[a.id]) accumulate(a.id, g);
        if (reach[b.id]) accumulate(b.id, g);
        break;
      case Op::Sub:
        if (reach[a.id]) accumulate(a.id, g);
        if (reach[b.id]) accumulate(b.id, t.neg(g));
        break;
      case Op::Mul:
        if (reach[a.id]) accumulate(a.id, t.mul(g, b));
        if (reach[b.id]) accumulate(b.id, t.mul(g, a));
        break;
      case Op::Div:
        if (reach[a.id]) accumulate(a.id, t.div(g, b));
        if (reach[b.id]) accumulate(b.id, t.neg(t.div(t.mul(g, y), b)));
        break;
      case Op::Pow:
        if (reach[a.id])
          accumulate(a.id,
                     t.mul(g, t.mul(b, t.pow(a, t.sub(b, t.scalar(1.0))))));
        if (reach[b.id]) accumulate(b.id, t.mul(g, t.mul(y, t.log(a))));
        break;
      case Op::Matmul: {
        const bool ta = nd.aux0 & 1, tb = nd.aux0 & 2;
        if (reach[a.id]) {
          Var ga = !ta ? (!tb ? t.matmul(g, b, false, true)
                              : t.matmul(g, b, false, false))
                       : (!tb ? t.matmul(b, g, false, true)
                              : t.matmul(b, g, true, true));
          accumulate(a.id, ga);
        }
        if (reach[b.id]) {
          Var gb = !tb ? (!ta ? t.matmul(a, g, true, false)
                              : t.matmul(a, g, false, false))
                       : (!ta ? t.matmul(g, a, true, false)
                              : t.matmul(g, a, true, true));
          accumulate(b.id, gb);
        }
        break;
      }
      case Op::SumAll:
      case Op::ColSum:
      case Op::RowSum: {
        const Shape in_shape = t.node(a.id).shape;
        accumulate(a.id, t.broadcast_to(g, in_shape));
        break;
      }
      case Op::Broadcast:
        accumulate(a.id, g);  // accumulate() reduces to the input shape
        break;
      case Op::HStack: {
        std::vector<std::int32_t> ins;
        ins.push_back(nd.in0);
        if (nd.in1 >= 0) ins.push_back(nd.in1);
        for (std::int32_t e : nd.extra) ins.push_back(e);
        int off = 0;
        for (std::int32_t in : ins) {
          const int w = t.node(in).shape.cols;
          if (reach[in]) accumulate(in, t.col_slice(g, off, w));
          off += w;
        }
        break;
      }
      case Op::ColSlice:
        accumulate(a.id, t.pad_cols(g, t.node(a.id).shape.cols, nd.aux0));
        break;
      case Op::PadCols:
        accumulate(a.id, t.col_slice(g, nd.aux0, nd.aux1));
        break;
      case Op::Leaf:
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt)
    out.push_back(adj[w.id] ? *adj[w.id] : t.zeros(w.shape()));
  return out;
}

}  // namespace deqn
