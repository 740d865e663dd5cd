#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Matrix-valued computation record. Values are evaluated eagerly; the graph
// is retained so that reverse sweeps can be taken repeatedly. Gradients are
// built out of ordinary tape operations, so any derivative is itself
// differentiable (nested input-derivatives, then parameter gradients through
// them).

namespace deqn {

struct Shape {
  int rows = 1;
  int cols = 1;
  int size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

enum class Op : std::uint8_t {
  Leaf,
  Neg,
  Log,
  Exp,
  Sin,
  Cos,
  Sqrt,
  Tanh,
  Abs,
  Sigmoid,
  Softplus,
  Relu,
  Sign,  // derivative treated as zero
  Step,  // x > 0 ? 1 : 0, derivative treated as zero
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Matmul,
  SumAll,
  ColSum,
  RowSum,
  Broadcast,
  HStack,
  ColSlice,
  PadCols,
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  Shape shape() const;
  std::span<const double> data() const;
  // Scalar accessor, requires a 1x1 value.
  double item() const;
};

struct Node {
  Op op = Op::Leaf;
  Shape shape;
  bool requires_grad = false;
  std::int32_t in0 = -1, in1 = -1;
  std::vector<std::int32_t> extra;  // HStack inputs beyond the first two
  std::int32_t aux0 = 0, aux1 = 0;  // matmul flags / slice offset+width
  std::vector<double> value;
};

class TapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape {
 public:
  Var leaf(Shape s, std::span<const double> data, bool requires_grad);
  Var scalar(double v);
  Var ones(Shape s);
  Var zeros(Shape s, bool requires_grad = false);
  Var full(Shape s, double v);

  Var neg(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var sqrt(Var a);
  Var tanh(Var a);
  Var abs(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var relu(Var a);
  Var sign(Var a);
  Var step(Var a);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var pow(Var a, Var b);

  Var matmul(Var a, Var b, bool ta = false, bool tb = false);
  Var sum_all(Var a);
  Var col_sum(Var a);
  Var row_sum(Var a);
  Var broadcast_to(Var a, Shape s);
  Var hstack(std::span<const Var> parts);
  Var col_slice(Var a, int offset, int width);
  Var pad_cols(Var a, int total_cols, int offset);

  // Composites.
  Var silu(Var a) { return mul(a, sigmoid(a)); }
  Var mean_all(Var a);
  Var square(Var a) { return mul(a, a); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::int32_t id) const { return nodes_[id]; }
  void clear() { nodes_.clear(); }

  // Overwrite a leaf's value in place (used when re-binding parameters for a
  // line-search closure is not desired).
  void set_leaf_value(Var v, std::span<const double> data);

 private:
  friend struct Var;
  friend std::vector<Var> grad(Var, std::span<const Var>, std::optional<Var>,
                               bool*);

  std::int32_t push(Node n);
  Var unary(Op op, Var a);
  Var binary(Op op, Var a, Var b);

  std::vector<Node> nodes_;
};

// Reverse sweep from `output`, seeded with `seed` (defaults to ones of the
// output shape). Returns one Var per entry of `wrt`; entries the output does
// not depend on are zeros. If `disconnected` is given it is set when every
// entry of `wrt` is unreachable.
std::vector<Var> grad(Var output, std::span<const Var> wrt,
                      std::optional<Var> seed = std::nullopt,
                      bool* disconnected = nullptr);

// Detached copy: same value, no lineage.
Var detach(Var v);

inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator+(Var a, double b) { return a + a.tape->scalar(b); }
inline Var operator-(Var a, double b) { return a - a.tape->scalar(b); }
inline Var operator*(Var a, double b) { return a * a.tape->scalar(b); }
inline Var operator/(Var a, double b) { return a / a.tape->scalar(b); }
inline Var operator+(double a, Var b) { return b.tape->scalar(a) + b; }
inline Var operator-(double a, Var b) { return b.tape->scalar(a) - b; }
inline Var operator*(double a, Var b) { return b.tape->scalar(a) * b; }
inline Var operator/(double a, Var b) { return b.tape->scalar(a) / b; }

}  // namespace deqn
