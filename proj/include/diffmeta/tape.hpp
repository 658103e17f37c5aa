#pragma once

// Dense reverse-mode automatic differentiation over double matrices.
//
// A Tape is an append-only arena of nodes. Trainable parameters occupy the
// first node ids and survive `reset()`; everything recorded after them is
// discarded on reset. Node ids are assigned in creation order, so a node's
// parents always have smaller ids and the backward sweep is a reverse scan.
// Nodes live in a deque, so references returned by Var::value() stay valid
// while further ops are recorded.
//
// Vectors are column matrices (rows x 1). Elementwise binary ops accept equal
// shapes or a 1x1 operand (scalar broadcast); any other replication must go
// through the explicit broadcast ops.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <string>
#include <vector>

namespace diffmeta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

class Tape;

enum class OpKind : std::uint8_t {
  Parameter,
  Constant,
  // unary elementwise
  Neg,
  Exp,
  Expm1,
  Log,
  Sqrt,
  Square,
  Sin,
  Cos,
  Tanh,
  Sigmoid,
  Abs,
  // binary elementwise (scalar broadcast)
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Min,
  Max,
  // reductions
  Sum,
  Mean,
  MinIndex,
  MaxIndex,
  RowSum,
  RowMean,
  RowSoftmax,
  RowNoisyOr,
  // linear algebra
  MatVec,
  MatMul,
  LowerTriMatMul,
  Outer,
  Transpose,
  // structure
  Clamp,
  Detach,
  StraightThrough,
  BroadcastRows,
  BroadcastCols,
  AddRowVector,
  Row,
  MiddleCols,
  Segment,
  Reshape,
  ConcatRows,
};

const char* op_name(OpKind kind);

/// Handle to a node on a tape. Cheap to copy; valid until the tape is reset
/// (parameters stay valid across resets).
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  /// Gradient buffer; a zero matrix of the value's shape if none was accumulated.
  Matrix grad() const;
  bool has_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  bool is_scalar() const { return size() == 1; }
  double scalar() const;
  bool trainable() const;
  bool requires_grad() const;

  /// Overwrites the stored value of a parameter node. Shape must match.
  void set_value(const Matrix& value) const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  /// Registers a trainable parameter. Only allowed while the tape holds
  /// nothing but parameters.
  Var parameter(Matrix value, std::string name = {});
  Var constant(Matrix value);
  Var constant(double value);

  /// Reverse sweep from a scalar loss. Parameter gradients accumulate across
  /// calls until `zero_grad`; intermediate gradients are recomputed each call.
  void backward(const Var& loss);
  void zero_grad();
  /// Drops every non-parameter node.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  std::size_t parameter_count() const { return num_params_; }
  std::vector<Var> parameters();

  // Node accessors used by Var and the op implementations.
  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> parents;
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;
    // op payload
    Matrix aux;   // clamp bounds (lo) / masks
    Matrix aux2;  // clamp bounds (hi)
    double scalar = 0.0;
    Eigen::Index index = 0;
    Eigen::Index index2 = 0;
    std::string name;
  };

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }

  /// Appends an op node; `requires_grad` is inferred from the parents.
  Var push(OpKind kind, std::vector<std::size_t> parents, Matrix value);

 private:
  void accumulate(std::size_t id, const Matrix& g);
  void propagate(std::size_t id);

  std::deque<Node> nodes_;
  std::size_t num_params_ = 0;
};

/// Reparameterization applied when a parameter is read.
enum class Reparam : std::uint8_t { Identity, Exp, Softplus };

/// A trainable tape variable plus a positivity transform applied on read.
class Param {
 public:
  Param() = default;
  Param(Tape& tape, Matrix raw, std::string name, Reparam tag = Reparam::Identity);

  /// Records the transformed value on the tape (identity returns the raw node).
  Var read() const;
  /// Transformed value computed off-tape.
  Matrix value() const;
  const Var& raw() const { return raw_; }
  Reparam tag() const { return tag_; }
  const std::string& name() const { return name_; }
  /// Stores a new transformed value by inverting the reparameterization.
  void assign(const Matrix& value) const;

 private:
  Var raw_;
  Reparam tag_ = Reparam::Identity;
  std::string name_;
};

double softplus(double x);
double softplus_inverse(double y);

// ---- elementwise --------------------------------------------------------

Var neg(const Var& a);
Var exp(const Var& a);
Var expm1(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var pow(const Var& a, const Var& b);
Var pow(const Var& a, double exponent);
Var min(const Var& a, const Var& b);
Var max(const Var& a, const Var& b);

Var operator-(const Var& a);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

// ---- reductions ---------------------------------------------------------

Var sum(const Var& a);
Var mean(const Var& a);
/// Scalar minimum; the winning index (lowest on ties, column-major) is kept
/// on the node and the full incoming gradient is routed to it.
Var min_with_index(const Var& a);
Var max_with_index(const Var& a);
/// Index recorded by min_with_index / max_with_index.
Eigen::Index reduced_index(const Var& reduced);
/// rows x cols -> rows x 1
Var row_sum(const Var& a);
Var row_mean(const Var& a);
/// Softmax along each row. A column vector is treated as a single
/// distribution over its entries.
Var softmax(const Var& a);
/// Row-wise 1 - prod_j (1 - a_ij), evaluated without cancellation for small a.
Var row_noisy_or(const Var& a);

// ---- linear algebra -----------------------------------------------------

Var matvec(const Var& a, const Var& x);
Var matmul(const Var& a, const Var& b);
/// tril(l) * b; the strictly upper part of `l` is ignored and gets no gradient.
Var lower_tri_matvec(const Var& l, const Var& b);
Var outer(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- structure ----------------------------------------------------------

/// Bounds are scalars (size 1), per-column (size == cols) or full (size == size).
Var clamp(const Var& a, const Vector& lo, const Vector& hi);
Var clamp(const Var& a, double lo, double hi);
Var detach(const Var& a);
/// Forward value of `hard`, gradient routed entirely to `soft`.
Var straight_through(const Var& hard, const Var& soft);
/// Replicates a row (1 x d) or column vector (d x 1) into n x d.
Var broadcast_rows(const Var& v, Eigen::Index n);
/// Replicates a column (n x 1) into n x d.
Var broadcast_cols(const Var& v, Eigen::Index d);
/// a + 1 * b^T where b is a row (1 x cols) or column vector (cols x 1).
Var add_row_vector(const Var& a, const Var& b);
Var row(const Var& a, Eigen::Index i);
Var middle_cols(const Var& a, Eigen::Index start, Eigen::Index count);
/// Contiguous slice of a vector / row in storage order.
Var segment(const Var& v, Eigen::Index start, Eigen::Index count);
/// Reinterprets a vector (or row) as rows x cols filled row-major.
Var reshape(const Var& v, Eigen::Index rows, Eigen::Index cols);
/// Stacks 1 x c rows (or scalars) into an n x c matrix.
Var concat_rows(const std::vector<Var>& rows);

}  // namespace diffmeta
