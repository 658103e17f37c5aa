#include "diffmeta/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace diffmeta {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (&tape_of(b) != &t) throw std::invalid_argument("operands live on different tapes");
  return t;
}

bool is_scalar(const Matrix& m) { return m.size() == 1; }

// Shape of an elementwise binary result under scalar broadcast.
std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const Matrix& a, const Matrix& b,
                                                      OpKind kind) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {a.rows(), a.cols()};
  if (is_scalar(a)) return {b.rows(), b.cols()};
  if (is_scalar(b)) return {a.rows(), a.cols()};
  throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

// Sums a full-shape gradient back down to a (possibly scalar) operand.
Matrix reduce_to(const Matrix& g, const Matrix& operand) {
  if (operand.rows() == g.rows() && operand.cols() == g.cols()) return g;
  return Matrix::Constant(1, 1, g.sum());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix expand_bounds(const Vector& bound, const Matrix& a, const char* which) {
  if (bound.size() == 1) return Matrix::Constant(a.rows(), a.cols(), bound(0));
  if (bound.size() == a.size() && (a.cols() == 1 || a.rows() == 1)) {
    return bound.reshaped(a.rows(), a.cols());
  }
  if (bound.size() == a.cols()) return bound.transpose().replicate(a.rows(), 1);
  if (bound.size() == a.size()) return bound.reshaped(a.rows(), a.cols());
  throw std::invalid_argument(std::string("clamp: ") + which + " bound of size " +
                              std::to_string(bound.size()) + " does not fit " + shape_str(a));
}

void require_vector_like(const Matrix& m, const char* op) {
  if (m.rows() != 1 && m.cols() != 1) {
    throw std::invalid_argument(std::string(op) + ": expected a vector, got " + shape_str(m));
  }
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Parameter: return "parameter";
    case OpKind::Constant: return "constant";
    case OpKind::Neg: return "neg";
    case OpKind::Exp: return "exp";
    case OpKind::Expm1: return "expm1";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Square: return "square";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Abs: return "abs";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Pow: return "pow";
    case OpKind::Min: return "min";
    case OpKind::Max: return "max";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::MinIndex: return "min_with_index";
    case OpKind::MaxIndex: return "max_with_index";
    case OpKind::RowSum: return "row_sum";
    case OpKind::RowMean: return "row_mean";
    case OpKind::RowSoftmax: return "softmax";
    case OpKind::RowNoisyOr: return "row_noisy_or";
    case OpKind::MatVec: return "matvec";
    case OpKind::MatMul: return "matmul";
    case OpKind::LowerTriMatMul: return "lower_tri_matvec";
    case OpKind::Outer: return "outer";
    case OpKind::Transpose: return "transpose";
    case OpKind::Clamp: return "clamp";
    case OpKind::Detach: return "detach";
    case OpKind::StraightThrough: return "straight_through";
    case OpKind::BroadcastRows: return "broadcast_rows";
    case OpKind::BroadcastCols: return "broadcast_cols";
    case OpKind::AddRowVector: return "add_row_vector";
    case OpKind::Row: return "row";
    case OpKind::MiddleCols: return "middle_cols";
    case OpKind::Segment: return "segment";
    case OpKind::Reshape: return "reshape";
    case OpKind::ConcatRows: return "concat_rows";
  }
  return "?";
}

// ---- Var ----------------------------------------------------------------

const Matrix& Var::value() const { return tape_of(*this).node(id_).value; }

Matrix Var::grad() const {
  const auto& n = tape_of(*this).node(id_);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Var::has_grad() const { return tape_of(*this).node(id_).grad.size() != 0; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("scalar(): Var has shape " + shape_str(v));
  return v(0, 0);
}

bool Var::trainable() const {
  return tape_of(*this).node(id_).kind == OpKind::Parameter;
}

bool Var::requires_grad() const { return tape_of(*this).node(id_).requires_grad; }

void Var::set_value(const Matrix& value) const {
  auto& n = tape_of(*this).node(id_);
  if (n.kind != OpKind::Parameter) throw std::logic_error("set_value on a non-parameter node");
  if (value.rows() != n.value.rows() || value.cols() != n.value.cols()) {
    throw std::invalid_argument("set_value: shape " + shape_str(value) + " != " +
                                shape_str(n.value));
  }
  n.value = value;
}

// ---- Tape ---------------------------------------------------------------

Var Tape::parameter(Matrix value, std::string name) {
  if (nodes_.size() != num_params_) {
    throw std::logic_error("parameters must be registered before any other node");
  }
  Node n;
  n.kind = OpKind::Parameter;
  n.value = std::move(value);
  n.requires_grad = true;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  ++num_params_;
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(OpKind::Constant, {}, std::move(value)); }

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::push(OpKind kind, std::vector<std::size_t> parents, Matrix value) {
  Node n;
  n.kind = kind;
  for (auto p : parents) {
    if (p >= nodes_.size()) throw std::logic_error("parent id out of range");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::vector<Var> Tape::parameters() {
  std::vector<Var> out;
  out.reserve(num_params_);
  for (std::size_t i = 0; i < num_params_; ++i) out.emplace_back(this, i);
  return out;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.resize(0, 0);
}

void Tape::reset() {
  nodes_.resize(num_params_);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
  const Node& ln = nodes_.at(loss.id());
  if (ln.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(ln.value));
  }
  for (std::size_t i = num_params_; i < nodes_.size(); ++i) nodes_[i].grad.resize(0, 0);
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > num_params_;) {
    if (nodes_[i].grad.size() != 0 && nodes_[i].requires_grad) propagate(i);
  }
}

void Tape::propagate(std::size_t id) {
  // Copies keep references valid while accumulate() touches other nodes.
  const Node& n = nodes_[id];
  const Matrix& g = n.grad;
  const Matrix& out = n.value;
  auto parent = [&](std::size_t k) -> const Matrix& { return nodes_[n.parents[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
  auto send = [&](std::size_t k, const Matrix& m) {
    if (wants(k)) accumulate(n.parents[k], m);
  };

  switch (n.kind) {
    case OpKind::Parameter:
    case OpKind::Constant:
    case OpKind::Detach:
      return;

    case OpKind::Neg: send(0, -g); return;
    case OpKind::Exp: send(0, g.cwiseProduct(out)); return;
    case OpKind::Expm1: send(0, g.array() * (out.array() + 1.0)); return;
    case OpKind::Log: send(0, g.array() / parent(0).array()); return;
    case OpKind::Sqrt: send(0, g.array() * 0.5 / out.array()); return;
    case OpKind::Square: send(0, 2.0 * g.array() * parent(0).array()); return;
    case OpKind::Sin: send(0, g.array() * parent(0).array().cos()); return;
    case OpKind::Cos: send(0, -g.array() * parent(0).array().sin()); return;
    case OpKind::Tanh: send(0, g.array() * (1.0 - out.array().square())); return;
    case OpKind::Sigmoid: send(0, g.array() * out.array() * (1.0 - out.array())); return;
    case OpKind::Abs: send(0, g.array() * parent(0).array().sign()); return;

    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Pow:
    case OpKind::Min:
    case OpKind::Max: {
      const Matrix& a0 = parent(0);
      const Matrix& b0 = parent(1);
      const Eigen::Index r = out.rows(), c = out.cols();
      const Matrix a = expand(a0, r, c);
      const Matrix b = expand(b0, r, c);
      Matrix da, db;
      switch (n.kind) {
        case OpKind::Add: da = g; db = g; break;
        case OpKind::Sub: da = g; db = -g; break;
        case OpKind::Mul: da = g.cwiseProduct(b); db = g.cwiseProduct(a); break;
        case OpKind::Div:
          da = g.array() / b.array();
          db = -g.array() * a.array() / b.array().square();
          break;
        case OpKind::Pow:
          if (wants(0)) {
            da = g.array() * b.array() * a.array().pow(b.array() - 1.0);
          }
          if (wants(1)) {
            db = g.array() * out.array() *
                 a.array().unaryExpr([](double x) { return x > 0.0 ? std::log(x) : 0.0; });
          }
          break;
        case OpKind::Min:
          da = (a.array() <= b.array()).cast<double>() * g.array();
          db = g - da;
          break;
        case OpKind::Max:
          da = (a.array() >= b.array()).cast<double>() * g.array();
          db = g - da;
          break;
        default: break;
      }
      if (wants(0)) send(0, reduce_to(da, a0));
      if (wants(1)) send(1, reduce_to(db, b0));
      return;
    }

    case OpKind::Sum:
      send(0, Matrix::Constant(parent(0).rows(), parent(0).cols(), g(0, 0)));
      return;
    case OpKind::Mean: {
      const Matrix& a = parent(0);
      send(0, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      return;
    }
    case OpKind::MinIndex:
    case OpKind::MaxIndex: {
      const Matrix& a = parent(0);
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      d(n.index) = g(0, 0);
      send(0, d);
      return;
    }
    case OpKind::RowSum: send(0, g.replicate(1, parent(0).cols())); return;
    case OpKind::RowMean:
      send(0, g.replicate(1, parent(0).cols()) / static_cast<double>(parent(0).cols()));
      return;
    case OpKind::RowSoftmax: {
      Matrix d(out.rows(), out.cols());
      if (n.index == 1) {  // single distribution stored as a column
        const double dot = g.cwiseProduct(out).sum();
        d = out.array() * (g.array() - dot);
      } else {
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
          const double dot = g.row(i).dot(out.row(i));
          d.row(i) = out.row(i).array() * (g.row(i).array() - dot);
        }
      }
      send(0, d);
      return;
    }
    case OpKind::RowNoisyOr: {
      const Matrix& a = parent(0);
      Matrix d(a.rows(), a.cols());
      const Eigen::Index cols = a.cols();
      std::vector<double> suffix(static_cast<std::size_t>(cols) + 1);
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        suffix[cols] = 1.0;
        for (Eigen::Index j = cols; j-- > 0;) suffix[j] = suffix[j + 1] * (1.0 - a(i, j));
        double prefix = 1.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
          d(i, j) = g(i, 0) * prefix * suffix[j + 1];
          prefix *= 1.0 - a(i, j);
        }
      }
      send(0, d);
      return;
    }

    case OpKind::MatVec:
    case OpKind::MatMul: {
      const Matrix& a = parent(0);
      const Matrix& b = parent(1);
      if (wants(0)) send(0, g * b.transpose());
      if (wants(1)) send(1, a.transpose() * g);
      return;
    }
    case OpKind::LowerTriMatMul: {
      const Matrix& l = parent(0);
      const Matrix& b = parent(1);
      if (wants(0)) {
        Matrix dl = Matrix::Zero(l.rows(), l.cols());
        dl.triangularView<Eigen::Lower>() = g * b.transpose();
        send(0, dl);
      }
      if (wants(1)) {
        send(1, l.triangularView<Eigen::Lower>().transpose() * g);
      }
      return;
    }
    case OpKind::Outer: {
      const Matrix& a = parent(0);
      const Matrix& b = parent(1);
      const Vector av = a.reshaped();
      const Vector bv = b.reshaped();
      if (wants(0)) send(0, (g * bv).reshaped(a.rows(), a.cols()));
      if (wants(1)) send(1, (g.transpose() * av).reshaped(b.rows(), b.cols()));
      return;
    }
    case OpKind::Transpose: send(0, g.transpose()); return;

    case OpKind::Clamp: {
      const Matrix& a = parent(0);
      const auto inside = (a.array() > n.aux.array()) && (a.array() < n.aux2.array());
      send(0, inside.cast<double>() * g.array());
      return;
    }
    case OpKind::StraightThrough: send(1, g); return;
    case OpKind::BroadcastRows: {
      const Matrix& v = parent(0);
      send(0, g.colwise().sum().reshaped(v.rows(), v.cols()));
      return;
    }
    case OpKind::BroadcastCols: send(0, g.rowwise().sum()); return;
    case OpKind::AddRowVector: {
      const Matrix& b = parent(1);
      send(0, g);
      if (wants(1)) send(1, g.colwise().sum().reshaped(b.rows(), b.cols()));
      return;
    }
    case OpKind::Row: {
      const Matrix& a = parent(0);
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      d.row(n.index) = g;
      send(0, d);
      return;
    }
    case OpKind::MiddleCols: {
      const Matrix& a = parent(0);
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      d.middleCols(n.index, n.index2) = g;
      send(0, d);
      return;
    }
    case OpKind::Segment: {
      const Matrix& v = parent(0);
      Matrix d = Matrix::Zero(v.rows(), v.cols());
      d.reshaped().segment(n.index, n.index2) = g.reshaped();
      send(0, d);
      return;
    }
    case OpKind::Reshape: {
      const Matrix& v = parent(0);
      // value(i, j) = v[i * cols + j]  <=>  v = (value^T) flattened column-major
      const Matrix gt = g.transpose();
      send(0, gt.reshaped(v.rows(), v.cols()));
      return;
    }
    case OpKind::ConcatRows: {
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const Matrix& p = parent(k);
        if (wants(k)) send(k, g.row(static_cast<Eigen::Index>(k)).reshaped(p.rows(), p.cols()));
      }
      return;
    }
  }
}

// ---- Param --------------------------------------------------------------

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inverse(double y) {
  if (y <= 0.0) throw std::domain_error("softplus_inverse: value must be positive");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

Param::Param(Tape& tape, Matrix raw, std::string name, Reparam tag)
    : tag_(tag), name_(name) {
  raw_ = tape.parameter(std::move(raw), std::move(name));
}

Var Param::read() const {
  switch (tag_) {
    case Reparam::Identity: return raw_;
    case Reparam::Exp: return exp(raw_);
    case Reparam::Softplus:
      return max(raw_, 0.0 * raw_) + log(1.0 + exp(neg(abs(raw_))));
  }
  return raw_;
}

Matrix Param::value() const {
  const Matrix& r = raw_.value();
  switch (tag_) {
    case Reparam::Identity: return r;
    case Reparam::Exp: return r.array().exp();
    case Reparam::Softplus: return r.unaryExpr([](double x) { return softplus(x); });
  }
  return r;
}

void Param::assign(const Matrix& value) const {
  switch (tag_) {
    case Reparam::Identity: raw_.set_value(value); return;
    case Reparam::Exp:
      if ((value.array() <= 0.0).any()) {
        throw std::domain_error("parameter '" + name_ + "' requires positive values");
      }
      raw_.set_value(value.array().log().matrix());
      return;
    case Reparam::Softplus:
      raw_.set_value(value.unaryExpr([](double y) { return softplus_inverse(y); }));
      return;
  }
}

// ---- elementwise --------------------------------------------------------

namespace {

Var unary(OpKind kind, const Var& a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y;
  switch (kind) {
    case OpKind::Neg: y = -x; break;
    case OpKind::Exp: y = x.array().exp(); break;
    case OpKind::Expm1: y = x.unaryExpr([](double v) { return std::expm1(v); }); break;
    case OpKind::Log:
      if ((x.array() < 0.0).any()) throw std::domain_error("log of a negative value");
      y = x.array().log();
      break;
    case OpKind::Sqrt:
      if ((x.array() < 0.0).any()) throw std::domain_error("sqrt of a negative value");
      y = x.array().sqrt();
      break;
    case OpKind::Square: y = x.array().square(); break;
    case OpKind::Sin: y = x.array().sin(); break;
    case OpKind::Cos: y = x.array().cos(); break;
    case OpKind::Tanh: y = x.array().tanh(); break;
    case OpKind::Sigmoid: y = x.unaryExpr([](double v) { return stable_sigmoid(v); }); break;
    case OpKind::Abs: y = x.array().abs(); break;
    default: throw std::logic_error("not a unary op");
  }
  return t.push(kind, {a.id()}, std::move(y));
}

Var binary(OpKind kind, const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& x0 = a.value();
  const Matrix& y0 = b.value();
  const auto [r, c] = broadcast_shape(x0, y0, kind);
  const Matrix x = expand(x0, r, c);
  const Matrix y = expand(y0, r, c);
  Matrix z;
  switch (kind) {
    case OpKind::Add: z = x + y; break;
    case OpKind::Sub: z = x - y; break;
    case OpKind::Mul: z = x.cwiseProduct(y); break;
    case OpKind::Div:
      if ((y.array() == 0.0).any()) throw std::domain_error("division by exact zero");
      z = x.array() / y.array();
      break;
    case OpKind::Pow:
      if (b.requires_grad() && (x.array() < 0.0).any()) {
        throw std::domain_error("pow: negative base with a differentiable exponent");
      }
      z = x.array().pow(y.array());
      break;
    case OpKind::Min: z = x.cwiseMin(y); break;
    case OpKind::Max: z = x.cwiseMax(y); break;
    default: throw std::logic_error("not a binary op");
  }
  return t.push(kind, {a.id(), b.id()}, std::move(z));
}

Var lift(const Var& like, double v) { return tape_of(like).constant(v); }

}  // namespace

Var neg(const Var& a) { return unary(OpKind::Neg, a); }
Var exp(const Var& a) { return unary(OpKind::Exp, a); }
Var expm1(const Var& a) { return unary(OpKind::Expm1, a); }
Var log(const Var& a) { return unary(OpKind::Log, a); }
Var sqrt(const Var& a) { return unary(OpKind::Sqrt, a); }
Var square(const Var& a) { return unary(OpKind::Square, a); }
Var sin(const Var& a) { return unary(OpKind::Sin, a); }
Var cos(const Var& a) { return unary(OpKind::Cos, a); }
Var tanh(const Var& a) { return unary(OpKind::Tanh, a); }
Var sigmoid(const Var& a) { return unary(OpKind::Sigmoid, a); }
Var abs(const Var& a) { return unary(OpKind::Abs, a); }

Var add(const Var& a, const Var& b) { return binary(OpKind::Add, a, b); }
Var sub(const Var& a, const Var& b) { return binary(OpKind::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(OpKind::Mul, a, b); }
Var div(const Var& a, const Var& b) { return binary(OpKind::Div, a, b); }
Var pow(const Var& a, const Var& b) { return binary(OpKind::Pow, a, b); }
Var pow(const Var& a, double exponent) { return binary(OpKind::Pow, a, lift(a, exponent)); }
Var min(const Var& a, const Var& b) { return binary(OpKind::Min, a, b); }
Var max(const Var& a, const Var& b) { return binary(OpKind::Max, a, b); }

Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator+(const Var& a, double b) { return add(a, lift(a, b)); }
Var operator+(double a, const Var& b) { return add(lift(b, a), b); }
Var operator-(const Var& a, double b) { return sub(a, lift(a, b)); }
Var operator-(double a, const Var& b) { return sub(lift(b, a), b); }
Var operator*(const Var& a, double b) { return mul(a, lift(a, b)); }
Var operator*(double a, const Var& b) { return mul(lift(b, a), b); }
Var operator/(const Var& a, double b) { return div(a, lift(a, b)); }
Var operator/(double a, const Var& b) { return div(lift(b, a), b); }

// ---- reductions ---------------------------------------------------------

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  if (a.size() == 0) throw std::invalid_argument("sum of an empty Var");
  return t.push(OpKind::Sum, {a.id()}, Matrix::Constant(1, 1, a.value().sum()));
}

Var mean(const Var& a) {
  Tape& t = tape_of(a);
  if (a.size() == 0) throw std::invalid_argument("mean of an empty Var");
  return t.push(OpKind::Mean, {a.id()}, Matrix::Constant(1, 1, a.value().mean()));
}

namespace {

Var extremum(OpKind kind, const Var& a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.size() == 0) throw std::invalid_argument(std::string(op_name(kind)) + " of an empty Var");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < x.size(); ++i) {
    const bool better = kind == OpKind::MinIndex ? x(i) < x(best) : x(i) > x(best);
    if (better) best = i;
  }
  Var out = t.push(kind, {a.id()}, Matrix::Constant(1, 1, x(best)));
  t.node(out.id()).index = best;
  return out;
}

}  // namespace

Var min_with_index(const Var& a) { return extremum(OpKind::MinIndex, a); }
Var max_with_index(const Var& a) { return extremum(OpKind::MaxIndex, a); }

Eigen::Index reduced_index(const Var& reduced) {
  const auto& n = tape_of(reduced).node(reduced.id());
  if (n.kind != OpKind::MinIndex && n.kind != OpKind::MaxIndex) {
    throw std::invalid_argument("reduced_index: Var is not a min/max reduction");
  }
  return n.index;
}

Var row_sum(const Var& a) {
  return tape_of(a).push(OpKind::RowSum, {a.id()}, a.value().rowwise().sum());
}

Var row_mean(const Var& a) {
  if (a.cols() == 0) throw std::invalid_argument("row_mean of a Var with no columns");
  return tape_of(a).push(OpKind::RowMean, {a.id()}, a.value().rowwise().mean());
}

Var softmax(const Var& a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.size() == 0) throw std::invalid_argument("softmax of an empty Var");
  const bool column = x.cols() == 1;
  Matrix p(x.rows(), x.cols());
  auto normalize = [](auto&& in, auto&& out) {
    const double m = in.maxCoeff();
    out = (in.array() - m).exp();
    out /= out.sum();
  };
  if (column) {
    normalize(x.col(0), p.col(0));
  } else {
    for (Eigen::Index i = 0; i < x.rows(); ++i) normalize(x.row(i), p.row(i));
  }
  Var out = t.push(OpKind::RowSoftmax, {a.id()}, std::move(p));
  t.node(out.id()).index = column ? 1 : 0;
  return out;
}

Var row_noisy_or(const Var& a) {
  const Matrix& x = a.value();
  Matrix q(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) acc += (1.0 - acc) * x(i, j);
    q(i, 0) = acc;
  }
  return tape_of(a).push(OpKind::RowNoisyOr, {a.id()}, std::move(q));
}

// ---- linear algebra -----------------------------------------------------

Var matvec(const Var& a, const Var& x) {
  Tape& t = tape_of(a, x);
  if (x.cols() != 1 || a.cols() != x.rows()) {
    throw std::invalid_argument("matvec: dimension mismatch " + shape_str(a.value()) + " * " +
                                shape_str(x.value()));
  }
  return t.push(OpKind::MatVec, {a.id(), x.id()}, a.value() * x.value());
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.value()) + " * " +
                                shape_str(b.value()));
  }
  return t.push(OpKind::MatMul, {a.id(), b.id()}, a.value() * b.value());
}

Var lower_tri_matvec(const Var& l, const Var& b) {
  Tape& t = tape_of(l, b);
  if (l.rows() != l.cols() || l.cols() != b.rows()) {
    throw std::invalid_argument("lower_tri_matvec: dimension mismatch " + shape_str(l.value()) +
                                " * " + shape_str(b.value()));
  }
  Matrix y = l.value().triangularView<Eigen::Lower>() * b.value();
  return t.push(OpKind::LowerTriMatMul, {l.id(), b.id()}, std::move(y));
}

Var outer(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_vector_like(a.value(), "outer");
  require_vector_like(b.value(), "outer");
  Matrix y = a.value().reshaped() * b.value().reshaped().transpose();
  return t.push(OpKind::Outer, {a.id(), b.id()}, std::move(y));
}

Var transpose(const Var& a) {
  return tape_of(a).push(OpKind::Transpose, {a.id()}, a.value().transpose());
}

// ---- structure ----------------------------------------------------------

Var clamp(const Var& a, const Vector& lo, const Vector& hi) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix l = expand_bounds(lo, x, "lower");
  Matrix h = expand_bounds(hi, x, "upper");
  if ((l.array() > h.array()).any()) throw std::invalid_argument("clamp: lo > hi");
  Matrix y = x.cwiseMax(l).cwiseMin(h);
  Var out = t.push(OpKind::Clamp, {a.id()}, std::move(y));
  auto& n = t.node(out.id());
  n.aux = std::move(l);
  n.aux2 = std::move(h);
  return out;
}

Var clamp(const Var& a, double lo, double hi) {
  return clamp(a, Vector::Constant(1, lo), Vector::Constant(1, hi));
}

Var detach(const Var& a) {
  Tape& t = tape_of(a);
  Var out = t.push(OpKind::Detach, {a.id()}, a.value());
  t.node(out.id()).requires_grad = false;
  return out;
}

Var straight_through(const Var& hard, const Var& soft) {
  Tape& t = tape_of(hard, soft);
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
    throw std::invalid_argument("straight_through: shape mismatch " + shape_str(hard.value()) +
                                " vs " + shape_str(soft.value()));
  }
  Var out = t.push(OpKind::StraightThrough, {hard.id(), soft.id()}, hard.value());
  t.node(out.id()).requires_grad = soft.requires_grad();
  return out;
}

Var broadcast_rows(const Var& v, Eigen::Index n) {
  const Matrix& x = v.value();
  require_vector_like(x, "broadcast_rows");
  RowVector r = x.reshaped().transpose();
  return tape_of(v).push(OpKind::BroadcastRows, {v.id()}, r.replicate(n, 1));
}

Var broadcast_cols(const Var& v, Eigen::Index d) {
  const Matrix& x = v.value();
  if (x.cols() != 1) throw std::invalid_argument("broadcast_cols: expected a column vector");
  return tape_of(v).push(OpKind::BroadcastCols, {v.id()}, x.replicate(1, d));
}

Var add_row_vector(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_vector_like(b.value(), "add_row_vector");
  if (b.size() != a.cols()) {
    throw std::invalid_argument("add_row_vector: " + shape_str(a.value()) + " + row of " +
                                std::to_string(b.size()));
  }
  Matrix y = a.value().rowwise() + b.value().reshaped().transpose();
  return t.push(OpKind::AddRowVector, {a.id(), b.id()}, std::move(y));
}

Var row(const Var& a, Eigen::Index i) {
  if (i < 0 || i >= a.rows()) throw std::out_of_range("row: index out of range");
  Var out = tape_of(a).push(OpKind::Row, {a.id()}, a.value().row(i));
  a.tape()->node(out.id()).index = i;
  return out;
}

Var middle_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("middle_cols: range out of bounds");
  }
  Var out = tape_of(a).push(OpKind::MiddleCols, {a.id()}, a.value().middleCols(start, count));
  auto& n = a.tape()->node(out.id());
  n.index = start;
  n.index2 = count;
  return out;
}

Var segment(const Var& v, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = v.value();
  require_vector_like(x, "segment");
  if (start < 0 || count < 0 || start + count > x.size()) {
    throw std::out_of_range("segment: range out of bounds");
  }
  Matrix y = x.reshaped().segment(start, count);
  if (x.rows() == 1) y.transposeInPlace();
  Var out = tape_of(v).push(OpKind::Segment, {v.id()}, std::move(y));
  auto& n = v.tape()->node(out.id());
  n.index = start;
  n.index2 = count;
  return out;
}

Var reshape(const Var& v, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& x = v.value();
  require_vector_like(x, "reshape");
  if (rows * cols != x.size()) {
    throw std::invalid_argument("reshape: " + std::to_string(x.size()) + " entries into " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix y = x.reshaped(cols, rows).transpose();
  return tape_of(v).push(OpKind::Reshape, {v.id()}, std::move(y));
}

Var concat_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("concat_rows: no rows");
  Tape& t = tape_of(rows.front());
  const Eigen::Index c = rows.front().size();
  Matrix y(static_cast<Eigen::Index>(rows.size()), c);
  std::vector<std::size_t> parents;
  parents.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (&tape_of(rows[k]) != &t) throw std::invalid_argument("concat_rows: mixed tapes");
    const Matrix& x = rows[k].value();
    require_vector_like(x, "concat_rows");
    if (x.size() != c) throw std::invalid_argument("concat_rows: ragged rows");
    y.row(static_cast<Eigen::Index>(k)) = x.reshaped().transpose();
    parents.push_back(rows[k].id());
  }
  return t.push(OpKind::ConcatRows, std::move(parents), std::move(y));
}

}  // namespace diffmeta
