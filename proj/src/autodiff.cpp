#include "t3dqa/autodiff.hpp"

#include "t3dqa/common.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace t3dqa::ad {

std::uint64_t digest_matrix(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a64(&*"M", 1, h);
  const std::int64_t r = m.rows(), c = m.cols();
  h = fnv1a64(&r, sizeof r, h);
  h = fnv1a64(&c, sizeof c, h);
  if (m.size() > 0) h = fnv1a64(m.data(), sizeof(double) * m.size(), h);
  return h;
}

std::uint64_t Parameter::digest() const {
  std::uint64_t h = fnv1a64(name);
  return digest_matrix(value) ^ h;
}

const Matrix& Var::value() const { return tape_->node(idx_).value; }

const Matrix& Var::grad() const {
  Node& n = tape_->node(idx_);
  n.ensure_grad();
  return n.grad;
}

Node& Var::node() const { return tape_->node(idx_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1)
    throw std::logic_error("Var::scalar on non-1x1 value");
  return v(0, 0);
}

Var Tape::make(Matrix value, bool needs_grad,
               std::function<void(Node&)> pullback) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->needs_grad = grad_enabled_ && needs_grad;
  if (n->needs_grad) n->pullback = std::move(pullback);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix m) { return make(std::move(m), false, {}); }

Var Tape::constant_scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(m);
}

Var Tape::param(Parameter& p) {
  Parameter* pp = &p;
  return make(p.value, p.trainable, [pp](Node& self) {
    if (pp->grad.size() == 0)
      pp->grad = Matrix::Zero(pp->value.rows(), pp->value.cols());
    pp->grad += self.grad;
  });
}

void Tape::backward(const Var& root) {
  if (!grad_enabled_)
    throw std::logic_error("backward() on a no-grad tape");
  Node& r = *nodes_[root.index()];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::logic_error("backward() root must be scalar");
  r.ensure_grad();
  r.grad(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = *nodes_[i];
    if (n.needs_grad && n.pullback && n.grad.size() != 0) n.pullback(n);
  }
}

namespace {

Tape* same_tape(Var a, Var b) {
  if (a.tape() != b.tape())
    throw std::logic_error("ops require Vars from the same tape");
  return a.tape();
}

bool any_grad(Var a) { return a.node().needs_grad; }
bool any_grad(Var a, Var b) { return a.node().needs_grad || b.node().needs_grad; }

void accum(Var v, const Matrix& g) {
  Node& n = v.node();
  if (!n.needs_grad) return;
  n.ensure_grad();
  n.grad += g;
}

}  // namespace

Var add(Var a, Var b) {
  Tape* t = same_tape(a, b);
  return t->make(a.value() + b.value(), any_grad(a, b), [a, b](Node& self) {
    accum(a, self.grad);
    accum(b, self.grad);
  });
}

Var sub(Var a, Var b) {
  Tape* t = same_tape(a, b);
  return t->make(a.value() - b.value(), any_grad(a, b), [a, b](Node& self) {
    accum(a, self.grad);
    accum(b, Matrix(-self.grad));
  });
}

Var neg(Var a) { return affine(a, -1.0, 0.0); }

Var affine(Var a, double k, double c) {
  Tape* t = a.tape();
  Matrix v = (k * a.value()).array() + c;
  return t->make(std::move(v), any_grad(a), [a, k](Node& self) {
    accum(a, Matrix(k * self.grad));
  });
}

Var mul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return t->make(std::move(v), any_grad(a, b), [a, b](Node& self) {
    accum(a, Matrix(self.grad.cwiseProduct(b.value())));
    accum(b, Matrix(self.grad.cwiseProduct(a.value())));
  });
}

Var div_elem(Var a, Var b) {
  Tape* t = same_tape(a, b);
  Matrix v = a.value().cwiseQuotient(b.value());
  return t->make(std::move(v), any_grad(a, b), [a, b](Node& self) {
    accum(a, Matrix(self.grad.cwiseQuotient(b.value())));
    Matrix gb = -self.grad.cwiseProduct(a.value())
                     .cwiseQuotient(b.value().cwiseProduct(b.value()));
    accum(b, gb);
  });
}

Var matmul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  Matrix v = a.value() * b.value();
  return t->make(std::move(v), any_grad(a, b), [a, b](Node& self) {
    accum(a, Matrix(self.grad * b.value().transpose()));
    accum(b, Matrix(a.value().transpose() * self.grad));
  });
}

Var transpose(Var a) {
  Tape* t = a.tape();
  return t->make(a.value().transpose(), any_grad(a), [a](Node& self) {
    accum(a, Matrix(self.grad.transpose()));
  });
}

Var vstack(Var a, Var b) {
  Tape* t = same_tape(a, b);
  if (a.cols() != b.cols()) throw std::logic_error("vstack: column mismatch");
  Matrix v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.value();
  v.bottomRows(b.rows()) = b.value();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return t->make(std::move(v), any_grad(a, b), [a, b, ra, rb](Node& self) {
    accum(a, Matrix(self.grad.topRows(ra)));
    accum(b, Matrix(self.grad.bottomRows(rb)));
  });
}

Var hstack(Var a, Var b) {
  Tape* t = same_tape(a, b);
  if (a.rows() != b.rows()) throw std::logic_error("hstack: row mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return t->make(std::move(v), any_grad(a, b), [a, b, ca, cb](Node& self) {
    accum(a, Matrix(self.grad.leftCols(ca)));
    accum(b, Matrix(self.grad.rightCols(cb)));
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  Tape* t = a.tape();
  if (start < 0 || n < 0 || start + n > a.rows())
    throw std::logic_error("slice_rows out of range");
  Matrix v = a.value().middleRows(start, n);
  return t->make(std::move(v), any_grad(a), [a, start, n](Node& self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    g.middleRows(start, n) = self.grad;
    accum(a, g);
  });
}

Var add_rowbc(Var x, Var row) {
  Tape* t = same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols())
    throw std::logic_error("add_rowbc: row must be 1 x cols(x)");
  Matrix v = x.value().rowwise() + row.value().row(0);
  return t->make(std::move(v), any_grad(x, row), [x, row](Node& self) {
    accum(x, self.grad);
    accum(row, Matrix(self.grad.colwise().sum()));
  });
}

Var tanh(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().array().tanh();
  return t->make(y, any_grad(a), [a, y](Node& self) {
    accum(a, Matrix(self.grad.array() * (1.0 - y.array().square())));
  });
}

Var relu(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().cwiseMax(0.0);
  return t->make(y, any_grad(a), [a](Node& self) {
    Matrix mask = (a.value().array() > 0.0).cast<double>();
    accum(a, Matrix(self.grad.cwiseProduct(mask)));
  });
}

Var exp(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().array().exp();
  return t->make(y, any_grad(a), [a, y](Node& self) {
    accum(a, Matrix(self.grad.cwiseProduct(y)));
  });
}

Var log(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().array().log();
  return t->make(y, any_grad(a), [a](Node& self) {
    accum(a, Matrix(self.grad.cwiseQuotient(a.value())));
  });
}

Var sqrt(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().array().sqrt();
  return t->make(y, any_grad(a), [a, y](Node& self) {
    // subgradient 0 at the origin so identical inputs do not poison the batch
    Matrix g = Matrix::Zero(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        if (y(i, j) > 0.0) g(i, j) = self.grad(i, j) * 0.5 / y(i, j);
    accum(a, g);
  });
}

Var sum(Var a) {
  Tape* t = a.tape();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return t->make(std::move(v), any_grad(a), [a](Node& self) {
    accum(a, Matrix(Matrix::Constant(a.rows(), a.cols(), self.grad(0, 0))));
  });
}

Var mean(Var a) {
  return affine(sum(a), 1.0 / static_cast<double>(a.value().size()), 0.0);
}

Var rowsum(Var a) {
  Tape* t = a.tape();
  Matrix v = a.value().rowwise().sum();
  return t->make(std::move(v), any_grad(a), [a](Node& self) {
    accum(a, Matrix(self.grad * Eigen::RowVectorXd::Ones(a.cols())));
  });
}

Var softmax_col(Var a) {
  Tape* t = a.tape();
  if (a.cols() != 1) throw std::logic_error("softmax_col expects an n x 1 input");
  Eigen::VectorXd x = a.value().col(0);
  const double m = x.maxCoeff();
  Eigen::VectorXd e = (x.array() - m).exp();
  Eigen::VectorXd y = e / e.sum();
  return t->make(Matrix(y), any_grad(a), [a, y](Node& self) {
    const double dotp = (y.array() * self.grad.col(0).array()).sum();
    Matrix g = (y.array() * (self.grad.col(0).array() - dotp)).matrix();
    accum(a, g);
  });
}

Var cmul(Var a, Var s) {
  Tape* t = same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw std::logic_error("cmul: s must be 1x1");
  const double sv = s.value()(0, 0);
  Matrix v = a.value() * sv;
  return t->make(std::move(v), any_grad(a, s), [a, s, sv](Node& self) {
    accum(a, Matrix(self.grad * sv));
    Matrix gs(1, 1);
    gs(0, 0) = (self.grad.array() * a.value().array()).sum();
    accum(s, gs);
  });
}

Var cdiv(Var a, Var s) {
  Tape* t = same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw std::logic_error("cdiv: s must be 1x1");
  const double sv = s.value()(0, 0);
  Matrix v = a.value() / sv;
  return t->make(std::move(v), any_grad(a, s), [a, s, sv](Node& self) {
    accum(a, Matrix(self.grad / sv));
    Matrix gs(1, 1);
    gs(0, 0) = -(self.grad.array() * a.value().array()).sum() / (sv * sv);
    accum(s, gs);
  });
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var square(Var a) { return mul(a, a); }

Var l2_norm(Var a) { return sqrt(sum(square(a))); }

Var row_l2_norms(Var a) { return sqrt(rowsum(square(a))); }

Var mean_rows(Var a) {
  Tape* t = a.tape();
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix w = Matrix::Constant(1, a.rows(), inv);
  return matmul(t->constant(w), a);
}

Var logsumexp(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::logic_error("logsumexp of empty set");
  Tape* t = xs[0].tape();
  double m = xs[0].scalar();
  for (const Var& x : xs) m = std::max(m, x.scalar());
  Var acc = t->constant_scalar(0.0);
  for (const Var& x : xs) acc = add(acc, exp(affine(x, 1.0, -m)));
  return affine(log(acc), 1.0, m);
}

}  // namespace t3dqa::ad
