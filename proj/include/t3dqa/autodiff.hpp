#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape owns the computation graph for one forward pass (typically one
// training batch). Vars are cheap handles into the tape. All free functions
// build a node, compute the value eagerly, and register a pullback that
// accumulates into the parents' gradients when Tape::backward runs.
//
// Gradients are checked against central finite differences in the test
// suite, so every op here must implement the exact vector-Jacobian product.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace t3dqa::ad {

using Matrix = Eigen::MatrixXd;

// A named, trainable (or frozen) tensor living outside of any tape.
// Tapes bind to Parameters via Tape::param; backward() deposits into `grad`.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;       // same shape as value; zeroed by the optimizer
  bool trainable = true;
  double base_lr = 0.0;  // assigned by the trainer; 0 means "use default"

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(); }
  std::uint64_t digest() const;
};

class Tape;

struct Node {
  Matrix value;
  Matrix grad;  // lazily allocated on first touch
  std::function<void(Node&)> pullback;  // may be empty (leaf / no-grad tape)
  bool needs_grad = false;

  void ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  }
};

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return idx_; }
  Node& node() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;  // requires 1x1

 private:
  Tape* tape_ = nullptr;
  std::size_t idx_ = 0;
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix m);
  Var constant_scalar(double v);
  // Binds a parameter: gradient flows into p.grad if p.trainable.
  Var param(Parameter& p);

  Var make(Matrix value, bool needs_grad, std::function<void(Node&)> pullback);

  // Runs all pullbacks in reverse creation order, seeding d(root)/d(root)=1.
  // root must be 1x1.
  void backward(const Var& root);

  Node& node(std::size_t idx) { return *nodes_[idx]; }
  const Node& node(std::size_t idx) const { return *nodes_[idx]; }

 private:
  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- primitive ops ----------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
// k*a + c, elementwise
Var affine(Var a, double k, double c);
Var mul(Var a, Var b);       // hadamard
Var div_elem(Var a, Var b);  // elementwise a./b
Var matmul(Var a, Var b);
Var transpose(Var a);
Var vstack(Var a, Var b);
Var hstack(Var a, Var b);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var add_rowbc(Var x, Var row);  // x (n x k) + broadcast row (1 x k)
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);  // pullback contributes 0 where value == 0
Var sum(Var a);   // -> 1x1
Var mean(Var a);  // -> 1x1
Var rowsum(Var a);       // (n x k) -> (n x 1)
Var softmax_col(Var a);  // a is (n x 1)
Var cmul(Var a, Var s);  // matrix * scalar var (s is 1x1)
Var cdiv(Var a, Var s);  // matrix / scalar var
Var dot(Var a, Var b);   // sum(a.*b) -> 1x1

// ---- composites --------------------------------------------------------

Var square(Var a);
Var l2_norm(Var a);              // -> 1x1
Var row_l2_norms(Var a);         // (n x k) -> (n x 1)
Var mean_rows(Var a);            // (n x k) -> (1 x k)
Var logsumexp(const std::vector<Var>& xs);  // over 1x1 scalars, max-shifted

std::uint64_t digest_matrix(const Matrix& m);

}  // namespace t3dqa::ad
