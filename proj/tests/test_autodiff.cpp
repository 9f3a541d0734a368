#include "t3dqa/autodiff.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace t3dqa;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

// checks d(scalar composite)/d(param) against central differences
void check_param_grads(ad::Parameter& p, const std::function<double()>& eval,
                       const std::function<void()>& run_backward, double tol = 1e-6) {
  p.zero_grad();
  run_backward();
  Matrix analytic = p.grad;
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double fd = th::fd_grad(p, i, j, eval);
      CAPTURE(p.name);
      CAPTURE(i);
      CAPTURE(j);
      CHECK(th::rel_err(analytic(i, j), fd) < tol);
    }
}

}  // namespace

TEST_CASE("autodiff: every primitive op matches finite differences") {
  std::mt19937_64 rng(42);
  ad::Parameter a("a", th::random_matrix(rng, 3, 4));
  ad::Parameter b("b", th::random_matrix(rng, 3, 4));
  ad::Parameter w("w", th::random_matrix(rng, 4, 5));
  ad::Parameter row("row", th::random_matrix(rng, 1, 4));
  ad::Parameter s("s", Matrix::Constant(1, 1, 1.7));
  ad::Parameter col("col", th::random_matrix(rng, 5, 1));

  struct OpCase {
    const char* name;
    std::function<Var(Tape&)> build;
  };
  // positive shift keeps log/sqrt away from their domain edges
  std::vector<OpCase> cases = {
      {"add", [&](Tape& t) { return ad::add(t.param(a), t.param(b)); }},
      {"sub", [&](Tape& t) { return ad::sub(t.param(a), t.param(b)); }},
      {"affine", [&](Tape& t) { return ad::affine(t.param(a), -2.5, 0.3); }},
      {"mul", [&](Tape& t) { return ad::mul(t.param(a), t.param(b)); }},
      {"div_elem",
       [&](Tape& t) {
         return ad::div_elem(t.param(a), ad::affine(ad::tanh(t.param(b)), 0.5, 2.0));
       }},
      {"matmul", [&](Tape& t) { return ad::matmul(t.param(a), t.param(w)); }},
      {"transpose", [&](Tape& t) { return ad::transpose(t.param(a)); }},
      {"vstack", [&](Tape& t) { return ad::vstack(t.param(a), t.param(b)); }},
      {"hstack", [&](Tape& t) { return ad::hstack(t.param(a), t.param(b)); }},
      {"slice_rows", [&](Tape& t) { return ad::slice_rows(t.param(a), 1, 2); }},
      {"add_rowbc", [&](Tape& t) { return ad::add_rowbc(t.param(a), t.param(row)); }},
      {"tanh", [&](Tape& t) { return ad::tanh(t.param(a)); }},
      {"exp", [&](Tape& t) { return ad::exp(t.param(a)); }},
      {"log",
       [&](Tape& t) { return ad::log(ad::affine(ad::tanh(t.param(a)), 0.5, 2.0)); }},
      {"sqrt",
       [&](Tape& t) { return ad::sqrt(ad::affine(ad::tanh(t.param(a)), 0.5, 2.0)); }},
      {"rowsum", [&](Tape& t) { return ad::rowsum(t.param(a)); }},
      {"softmax_col", [&](Tape& t) { return ad::softmax_col(t.param(col)); }},
      {"cmul", [&](Tape& t) { return ad::cmul(t.param(a), t.param(s)); }},
      {"cdiv", [&](Tape& t) { return ad::cdiv(t.param(a), t.param(s)); }},
      {"square", [&](Tape& t) { return ad::square(t.param(a)); }},
      {"l2_norm", [&](Tape& t) { return ad::l2_norm(t.param(a)); }},
      {"row_l2_norms", [&](Tape& t) { return ad::row_l2_norms(t.param(a)); }},
      {"mean_rows", [&](Tape& t) { return ad::mean_rows(t.param(a)); }},
  };

  for (auto& c : cases) {
    CAPTURE(c.name);
    // reduce with a weighted sum so every output entry has distinct weight
    auto scalarize = [&](Tape& t, Var out) {
      Matrix wts(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
          wts(i, j) = 0.1 * double(i + 1) + 0.01 * double(j + 1);
      return ad::sum(ad::mul(out, t.constant(wts)));
    };
    auto eval = [&]() {
      Tape t(false);
      return scalarize(t, c.build(t)).scalar();
    };
    for (ad::Parameter* p : {&a, &b, &w, &row, &s, &col}) {
      auto backward = [&]() {
        Tape t(true);
        ad::Var loss = scalarize(t, c.build(t));
        t.backward(loss);
      };
      check_param_grads(*p, eval, backward);
    }
  }
}

TEST_CASE("autodiff: logsumexp is shift-stable and differentiable") {
  std::mt19937_64 rng(7);
  ad::Parameter xs("xs", th::random_matrix(rng, 4, 1, 30.0));  // large spread
  auto eval = [&]() {
    Tape t(false);
    std::vector<Var> vars;
    for (int i = 0; i < 4; ++i) vars.push_back(ad::slice_rows(t.param(xs), i, 1));
    return ad::logsumexp(vars).scalar();
  };
  double m = xs.value.maxCoeff();
  double acc = 0;
  for (int i = 0; i < 4; ++i) acc += std::exp(xs.value(i, 0) - m);
  CHECK(eval() == doctest::Approx(m + std::log(acc)).epsilon(1e-12));

  // moderate spread for the gradient check: keeps every softmax weight large
  // enough for finite differences to resolve
  xs.value = th::random_matrix(rng, 4, 1, 2.0);
  xs.zero_grad();
  {
    Tape t(true);
    std::vector<Var> vars;
    for (int i = 0; i < 4; ++i) vars.push_back(ad::slice_rows(t.param(xs), i, 1));
    Var out = ad::logsumexp(vars);
    t.backward(out);
  }
  for (int i = 0; i < 4; ++i) {
    const double fd = th::fd_grad(xs, i, 0, eval);
    CHECK(th::rel_err(xs.grad(i, 0), fd) < 1e-6);
  }
}

TEST_CASE("autodiff: gradients accumulate across shared subexpressions") {
  ad::Parameter x("x", Matrix::Constant(1, 1, 0.8));
  auto eval = [&]() {
    Tape t(false);
    Var v = t.param(x);
    return ad::add(ad::mul(v, v), ad::affine(v, 3.0, 0.0)).scalar();  // x^2 + 3x
  };
  x.zero_grad();
  {
    Tape t(true);
    Var v = t.param(x);
    Var loss = ad::add(ad::mul(v, v), ad::affine(v, 3.0, 0.0));
    t.backward(loss);
  }
  CHECK(x.grad(0, 0) == doctest::Approx(2 * 0.8 + 3.0).epsilon(1e-12));
  CHECK(eval() == doctest::Approx(0.64 + 2.4).epsilon(1e-12));
}

TEST_CASE("autodiff: frozen parameters receive no gradient") {
  ad::Parameter x("x", Matrix::Constant(1, 1, 0.5), /*train=*/false);
  ad::Parameter y("y", Matrix::Constant(1, 1, 2.0), /*train=*/true);
  Tape t(true);
  Var loss = ad::mul(t.param(x), t.param(y));
  t.backward(loss);
  CHECK(x.grad(0, 0) == 0.0);
  CHECK(y.grad(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("autodiff: sqrt at zero uses subgradient zero") {
  ad::Parameter x("x", Matrix::Zero(1, 1));
  Tape t(true);
  Var loss = ad::sum(ad::sqrt(t.param(x)));
  t.backward(loss);
  CHECK(x.grad(0, 0) == 0.0);
}
