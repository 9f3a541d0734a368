#include "t3dqa/stats.hpp"

#include "t3dqa/common.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace t3dqa;

namespace {

// O(n^2) rank computation straight from the mid-rank definition
Eigen::VectorXd ranks_bruteforce(const Eigen::VectorXd& x) {
  Eigen::VectorXd r(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    int less = 0, equal = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (x(j) < x(i)) ++less;
      if (x(j) == x(i)) ++equal;
    }
    r(i) = less + 1 + (equal - 1) * 0.5;
  }
  return r;
}

std::optional<double> srcc_bruteforce(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return pearson(ranks_bruteforce(x), ranks_bruteforce(y));
}

std::optional<double> krcc_bruteforce(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  long long c = 0, d = 0, tx = 0, ty = 0;
  const Eigen::Index n = x.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = x(i) - x(j), b = y(i) - y(j);
      if (a == 0) ++tx;
      if (b == 0) ++ty;
      if (a != 0 && b != 0) {
        if ((a > 0) == (b > 0)) ++c;
        else ++d;
      }
    }
  const long long n0 = n * (n - 1) / 2;
  const double denom = std::sqrt(double(n0 - tx)) * std::sqrt(double(n0 - ty));
  if (denom == 0.0) return std::nullopt;
  return double(c - d) / denom;
}

Eigen::VectorXd random_scores(std::mt19937_64& rng, int n, bool with_ties) {
  Eigen::VectorXd v(n);
  if (with_ties) {
    std::uniform_int_distribution<int> grid(0, 8);
    for (int i = 0; i < n; ++i) v(i) = grid(rng) / 2.0;
  } else {
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
  }
  return v;
}

}  // namespace

TEST_CASE("stats: srcc basic identities") {
  Eigen::VectorXd x(4), y(4);
  x << 1, 2, 3, 4;
  y << 1, 2, 3, 4;
  CHECK(*srcc(x, y) == doctest::Approx(1.0));
  y << 4, 3, 2, 1;
  CHECK(*srcc(x, y) == doctest::Approx(-1.0));
  y << 1, 3, 2, 4;
  CHECK(*srcc(x, y) == doctest::Approx(0.8));  // rank-Pearson by hand
  y << 2, 2, 2, 2;
  CHECK(!srcc(x, y).has_value());
  CHECK_THROWS_AS(srcc(x.head(2), y.head(2)), ValidationError);
}

TEST_CASE("stats: krcc basic identities") {
  Eigen::VectorXd x(3), y(3);
  x << 1, 2, 3;
  y << 1, 2, 3;
  CHECK(*krcc(x, y) == doctest::Approx(1.0));
  y << 1, 3, 2;
  CHECK(*krcc(x, y) == doctest::Approx(1.0 / 3.0));  // 2 concordant, 1 discordant
  y << 5, 5, 5;
  CHECK(!krcc(x, y).has_value());
}

TEST_CASE("stats: srcc/krcc equal brute force on 1000 random instances") {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> ndist(3, 20);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = ndist(rng);
    const bool ties = rep % 2 == 0;
    Eigen::VectorXd x = random_scores(rng, n, ties);
    Eigen::VectorXd y = random_scores(rng, n, ties);
    auto s1 = srcc(x, y);
    auto s2 = srcc_bruteforce(x, y);
    auto k1 = krcc(x, y);
    auto k2 = krcc_bruteforce(x, y);
    CAPTURE(rep);
    REQUIRE(s1.has_value() == s2.has_value());
    REQUIRE(k1.has_value() == k2.has_value());
    if (s1) CHECK(*s1 == *s2);  // exact, same tie conventions
    if (k1) CHECK(*k1 == *k2);
  }
}

TEST_CASE("stats: rank statistics are invariant under monotone transforms") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd x = random_scores(rng, 12, rep % 2 == 0);
    Eigen::VectorXd y = random_scores(rng, 12, false);
    auto s = srcc(x, y);
    auto k = krcc(x, y);
    // strictly increasing map: exp(a*x) + b*x
    Eigen::VectorXd xt =
        (2.0 * x).array().exp().matrix() + Eigen::VectorXd(0.5 * x);
    auto st = srcc(xt, y);
    auto kt = krcc(xt, y);
    REQUIRE(s.has_value() == st.has_value());
    if (s) CHECK(*s == doctest::Approx(*st).epsilon(1e-12));
    if (k) CHECK(*k == doctest::Approx(*kt).epsilon(1e-12));
  }
}

TEST_CASE("stats: restricted kendall on explicit pair sets") {
  Eigen::VectorXd truth(5), pred(5);
  truth << 1, 2, 3, 4, 5;
  pred << 1, 2, 3, 4, 5;
  std::vector<std::pair<int, int>> pairs = {{0, 4}, {1, 3}, {0, 2}};
  CHECK(krcc_on_pairs(pred, truth, pairs) == doctest::Approx(1.0));
  pred << 5, 4, 3, 2, 1;
  CHECK(krcc_on_pairs(pred, truth, pairs) == doctest::Approx(-1.0));
  pred << 1, 4, 3, 2, 5;  // one concordant, one discordant, one concordant
  CHECK(krcc_on_pairs(pred, truth, {{0, 4}, {1, 3}}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(krcc_on_pairs(pred, truth, {}), ValidationError);
}

TEST_CASE("stats: logistic-5 perfect, affine, and nonlinear recovery") {
  std::mt19937_64 rng(123);
  Eigen::VectorXd mos(40);
  for (int i = 0; i < 40; ++i) mos(i) = 1.0 + 4.0 * i / 39.0;

  SUBCASE("identity data fits with negligible residual") {
    Logistic5Fit fit = fit_logistic5(mos, mos);
    CHECK(fit.converged);
    Eigen::VectorXd mapped = fit.map(mos);
    CHECK((mapped - mos).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("affine pred = 2*mos + 1 is inverted; post-fit PLCC = 1") {
    Eigen::VectorXd pred = 2.0 * mos + Eigen::VectorXd::Ones(40);
    Logistic5Fit fit = fit_logistic5(pred, mos);
    CHECK(fit.converged);
    auto plcc = pearson(fit.map(pred), mos);
    REQUIRE(plcc.has_value());
    CHECK(*plcc >= 0.999999);
  }

  SUBCASE("monotone nonlinear pred improves post-fit linearity") {
    Eigen::VectorXd pred = mos.array().pow(3.0);
    const double before = std::abs(*pearson(pred, mos));
    Logistic5Fit fit = fit_logistic5(pred, mos);
    const double after = std::abs(*pearson(fit.map(pred), mos));
    CHECK(after >= before - 1e-12);
    CHECK(fit.monotone);
  }

  SUBCASE("monotone fits preserve srcc and krcc up to their direction") {
    int monotone_seen = 0;
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd pred = random_scores(rng, 25, false);
      Eigen::VectorXd target = random_scores(rng, 25, false);
      Logistic5Fit fit = fit_logistic5(pred, target);
      if (!fit.monotone || fit.direction == 0) continue;
      ++monotone_seen;
      const double sign = fit.direction;
      auto s0 = srcc(pred, target);
      auto s1 = srcc(fit.map(pred), target);
      if (s0 && s1) CHECK(*s1 == doctest::Approx(sign * *s0).epsilon(1e-12));
      auto k0 = krcc(pred, target);
      auto k1 = krcc(fit.map(pred), target);
      if (k0 && k1) CHECK(*k1 == doctest::Approx(sign * *k0).epsilon(1e-12));
    }
    CHECK(monotone_seen > 0);
  }

  SUBCASE("too few points are rejected") {
    Eigen::VectorXd small(4);
    small << 1, 2, 3, 4;
    CHECK_THROWS_AS(fit_logistic5(small, small), ValidationError);
  }
}

TEST_CASE("stats: midranks average tied positions") {
  Eigen::VectorXd x(5);
  x << 3, 1, 3, 2, 3;
  Eigen::VectorXd r = midranks(x);
  CHECK(r(1) == doctest::Approx(1.0));
  CHECK(r(3) == doctest::Approx(2.0));
  CHECK(r(0) == doctest::Approx(4.0));  // three-way tie over ranks 3,4,5
  CHECK(r(2) == doctest::Approx(4.0));
  CHECK(r(4) == doctest::Approx(4.0));
}
