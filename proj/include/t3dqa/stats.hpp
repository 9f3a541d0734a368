#pragma once

// Rank-correlation statistics and the five-parameter logistic fit used to
// map predicted scores onto the MOS scale before linear-scale statistics.

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

namespace t3dqa {

// Spearman rank correlation with mid-rank ties. nullopt when either input
// is constant (undefined).
std::optional<double> srcc(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Kendall rank correlation, tie-adjusted (tau-b). nullopt when either
// input is fully tied.
std::optional<double> krcc(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Restricted Kendall statistic used by the curriculum monitor and the
// hardness analysis: (concordant - discordant) / |pairs| over the given
// pair set; ties in either variable count in the denominator only.
double krcc_on_pairs(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     const std::vector<std::pair<int, int>>& pairs);

// Mid-ranks (1-based, ties averaged).
Eigen::VectorXd midranks(const Eigen::VectorXd& x);

struct Logistic5Fit {
  Eigen::Matrix<double, 5, 1> beta;
  bool converged = false;
  double residual = 0.0;   // final RMS residual
  bool monotone = true;    // fitted curve monotone over the data range
  int direction = 0;       // +1 increasing, -1 decreasing, 0 flat/mixed

  double operator()(double x) const;
  Eigen::VectorXd map(const Eigen::VectorXd& x) const;
};

// Least squares fit of b1*(1/2 - 1/(1+exp(b2*(x-b3)))) + b4*x + b5 via
// Levenberg-Marquardt. On non-convergence the identity mapping is
// substituted and `converged` stays false.
Logistic5Fit fit_logistic5(const Eigen::VectorXd& pred, const Eigen::VectorXd& mos);

}  // namespace t3dqa
