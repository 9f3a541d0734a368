#pragma once

#include "t3dqa/autodiff.hpp"
#include "t3dqa/common.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace th {

using t3dqa::ad::Matrix;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

// central finite difference of a scalar function w.r.t. one parameter entry
inline double fd_grad(t3dqa::ad::Parameter& p, Eigen::Index i, Eigen::Index j,
                      const std::function<double()>& eval, double h = 1e-6) {
  const double orig = p.value(i, j);
  p.value(i, j) = orig + h;
  const double up = eval();
  p.value(i, j) = orig - h;
  const double down = eval();
  p.value(i, j) = orig;
  return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// unique scratch directory under the system temp dir
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = (std::filesystem::temp_directory_path() /
             ("t3dqa_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++)))
                .string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace th
