#pragma once

// Shared helpers for the test binaries: random matrices, central finite
// differences and scratch directories.

#include "deaps/core.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace deaps::testing {

template <typename T = double>
Mat<T> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat<T> m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(d(rng));
  return m;
}

/// d f / d x by central differences, perturbing x in place and restoring it.
inline Mat<double> numeric_grad(const std::function<double()>& f, Mat<double>& x, double h = 1e-5) {
  Mat<double> g(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double keep = x.data()[k];
    x.data()[k] = keep + h;
    const double up = f();
    x.data()[k] = keep - h;
    const double down = f();
    x.data()[k] = keep;
    g.data()[k] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double rel_error(const Mat<double>& a, const Mat<double>& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom < 1e-14) return 0.0;
  return (a - b).norm() / denom;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("deaps_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace deaps::testing
