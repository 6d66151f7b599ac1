#pragma once

// C-SVC with an RBF kernel, trained by SMO with second-order working-set
// selection; multiclass problems use one-vs-one voting.

#include "deaps/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

namespace deaps::eval {

struct SvcOptions {
  double C = 1.0;
  /// RBF width; <= 0 selects 1 / n_features.
  double gamma = 0.0;
  double tol = 1e-3;
  std::int64_t max_iter = 10'000'000;
  /// Training sets up to this size get a precomputed kernel matrix.
  Eigen::Index cache_rows = 5000;
};

namespace detail {

inline Eigen::VectorXd sq_norms(const Mat<double>& X) { return X.rowwise().squaredNorm(); }

/// K(a_r, b_c) = exp(-gamma * |a_r - b_c|^2).
inline Mat<double> rbf(const Mat<double>& A, const Mat<double>& B, double gamma) {
  const Eigen::VectorXd na = sq_norms(A), nb = sq_norms(B);
  Mat<double> K = -2.0 * (A * B.transpose());
  K.colwise() += na;
  K.rowwise() += nb.transpose();
  return (-gamma * K.array().max(0.0)).exp().matrix();
}

/// Kernel rows over a subset of training rows, precomputed when small.
class KernelRows {
 public:
  KernelRows(const Mat<double>& X, const std::vector<Eigen::Index>& idx, double gamma, Eigen::Index cache_rows)
      : gamma_(gamma) {
    sub_.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) sub_.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
    if (sub_.rows() <= cache_rows) full_ = rbf(sub_, sub_, gamma_);
  }

  Eigen::VectorXd row(Eigen::Index i) const {
    if (full_.size() > 0) return full_.row(i).transpose();
    return rbf(sub_.row(i), sub_, gamma_).row(0).transpose();
  }

 private:
  double gamma_;
  Mat<double> sub_, full_;
};

struct BinaryModel {
  std::vector<Eigen::Index> sv;  // training row indices
  Eigen::VectorXd coef;          // alpha_i * y_i
  double rho = 0.0;
  std::int64_t iterations = 0;
};

/// Solves the C-SVC dual on rows `idx` of X with labels y in {+1, -1}.
inline BinaryModel solve_binary(const Mat<double>& X, const std::vector<Eigen::Index>& idx, const std::vector<int>& y,
                                double gamma, const SvcOptions& opt) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double C = opt.C, kTau = 1e-12;
  KernelRows K(X, idx, gamma, opt.cache_rows);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n), G = Eigen::VectorXd::Constant(n, -1.0);
  auto yi = [&](Eigen::Index t) { return static_cast<double>(y[static_cast<std::size_t>(t)]); };
  auto in_up = [&](Eigen::Index t) { return yi(t) > 0 ? alpha(t) < C : alpha(t) > 0; };
  auto in_low = [&](Eigen::Index t) { return yi(t) > 0 ? alpha(t) > 0 : alpha(t) < C; };

  std::int64_t iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t)
      if (in_up(t) && -yi(t) * G(t) >= gmax) {
        if (-yi(t) * G(t) > gmax || i < 0) i = t;
        gmax = -yi(t) * G(t);
      }
    if (i < 0) break;
    const Eigen::VectorXd Ki = K.row(i);
    double gmax2 = -std::numeric_limits<double>::infinity(), best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, yi(t) * G(t));
      const double b = gmax + yi(t) * G(t);
      if (b > 0) {
        double a = 2.0 - 2.0 * Ki(t);  // RBF diagonal is 1
        if (a <= 0) a = kTau;
        if (-(b * b) / a < best) {
          best = -(b * b) / a;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < opt.tol || j < 0) break;
    const Eigen::VectorXd Kj = K.row(j);
    const double Qij = yi(i) * yi(j) * Ki(j);
    const double ai = alpha(i), aj = alpha(j);
    if (yi(i) != yi(j)) {
      double quad = Ki(i) + Kj(j) + 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G(i) - G(j)) / quad, diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = -diff;
      }
      if (diff > 0) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = C - diff; }
      } else if (alpha(j) > C) {
        alpha(j) = C;
        alpha(i) = C + diff;
      }
    } else {
      double quad = Ki(i) + Kj(j) - 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (G(i) - G(j)) / quad, sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = sum - C; }
      } else if (alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = sum;
      }
      if (sum > C) {
        if (alpha(j) > C) { alpha(j) = C; alpha(i) = sum - C; }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = sum;
      }
    }
    const double dai = alpha(i) - ai, daj = alpha(j) - aj;
    for (Eigen::Index t = 0; t < n; ++t)
      G(t) += yi(t) * (yi(i) * Ki(t) * dai + yi(j) * Kj(t) * daj);
  }

  // rho: mean of y G over free vectors, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  Eigen::Index n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yi(t) * G(t);
    if (alpha(t) >= C) {
      if (yi(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0) {
      if (yi(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  BinaryModel m;
  m.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  m.iterations = iter;
  std::vector<double> coef;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha(t) > 0) {
      m.sv.push_back(idx[static_cast<std::size_t>(t)]);
      coef.push_back(alpha(t) * yi(t));
    }
  m.coef = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  return m;
}

}  // namespace detail

class Svc {
 public:
  Svc() = default;
  explicit Svc(SvcOptions opt) : opt_(opt) {}

  void fit(const Mat<double>& X, const std::vector<int>& y) {
    require(X.rows() > 0 && static_cast<std::size_t>(X.rows()) == y.size(), "svc: features and labels differ in length");
    require(opt_.C > 0.0, "svc: C must be positive");
    X_ = X;
    gamma_ = opt_.gamma > 0.0 ? opt_.gamma : 1.0 / static_cast<double>(X.cols());
    classes_.clear();
    for (int v : y)
      if (std::find(classes_.begin(), classes_.end(), v) == classes_.end()) classes_.push_back(v);
    std::sort(classes_.begin(), classes_.end());
    models_.clear();
    for (std::size_t a = 0; a < classes_.size(); ++a)
      for (std::size_t b = a + 1; b < classes_.size(); ++b) {
        std::vector<Eigen::Index> idx;
        std::vector<int> yy;
        for (std::size_t r = 0; r < y.size(); ++r) {
          if (y[r] == classes_[a] || y[r] == classes_[b]) {
            idx.push_back(static_cast<Eigen::Index>(r));
            yy.push_back(y[r] == classes_[a] ? 1 : -1);
          }
        }
        models_.push_back(detail::solve_binary(X_, idx, yy, gamma_, opt_));
      }
  }

  /// Pairwise decision values for rows of X, one column per class pair.
  Mat<double> decision_function(const Mat<double>& X) const {
    require(!classes_.empty(), "svc: predict before fit");
    require(X.cols() == X_.cols(), "svc: feature width differs from training");
    Mat<double> out(X.rows(), static_cast<Eigen::Index>(models_.size()));
    const Mat<double> K = detail::rbf(X, X_, gamma_);
    for (std::size_t m = 0; m < models_.size(); ++m) {
      const auto& bm = models_[m];
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        double s = -bm.rho;
        for (std::size_t k = 0; k < bm.sv.size(); ++k) s += bm.coef(static_cast<Eigen::Index>(k)) * K(r, bm.sv[k]);
        out(r, static_cast<Eigen::Index>(m)) = s;
      }
    }
    return out;
  }

  std::vector<int> predict(const Mat<double>& X) const {
    if (classes_.size() == 1) return std::vector<int>(static_cast<std::size_t>(X.rows()), classes_[0]);
    const Mat<double> dv = decision_function(X);
    std::vector<int> out;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      std::vector<int> votes(classes_.size(), 0);
      Eigen::Index m = 0;
      for (std::size_t a = 0; a < classes_.size(); ++a)
        for (std::size_t b = a + 1; b < classes_.size(); ++b, ++m) ++votes[dv(r, m) > 0 ? a : b];
      out.push_back(classes_[static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin())]);
    }
    return out;
  }

  const std::vector<int>& classes() const { return classes_; }
  double gamma() const { return gamma_; }
  std::size_t n_support() const {
    std::vector<Eigen::Index> all;
    for (const auto& m : models_) all.insert(all.end(), m.sv.begin(), m.sv.end());
    std::sort(all.begin(), all.end());
    return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
  }

 private:
  SvcOptions opt_;
  Mat<double> X_;
  double gamma_ = 0.0;
  std::vector<int> classes_;
  std::vector<detail::BinaryModel> models_;
};

/// Per-feature standardization fitted on one split and applied to others.
struct Standardizer {
  RowVec<double> mean, scale;

  static Standardizer fit(const Mat<double>& X) {
    require(X.rows() >= 1, "standardizer needs at least one row");
    Standardizer s;
    s.mean = X.colwise().mean();
    if (X.rows() < 2) {
      s.scale = RowVec<double>::Ones(X.cols());
      return s;
    }
    const RowVec<double> var = (X.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(X.rows() - 1);
    s.scale = var.cwiseSqrt().unaryExpr([](double v) { return v > 1e-12 ? v : 1.0; });
    return s;
  }

  Mat<double> apply(const Mat<double>& X) const {
    require(X.cols() == mean.cols(), "standardizer width mismatch");
    return (X.rowwise() - mean).array().rowwise() / scale.array();
  }
};

}  // namespace deaps::eval
