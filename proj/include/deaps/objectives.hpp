#pragma once

// Loss functions of the method with analytic gradients:
//   similarity loss (symmetrized cosine between student predictions and
//   teacher projections of two records), gradual loss (cosine against the
//   offset-weighted interpolation of the triplet endpoints, restricted to the
//   top-N selected dynamic features), and covariance regularization.
//
// Tensors follow the student/teacher naming used by the trainer: student
// predictions and projections receive gradients; teacher projections are
// constants (stopped gradient).

#include "deaps/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace deaps::objectives {

struct LossConfig {
  double alpha = 0.1;
  double eps = 1e-8;
  int n_selected = 32;
  int proj_dim = 256;

  void validate() const {
    require(alpha >= 0.0, "alpha must be non-negative");
    require(eps > 0.0, "eps must be positive");
    require(n_selected >= 1 && n_selected <= proj_dim, "n_selected must lie in [1, proj_dim]");
  }
};

struct LossBreakdown {
  double l_sim = 0.0;
  double l_gra = 0.0;
  double l_cov = 0.0;
  double total = 0.0;
};

/// total = L_sim + L_gra + alpha * L_c
inline double compose_total(double l_sim, double l_gra, double l_cov, double alpha) {
  return l_sim + l_gra + alpha * l_cov;
}

template <typename T>
struct PairGrad {
  double value = 0.0;
  Mat<T> grad_a, grad_b;
};

/// mean_b [ 1 - <a_b, b_b> / max(|a_b| |b_b|, eps) ] with gradients w.r.t. both
/// arguments. The caller decides which gradient to discard.
template <typename T>
PairGrad<T> cosine_loss(const Mat<T>& a, const Mat<T>& b, double eps = 1e-8) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "cosine_loss: shape mismatch");
  require(a.rows() >= 1, "cosine_loss: empty batch");
  const Eigen::Index B = a.rows();
  PairGrad<T> out;
  out.grad_a.resize(a.rows(), a.cols());
  out.grad_b.resize(b.rows(), b.cols());
  const double inv_b = 1.0 / static_cast<double>(B);
  double total = 0.0;
  for (Eigen::Index r = 0; r < B; ++r) {
    const double dot = static_cast<double>(a.row(r).dot(b.row(r)));
    const double na = static_cast<double>(a.row(r).norm());
    const double nb = static_cast<double>(b.row(r).norm());
    const double den = na * nb;
    if (den > eps) {
      const double c = dot / den;
      total += 1.0 - c;
      // d(1-c)/da = -(b / den - c a / |a|^2)
      out.grad_a.row(r) = static_cast<T>(-inv_b / den) * b.row(r) + static_cast<T>(inv_b * c / (na * na)) * a.row(r);
      out.grad_b.row(r) = static_cast<T>(-inv_b / den) * a.row(r) + static_cast<T>(inv_b * c / (nb * nb)) * b.row(r);
    } else {
      total += 1.0 - dot / eps;
      out.grad_a.row(r) = static_cast<T>(-inv_b / eps) * b.row(r);
      out.grad_b.row(r) = static_cast<T>(-inv_b / eps) * a.row(r);
    }
  }
  out.value = total * inv_b;
  return out;
}

/// Per-item interpolation (z_a * j + z_b * i) / (i + j).
template <typename T>
Mat<T> par(const Mat<T>& z_a, const Mat<T>& z_b, const std::vector<double>& i_s, const std::vector<double>& j_s) {
  require(z_a.rows() == z_b.rows() && z_a.cols() == z_b.cols(), "par: shape mismatch");
  require(static_cast<Eigen::Index>(i_s.size()) == z_a.rows() && i_s.size() == j_s.size(),
          "par: one offset pair per item required");
  Mat<T> out(z_a.rows(), z_a.cols());
  for (Eigen::Index r = 0; r < z_a.rows(); ++r) {
    const double i = i_s[static_cast<std::size_t>(r)], j = j_s[static_cast<std::size_t>(r)];
    require(i > 0.0 && j > 0.0, "par: offsets must be positive");
    out.row(r) = static_cast<T>(j / (i + j)) * z_a.row(r) + static_cast<T>(i / (i + j)) * z_b.row(r);
  }
  return out;
}

/// Per item, marks the n_selected features with the largest |pred_a - pred_b|;
/// ties go to the lower feature index. The result is a constant 0/1 matrix.
template <typename T>
Mat<T> gradual_mask(const Mat<T>& pred_a, const Mat<T>& pred_b, int n_selected) {
  require(pred_a.rows() == pred_b.rows() && pred_a.cols() == pred_b.cols(), "gradual_mask: shape mismatch");
  const Eigen::Index d = pred_a.cols();
  require(n_selected >= 1 && n_selected <= d, "gradual_mask: n_selected out of range");
  Mat<T> mask = Mat<T>::Zero(pred_a.rows(), d);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
  std::vector<T> diff(static_cast<std::size_t>(d));
  for (Eigen::Index r = 0; r < pred_a.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) diff[static_cast<std::size_t>(c)] = std::abs(pred_a(r, c) - pred_b(r, c));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    auto before = [&](Eigen::Index x, Eigen::Index y) {
      const T dx = diff[static_cast<std::size_t>(x)], dy = diff[static_cast<std::size_t>(y)];
      return dx > dy || (dx == dy && x < y);
    };
    std::nth_element(idx.begin(), idx.begin() + (n_selected - 1), idx.end(), before);
    for (int k = 0; k < n_selected; ++k) mask(r, idx[static_cast<std::size_t>(k)]) = T(1);
  }
  return mask;
}

template <typename T>
struct GradualGrad {
  double value = 0.0;
  Mat<T> grad_mid, grad_a, grad_b;
};

/// cosine_loss(mask * mid, mask * par(z_a, z_b)) with gradients w.r.t. all three
/// tensor arguments.
template <typename T>
GradualGrad<T> gradual_loss(const Mat<T>& mid, const Mat<T>& z_a, const Mat<T>& z_b, const std::vector<double>& i_s,
                            const std::vector<double>& j_s, const Mat<T>& mask, double eps = 1e-8) {
  require(mask.rows() == mid.rows() && mask.cols() == mid.cols(), "gradual_loss: mask shape mismatch");
  const Mat<T> target = par(z_a, z_b, i_s, j_s);
  const Mat<T> m_mid = mid.cwiseProduct(mask);
  const Mat<T> m_target = target.cwiseProduct(mask);
  auto c = cosine_loss(m_mid, m_target, eps);
  GradualGrad<T> out;
  out.value = c.value;
  out.grad_mid = c.grad_a.cwiseProduct(mask);
  const Mat<T> d_target = c.grad_b.cwiseProduct(mask);
  out.grad_a.resize(z_a.rows(), z_a.cols());
  out.grad_b.resize(z_b.rows(), z_b.cols());
  for (Eigen::Index r = 0; r < z_a.rows(); ++r) {
    const double i = i_s[static_cast<std::size_t>(r)], j = j_s[static_cast<std::size_t>(r)];
    out.grad_a.row(r) = static_cast<T>(j / (i + j)) * d_target.row(r);
    out.grad_b.row(r) = static_cast<T>(i / (i + j)) * d_target.row(r);
  }
  return out;
}

template <typename T>
struct MatGrad {
  double value = 0.0;
  Mat<T> grad;
};

/// (1/d) * sum_{i != j} C_ij^2 with C the 1/(B-1) sample covariance of `proj`.
template <typename T>
MatGrad<T> covariance_loss(const Mat<T>& proj) {
  const Eigen::Index B = proj.rows(), d = proj.cols();
  if (B < 2) throw InvalidArgument("covariance_loss needs a batch of at least 2");
  const Mat<T> centered = proj.rowwise() - proj.colwise().mean();
  Mat<T> cov = (centered.transpose() * centered) / static_cast<T>(B - 1);
  cov.diagonal().setZero();
  MatGrad<T> out;
  out.value = static_cast<double>(cov.squaredNorm()) / static_cast<double>(d);
  // dL/dC_ij = 2 C_ij / d off-diagonal; through C = Xc^T Xc / (B-1) this gives
  // dL/dXc = 4 Xc G / (d (B-1)); column sums of Xc vanish, so centering adds nothing.
  out.grad = (centered * cov) * static_cast<T>(4.0 / (static_cast<double>(d) * static_cast<double>(B - 1)));
  return out;
}

/// Forward tensors of one training step. Views are stacked row-wise in the
/// order the trainer produces them:
///   static:  [view from record A ; middle view from record B]   (2B rows)
///   dynamic: [t - i ; t ; t + j]                                (3B rows)
template <typename T>
struct DeapsTensors {
  Mat<T> pred_static;      // student predictor outputs
  Mat<T> proj_static;      // student projector outputs
  Mat<T> pred_dynamic;
  Mat<T> proj_dynamic;
  Mat<T> teacher_static;   // teacher projector outputs
  Mat<T> teacher_dynamic;
  std::vector<double> i_s, j_s;

  Eigen::Index batch() const { return pred_static.rows() / 2; }
};

template <typename T>
struct DeapsGrads {
  Mat<T> pred_static, proj_static, pred_dynamic, proj_dynamic;
  Mat<T> teacher_static, teacher_dynamic;  // always zero
  Mat<T> mask;                             // the selection used (B x d)
};

template <typename T>
std::pair<LossBreakdown, DeapsGrads<T>> total_loss(const DeapsTensors<T>& x, const LossConfig& cfg) {
  cfg.validate();
  const Eigen::Index B = x.batch(), d = x.pred_static.cols();
  require(x.pred_static.rows() == 2 * B && x.teacher_static.rows() == 2 * B && x.proj_static.rows() == 2 * B,
          "static tensors must hold 2B rows");
  require(x.pred_dynamic.rows() == 3 * B && x.teacher_dynamic.rows() == 3 * B && x.proj_dynamic.rows() == 3 * B,
          "dynamic tensors must hold 3B rows");
  require(cfg.n_selected <= d, "n_selected exceeds projection width");

  auto rows = [B](const Mat<T>& m, Eigen::Index k) -> Mat<T> { return m.middleRows(k * B, B); };

  LossBreakdown lb;
  DeapsGrads<T> g;
  g.pred_static = Mat<T>::Zero(2 * B, d);
  g.pred_dynamic = Mat<T>::Zero(3 * B, d);
  g.teacher_static = Mat<T>::Zero(2 * B, d);
  g.teacher_dynamic = Mat<T>::Zero(3 * B, d);

  // Similarity: student prediction of one record against the teacher
  // projection of the other, symmetrized.
  const auto s12 = cosine_loss(rows(x.pred_static, 0), rows(x.teacher_static, 1), cfg.eps);
  const auto s21 = cosine_loss(rows(x.pred_static, 1), rows(x.teacher_static, 0), cfg.eps);
  lb.l_sim = 0.5 * (s12.value + s21.value);
  g.pred_static.middleRows(0, B) = T(0.5) * s12.grad_a;
  g.pred_static.middleRows(B, B) = T(0.5) * s21.grad_a;

  // Gradual: the mask comes from the student dynamic predictions of the
  // endpoints. Term 1 interpolates the student endpoint predictions towards
  // the teacher middle projection; term 2 matches the student middle
  // prediction to the interpolated teacher endpoints.
  const Mat<T> pa = rows(x.pred_dynamic, 0), pm = rows(x.pred_dynamic, 1), pb = rows(x.pred_dynamic, 2);
  const Mat<T> ta = rows(x.teacher_dynamic, 0), tm = rows(x.teacher_dynamic, 1), tb = rows(x.teacher_dynamic, 2);
  g.mask = gradual_mask(pa, pb, cfg.n_selected);
  const auto g1 = gradual_loss(tm, pa, pb, x.i_s, x.j_s, g.mask, cfg.eps);
  const auto g2 = gradual_loss(pm, ta, tb, x.i_s, x.j_s, g.mask, cfg.eps);
  lb.l_gra = 0.5 * (g1.value + g2.value);
  g.pred_dynamic.middleRows(0, B) = T(0.5) * g1.grad_a;
  g.pred_dynamic.middleRows(2 * B, B) = T(0.5) * g1.grad_b;
  g.pred_dynamic.middleRows(B, B) = T(0.5) * g2.grad_mid;

  // Covariance on both student projection branches.
  const auto cs = covariance_loss(x.proj_static);
  const auto cd = covariance_loss(x.proj_dynamic);
  lb.l_cov = cs.value + cd.value;
  g.proj_static = static_cast<T>(cfg.alpha) * cs.grad;
  g.proj_dynamic = static_cast<T>(cfg.alpha) * cd.grad;

  lb.total = compose_total(lb.l_sim, lb.l_gra, lb.l_cov, cfg.alpha);
  return {lb, g};
}

}  // namespace deaps::objectives
