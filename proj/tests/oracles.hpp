#pragma once

// Reference checks shared by the unit tests and the acceptance runner.

#include "deaps/objectives.hpp"

#include "support.hpp"

#include <algorithm>
#include <numeric>

namespace deaps::testing {

/// Brute-force selection: full stable sort by (-|diff|, index), take the first n.
inline Mat<double> mask_oracle(const Mat<double>& a, const Mat<double>& b, int n) {
  Mat<double> m = Mat<double>::Zero(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(a.cols()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index x, Eigen::Index y) {
      return std::abs(a(r, x) - b(r, x)) > std::abs(a(r, y) - b(r, y));
    });
    for (int k = 0; k < n; ++k) m(r, idx[static_cast<std::size_t>(k)]) = 1.0;
  }
  return m;
}

/// Random mask-oracle instance; values drawn from a small grid so ties are common.
inline bool mask_instance_matches(std::uint64_t seed, Eigen::Index B = 16, Eigen::Index d = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> grid(-4, 4);
  std::uniform_int_distribution<int> pick_n(1, static_cast<int>(d));
  Mat<double> a(B, d), b(B, d);
  const bool coarse = seed % 2 == 0;
  std::normal_distribution<double> nd;
  for (Eigen::Index r = 0; r < B; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      a(r, c) = coarse ? grid(rng) : nd(rng);
      b(r, c) = coarse ? grid(rng) : nd(rng);
    }
  const int n = pick_n(rng);
  const Mat<double> got = objectives::gradual_mask(a, b, n);
  if (got != mask_oracle(a, b, n)) return false;
  for (Eigen::Index r = 0; r < B; ++r)
    if (got.row(r).sum() != static_cast<double>(n)) return false;
  return true;
}

inline std::vector<double> random_offsets(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(10, 55);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Largest relative error between analytic and central-difference gradients
/// of the cosine loss (both arguments), B=4, d=8.
inline double fd_cosine(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat<double> a = random_mat(4, 8, rng), b = random_mat(4, 8, rng);
  const auto g = objectives::cosine_loss(a, b);
  auto f = [&] { return objectives::cosine_loss(a, b).value; };
  return std::max(rel_error(g.grad_a, numeric_grad(f, a)), rel_error(g.grad_b, numeric_grad(f, b)));
}

/// Gradual loss with a fixed mask from a separate pair of predictions.
inline double fd_gradual(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat<double> mid = random_mat(4, 8, rng), za = random_mat(4, 8, rng), zb = random_mat(4, 8, rng);
  const auto i = random_offsets(4, rng), j = random_offsets(4, rng);
  const Mat<double> mask = objectives::gradual_mask(random_mat(4, 8, rng), random_mat(4, 8, rng), 3);
  const auto g = objectives::gradual_loss(mid, za, zb, i, j, mask);
  auto f = [&] { return objectives::gradual_loss(mid, za, zb, i, j, mask).value; };
  return std::max({rel_error(g.grad_mid, numeric_grad(f, mid)), rel_error(g.grad_a, numeric_grad(f, za)),
                   rel_error(g.grad_b, numeric_grad(f, zb))});
}

inline double fd_covariance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat<double> z = random_mat(4, 8, rng);
  const auto g = objectives::covariance_loss(z);
  return rel_error(g.grad, numeric_grad([&] { return objectives::covariance_loss(z).value; }, z));
}

inline objectives::DeapsTensors<double> random_tensors(std::mt19937_64& rng, Eigen::Index B = 4, Eigen::Index d = 8) {
  objectives::DeapsTensors<double> x;
  x.pred_static = random_mat(2 * B, d, rng);
  x.proj_static = random_mat(2 * B, d, rng);
  x.pred_dynamic = random_mat(3 * B, d, rng);
  x.proj_dynamic = random_mat(3 * B, d, rng);
  x.teacher_static = random_mat(2 * B, d, rng);
  x.teacher_dynamic = random_mat(3 * B, d, rng);
  x.i_s = random_offsets(static_cast<std::size_t>(B), rng);
  x.j_s = random_offsets(static_cast<std::size_t>(B), rng);
  return x;
}

/// Total loss w.r.t. every student tensor. The selection is constant by
/// contract, so instances where a 1e-5 perturbation could flip it are redrawn.
inline double fd_total(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  objectives::LossConfig cfg;
  cfg.n_selected = 3;
  cfg.proj_dim = 8;
  auto selection_is_stable = [&](const objectives::DeapsTensors<double>& t) {
    const Eigen::Index B = t.batch();
    const Mat<double> diff = (t.pred_dynamic.topRows(B) - t.pred_dynamic.bottomRows(B)).cwiseAbs();
    for (Eigen::Index r = 0; r < B; ++r) {
      Eigen::RowVectorXd row = diff.row(r);
      std::sort(row.data(), row.data() + row.size(), std::greater<>());
      if (row(cfg.n_selected - 1) - row(cfg.n_selected) < 1e-3) return false;
    }
    return true;
  };
  auto x = random_tensors(rng);
  while (!selection_is_stable(x)) x = random_tensors(rng);
  const auto g = objectives::total_loss(x, cfg).second;
  auto f = [&] { return objectives::total_loss(x, cfg).first.total; };
  return std::max({rel_error(g.pred_static, numeric_grad(f, x.pred_static)),
                   rel_error(g.proj_static, numeric_grad(f, x.proj_static)),
                   rel_error(g.pred_dynamic, numeric_grad(f, x.pred_dynamic)),
                   rel_error(g.proj_dynamic, numeric_grad(f, x.proj_dynamic))});
}

}  // namespace deaps::testing
