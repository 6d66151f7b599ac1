#pragma once

// Comparators sharing the encoder, sampler and pipeline:
//   byol_step        plain non-contrastive student/teacher with one head pair
//   contrastive_step across-record NT-Xent (positives are two records of the
//                    same subject, every other batch item is a negative)

#include "deaps/core.hpp"
#include "deaps/objectives.hpp"
#include "deaps/optim.hpp"
#include "deaps/sampling.hpp"
#include "deaps/state.hpp"

#include <cmath>
#include <sstream>

namespace deaps::train {

/// Normalized-temperature cross entropy over 2B embeddings; row k of `a` and
/// row k of `b` form the positive pair.
template <typename T>
objectives::PairGrad<T> nt_xent(const Mat<T>& a, const Mat<T>& b, double temperature, double eps = 1e-8) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "nt_xent: shape mismatch");
  const Eigen::Index B = a.rows();
  if (B < 2) throw InvalidArgument("nt_xent needs at least 2 pairs (no negatives otherwise)");
  require(temperature > 0.0, "temperature must be positive");
  const Eigen::Index N = 2 * B;
  Mat<double> u(N, a.cols());
  u.topRows(B) = a.template cast<double>();
  u.bottomRows(B) = b.template cast<double>();
  Eigen::VectorXd norms(N);
  Mat<double> n(N, a.cols());
  for (Eigen::Index k = 0; k < N; ++k) {
    norms(k) = std::max(u.row(k).norm(), eps);
    n.row(k) = u.row(k) / norms(k);
  }
  const Mat<double> s = (n * n.transpose()) / temperature;
  Mat<double> ds = Mat<double>::Zero(N, N);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    const Eigen::Index pos = k < B ? k + B : k - B;
    double mx = -1e300;
    for (Eigen::Index l = 0; l < N; ++l)
      if (l != k) mx = std::max(mx, s(k, l));
    double z = 0.0;
    for (Eigen::Index l = 0; l < N; ++l)
      if (l != k) z += std::exp(s(k, l) - mx);
    loss += -s(k, pos) + mx + std::log(z);
    for (Eigen::Index l = 0; l < N; ++l)
      if (l != k) ds(k, l) = std::exp(s(k, l) - mx) / z / static_cast<double>(N);
    ds(k, pos) -= 1.0 / static_cast<double>(N);
  }
  const Mat<double> dn = ((ds + ds.transpose()) * n) / temperature;
  Mat<double> du(N, a.cols());
  for (Eigen::Index k = 0; k < N; ++k) {
    if (u.row(k).norm() > eps)
      du.row(k) = (dn.row(k) - n.row(k) * n.row(k).dot(dn.row(k))) / norms(k);
    else
      du.row(k) = dn.row(k) / eps;
  }
  objectives::PairGrad<T> out;
  out.value = loss / static_cast<double>(N);
  out.grad_a = du.topRows(B).template cast<T>();
  out.grad_b = du.bottomRows(B).template cast<T>();
  return out;
}

namespace detail {

template <typename T>
void check_finite(double loss, const sampling::QuadBatch& batch, std::int64_t iteration) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << iteration << " (batch seed " << batch.seed << ")";
    throw RuntimeError(msg.str());
  }
}

}  // namespace detail

/// One BYOL update on (x1, x_t) pairs: symmetrized cosine loss between student
/// predictions and teacher projections, Adam on the student, EMA on the teacher.
template <typename T>
objectives::LossBreakdown byol_step(TrainState<T>& state, const sampling::QuadBatch& batch) {
  require(state.teacher.has_value(), "byol_step needs a teacher network");
  const Eigen::Index B = batch.size();
  const Mat<T> x1 = batch.x1.template cast<T>(), xt = batch.x_t.template cast<T>();
  const Mat<T> X = vstack<T>({&x1, &xt});
  const std::vector<Eigen::Index> groups{B, B};
  auto& st = state.student;
  auto& te = *state.teacher;
  st.zero_grad();
  const Mat<T> h = st.encoder().forward(X);
  const Mat<T> z = st.projector(model::HeadKind::Static).forward(h, groups);
  const Mat<T> p = st.predictor(model::HeadKind::Static).forward(z, groups);
  const Mat<T> ht = te.encoder().forward(X);
  const Mat<T> zt = te.projector(model::HeadKind::Static).forward(ht, groups);

  const auto l12 = objectives::cosine_loss<T>(p.topRows(B), zt.bottomRows(B), state.config.loss.eps);
  const auto l21 = objectives::cosine_loss<T>(p.bottomRows(B), zt.topRows(B), state.config.loss.eps);
  objectives::LossBreakdown lb;
  lb.l_sim = 0.5 * (l12.value + l21.value);
  lb.total = lb.l_sim;
  detail::check_finite<T>(lb.total, batch, state.iteration);

  Mat<T> dp(2 * B, p.cols());
  dp.topRows(B) = T(0.5) * l12.grad_a;
  dp.bottomRows(B) = T(0.5) * l21.grad_a;
  const Mat<T> dz = st.predictor(model::HeadKind::Static).backward(dp);
  st.encoder().backward(st.projector(model::HeadKind::Static).backward(dz));
  state.optimizer.step(st.parameters());
  optim::ema_update(te.shared_parameters(), st.shared_parameters(), state.config.tau);
  ++state.iteration;
  return lb;
}

/// One NT-Xent update on (x1, x_t) pairs; no teacher is involved.
template <typename T>
objectives::LossBreakdown contrastive_step(TrainState<T>& state, const sampling::QuadBatch& batch) {
  const Eigen::Index B = batch.size();
  if (B < 2) throw InvalidArgument("contrastive_step needs a batch of at least 2");
  const Mat<T> x1 = batch.x1.template cast<T>(), xt = batch.x_t.template cast<T>();
  const Mat<T> X = vstack<T>({&x1, &xt});
  auto& st = state.student;
  st.zero_grad();
  const Mat<T> h = st.encoder().forward(X);
  const Mat<T> z = st.projector(model::HeadKind::Static).forward(h, {B, B});
  const auto l = nt_xent<T>(z.topRows(B), z.bottomRows(B), state.config.temperature, state.config.loss.eps);
  objectives::LossBreakdown lb;
  lb.l_sim = l.value;
  lb.total = l.value;
  detail::check_finite<T>(lb.total, batch, state.iteration);

  Mat<T> dz(2 * B, z.cols());
  dz.topRows(B) = l.grad_a;
  dz.bottomRows(B) = l.grad_b;
  st.encoder().backward(st.projector(model::HeadKind::Static).backward(dz));
  state.optimizer.step(st.parameters());
  ++state.iteration;
  return lb;
}

}  // namespace deaps::train
