#pragma once

#include "deaps/core.hpp"
#include "deaps/nn.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace deaps::optim {

/// Adam with L2 weight decay added to the gradient (decay applies only to
/// parameters flagged `decay`).
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 3e-4;
    double weight_decay = 1.5e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const nn::ParamRefs<T>& params, Options opt) : opt_(opt) {
    for (const auto* p : params) {
      m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step(const nn::ParamRefs<T>& params) {
    require(params.size() == m_.size(), "optimizer/parameter set mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    const T step = static_cast<T>(opt_.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(opt_.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto* p = params[k];
      require(p->value.rows() == m_[k].rows() && p->value.cols() == m_[k].cols(), "optimizer shape mismatch");
      Mat<T> g = p->grad;
      if (p->decay && opt_.weight_decay != 0.0) g += static_cast<T>(opt_.weight_decay) * p->value;
      m_[k] = b1 * m_[k] + (T(1) - b1) * g;
      v_[k] = b2 * v_[k] + (T(1) - b2) * g.cwiseProduct(g);
      p->value.array() -= step * m_[k].array() / (v_[k].array().sqrt() * inv_sqrt_bc2 + eps);
    }
  }

  std::int64_t steps() const { return t_; }
  const Options& options() const { return opt_; }
  std::vector<Mat<T>>& first_moments() { return m_; }
  std::vector<Mat<T>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  Options opt_;
  std::vector<Mat<T>> m_, v_;
  std::int64_t t_ = 0;
};

/// xi <- tau * xi + (1 - tau) * theta, elementwise.
template <typename T>
void ema_update(Mat<T>& xi, const Mat<T>& theta, double tau) {
  if (xi.rows() != theta.rows() || xi.cols() != theta.cols()) throw InvalidArgument("ema_update: shape mismatch");
  require(tau >= 0.0 && tau <= 1.0, "ema_update: tau must lie in [0, 1]");
  xi = static_cast<T>(tau) * xi + static_cast<T>(1.0 - tau) * theta;
}

template <typename T>
void ema_update(const nn::ParamRefs<T>& teacher, const nn::ParamRefs<T>& student, double tau) {
  if (teacher.size() != student.size()) throw InvalidArgument("ema_update: parameter sets differ");
  for (std::size_t k = 0; k < teacher.size(); ++k) ema_update(teacher[k]->value, student[k]->value, tau);
}

}  // namespace deaps::optim
