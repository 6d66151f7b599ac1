#pragma once

// Minimal layer library with explicit reverse-mode passes. Every layer caches
// what its backward pass needs during forward(), so each instance supports one
// forward/backward pair in flight. Rows are tokens or batch items.

#include "deaps/core.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace deaps::nn {

template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool decay = true;  // biases and normalization parameters are excluded

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

/// Non-trainable state (batch-norm running statistics).
template <typename T>
using BufferRefs = std::vector<std::pair<std::string, Mat<T>*>>;

namespace init {

template <typename T>
void uniform(Mat<T>& m, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-static_cast<double>(bound), static_cast<double>(bound));
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(d(rng));
}

template <typename T>
void normal(Mat<T>& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(d(rng));
}

}  // namespace init

enum class InitScheme { Xavier, FanIn };

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng,
         InitScheme scheme = InitScheme::Xavier) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    bias_.decay = false;
    weight_.value.resize(in, out);
    bias_.value.setZero(1, out);
    if (scheme == InitScheme::Xavier) {
      init::uniform(weight_.value, static_cast<T>(std::sqrt(6.0 / static_cast<double>(in + out))), rng);
    } else {
      const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
      init::uniform(weight_.value, bound, rng);
      init::uniform(bias_.value, bound, rng);
    }
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Mat<T> forward(const Mat<T>& x) {
    input_ = x;
    Mat<T> y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx (skipped when not needed).
  Mat<T> backward(const Mat<T>& dy, bool need_input_grad = true) {
    weight_.grad.noalias() += input_.transpose() * dy;
    bias_.grad += dy.colwise().sum();
    if (!need_input_grad) return {};
    return dy * weight_.value.transpose();
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Eigen::Index in_features() const { return weight_.value.rows(); }
  Eigen::Index out_features() const { return weight_.value.cols(); }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  Param<T> weight_, bias_;
  Mat<T> input_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, Eigen::Index dim) {
    gamma_.name = name + ".gamma";
    beta_.name = name + ".beta";
    gamma_.decay = beta_.decay = false;
    gamma_.value.setOnes(1, dim);
    beta_.value.setZero(1, dim);
    gamma_.zero_grad();
    beta_.zero_grad();
  }

  Mat<T> forward(const Mat<T>& x) {
    const Eigen::Index n = x.rows(), d = x.cols();
    xhat_.resize(n, d);
    rstd_.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
      const T mu = x.row(r).mean();
      const T var = (x.row(r).array() - mu).square().mean();
      const T rs = T(1) / std::sqrt(var + static_cast<T>(kEps));
      rstd_(r, 0) = rs;
      xhat_.row(r) = (x.row(r).array() - mu) * rs;
    }
    Mat<T> y = xhat_.array().rowwise() * gamma_.value.row(0).array();
    y.rowwise() += beta_.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    gamma_.grad += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta_.grad += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T m1 = dxhat.row(r).mean();
      const T m2 = (dxhat.row(r).array() * xhat_.row(r).array()).mean();
      dx.row(r) = rstd_(r, 0) * (dxhat.row(r).array() - m1 - xhat_.row(r).array() * m2);
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  static constexpr double kEps = 1e-5;
  Param<T> gamma_, beta_;
  Mat<T> xhat_, rstd_;
};

/// Exact (erf) GELU.
template <typename T>
class Gelu {
 public:
  Mat<T> forward(const Mat<T>& x) {
    input_ = x;
    cdf_ = T(0.5) * ((x.array() * static_cast<T>(std::numbers::sqrt2 / 2)).erf() + T(1));
    return (x.array() * cdf_.array()).matrix();
  }

  Mat<T> backward(const Mat<T>& dy) const {
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    const auto pdf = (input_.array().square() * T(-0.5)).exp() * inv_sqrt_2pi;
    return (dy.array() * (cdf_.array() + input_.array() * pdf)).matrix();
  }

 private:
  Mat<T> input_, cdf_;
};

template <typename T>
class Relu {
 public:
  Mat<T> forward(const Mat<T>& x) {
    input_ = x;
    return x.cwiseMax(T(0));
  }
  Mat<T> backward(const Mat<T>& dy) const {
    return (input_.array() > T(0)).select(dy, Mat<T>::Zero(dy.rows(), dy.cols()));
  }

 private:
  Mat<T> input_;
};

/// Batch normalization over row groups: in training mode each contiguous group
/// of rows (one view of the batch) is normalized with its own statistics. A
/// group of one row is passed through unnormalized.
template <typename T>
class GroupBatchNorm {
 public:
  GroupBatchNorm() = default;
  GroupBatchNorm(std::string name, Eigen::Index dim) : name_(std::move(name)) {
    gamma_.name = name_ + ".gamma";
    beta_.name = name_ + ".beta";
    gamma_.decay = beta_.decay = false;
    gamma_.value.setOnes(1, dim);
    beta_.value.setZero(1, dim);
    gamma_.zero_grad();
    beta_.zero_grad();
    running_mean_.setZero(1, dim);
    running_var_.setOnes(1, dim);
  }

  Mat<T> forward(const Mat<T>& x, const std::vector<Eigen::Index>& groups, bool training) {
    const Eigen::Index d = x.cols();
    xhat_.resize(x.rows(), d);
    rstd_.resize(static_cast<Eigen::Index>(groups.size()), d);
    groups_ = groups;
    if (!training) {
      const RowVec<T> rs = (running_var_.row(0).array() + static_cast<T>(kEps)).rsqrt();
      xhat_ = (x.rowwise() - running_mean_.row(0)).array().rowwise() * rs.array();
    } else {
      Eigen::Index off = 0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const Eigen::Index n = groups[g];
        auto blk = x.middleRows(off, n);
        if (n == 1) {
          xhat_.middleRows(off, n) = blk;
          rstd_.row(static_cast<Eigen::Index>(g)).setOnes();
        } else {
          const RowVec<T> mu = blk.colwise().mean();
          const RowVec<T> var = (blk.rowwise() - mu).array().square().colwise().mean();
          const RowVec<T> rs = (var.array() + static_cast<T>(kEps)).rsqrt();
          rstd_.row(static_cast<Eigen::Index>(g)) = rs;
          xhat_.middleRows(off, n) = (blk.rowwise() - mu).array().rowwise() * rs.array();
          const T unbias = static_cast<T>(n) / static_cast<T>(n - 1);
          running_mean_.row(0) = (T(1) - kMomentum) * running_mean_.row(0) + kMomentum * mu;
          running_var_.row(0) = (T(1) - kMomentum) * running_var_.row(0) + kMomentum * unbias * var;
        }
        off += n;
      }
    }
    Mat<T> y = xhat_.array().rowwise() * gamma_.value.row(0).array();
    y.rowwise() += beta_.value.row(0);
    return y;
  }

  /// Valid after a training-mode forward.
  Mat<T> backward(const Mat<T>& dy) {
    gamma_.grad += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta_.grad += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    Eigen::Index off = 0;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const Eigen::Index n = groups_[g];
      if (n == 1) {
        dx.middleRows(off, n) = dxhat.middleRows(off, n);
      } else {
        auto dh = dxhat.middleRows(off, n);
        auto xh = xhat_.middleRows(off, n);
        const RowVec<T> s1 = dh.colwise().sum();
        const RowVec<T> s2 = (dh.array() * xh.array()).colwise().sum();
        const T inv_n = T(1) / static_cast<T>(n);
        dx.middleRows(off, n) =
            ((dh.array().rowwise() - s1.array() * inv_n) - xh.array().rowwise() * (s2.array() * inv_n)).rowwise() *
            rstd_.row(static_cast<Eigen::Index>(g)).array();
      }
      off += n;
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(BufferRefs<T>& out) {
    out.emplace_back(name_ + ".running_mean", &running_mean_);
    out.emplace_back(name_ + ".running_var", &running_var_);
  }

 private:
  static constexpr double kEps = 1e-5;
  static constexpr T kMomentum = T(0.1);
  std::string name_;
  Param<T> gamma_, beta_;
  Mat<T> running_mean_, running_var_;
  Mat<T> xhat_, rstd_;
  std::vector<Eigen::Index> groups_;
};

/// Multi-head self-attention over sequences of fixed length stacked row-wise.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(std::string name, Eigen::Index dim, Eigen::Index heads, std::mt19937_64& rng)
      : qkv_(name + ".qkv", dim, 3 * dim, rng), proj_(name + ".proj", dim, dim, rng), heads_(heads) {
    require(dim % heads == 0, "model_dim must be divisible by n_heads");
  }

  Mat<T> forward(const Mat<T>& x, Eigen::Index seq_len) {
    const Eigen::Index d = x.cols(), dh = d / heads_, n_seq = x.rows() / seq_len;
    seq_len_ = seq_len;
    qkv_out_ = qkv_.forward(x);
    probs_.resize(n_seq * heads_ * seq_len, seq_len);
    Mat<T> ctx(x.rows(), d);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> scores(seq_len, seq_len), q(seq_len, dh), k(seq_len, dh), v(seq_len, dh);
    Eigen::Matrix<T, Eigen::Dynamic, 1> col(seq_len);
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const Eigen::Index r0 = s * seq_len;
      for (Eigen::Index h = 0; h < heads_; ++h) {
        q = qkv_out_.block(r0, h * dh, seq_len, dh);
        k = qkv_out_.block(r0, d + h * dh, seq_len, dh);
        v = qkv_out_.block(r0, 2 * d + h * dh, seq_len, dh);
        scores.noalias() = scale * (q * k.transpose());
        col.noalias() = scores.rowwise().maxCoeff();
        scores.colwise() -= col;
        scores.array() = scores.array().exp();
        col = scores.rowwise().sum().cwiseInverse();
        scores.array().colwise() *= col.array();
        probs_.middleRows((s * heads_ + h) * seq_len, seq_len) = scores;
        ctx.block(r0, h * dh, seq_len, dh).noalias() = scores * v;
      }
    }
    return proj_.forward(ctx);
  }

  Mat<T> backward(const Mat<T>& dy) {
    const Mat<T> dctx = proj_.backward(dy);
    const Eigen::Index d = dctx.cols(), dh = d / heads_, L = seq_len_, n_seq = dctx.rows() / L;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> dqkv(dctx.rows(), 3 * d);
    Mat<T> dp(L, L), ds(L, L), p(L, L), q(L, dh), k(L, dh), v(L, dh), dc(L, dh), tmp(L, dh);
    Eigen::Matrix<T, Eigen::Dynamic, 1> col(L);
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const Eigen::Index r0 = s * L;
      for (Eigen::Index h = 0; h < heads_; ++h) {
        q = qkv_out_.block(r0, h * dh, L, dh);
        k = qkv_out_.block(r0, d + h * dh, L, dh);
        v = qkv_out_.block(r0, 2 * d + h * dh, L, dh);
        p = probs_.middleRows((s * heads_ + h) * L, L);
        dc = dctx.block(r0, h * dh, L, dh);
        dp.noalias() = dc * v.transpose();
        tmp.noalias() = p.transpose() * dc;
        dqkv.block(r0, 2 * d + h * dh, L, dh) = tmp;
        ds = p.cwiseProduct(dp);
        col = ds.rowwise().sum();
        dp.colwise() -= col;
        ds = p.cwiseProduct(dp);
        tmp.noalias() = scale * (ds * k);
        dqkv.block(r0, h * dh, L, dh) = tmp;
        tmp.noalias() = scale * (ds.transpose() * q);
        dqkv.block(r0, d + h * dh, L, dh) = tmp;
      }
    }
    return qkv_.backward(dqkv);
  }

  void collect(ParamRefs<T>& out) {
    qkv_.collect(out);
    proj_.collect(out);
  }

 private:
  Linear<T> qkv_, proj_;
  Eigen::Index heads_ = 1;
  Eigen::Index seq_len_ = 0;
  Mat<T> qkv_out_, probs_;
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Eigen::Index dim, Eigen::Index heads, Eigen::Index mlp_hidden,
                   std::mt19937_64& rng)
      : ln1_(name + ".ln1", dim),
        attn_(name + ".attn", dim, heads, rng),
        ln2_(name + ".ln2", dim),
        fc1_(name + ".fc1", dim, mlp_hidden, rng),
        fc2_(name + ".fc2", mlp_hidden, dim, rng) {}

  Mat<T> forward(const Mat<T>& x, Eigen::Index seq_len) {
    Mat<T> h = x + attn_.forward(ln1_.forward(x), seq_len);
    Mat<T> out = h + fc2_.forward(act_.forward(fc1_.forward(ln2_.forward(h))));
    return out;
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> dh = dy + ln2_.backward(fc1_.backward(act_.backward(fc2_.backward(dy))));
    return dh + ln1_.backward(attn_.backward(dh));
  }

  void collect(ParamRefs<T>& out) {
    ln1_.collect(out);
    attn_.collect(out);
    ln2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
  }

 private:
  LayerNorm<T> ln1_;
  SelfAttention<T> attn_;
  LayerNorm<T> ln2_;
  Linear<T> fc1_;
  Gelu<T> act_;
  Linear<T> fc2_;
};

}  // namespace deaps::nn
