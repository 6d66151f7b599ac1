#pragma once

// 1-D patch transformer encoder with a learned aggregate token, plus the MLP
// heads (static/dynamic projectors and predictors) used during training.

#include "deaps/core.hpp"
#include "deaps/nn.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace deaps::model {

struct EncoderConfig {
  Eigen::Index input_len = 1000;
  Eigen::Index patch_len = 20;
  Eigen::Index n_blocks = 6;
  Eigen::Index n_heads = 4;
  Eigen::Index model_dim = 128;
  Eigen::Index mlp_hidden = 512;
  Eigen::Index head_hidden = 512;
  Eigen::Index head_out = 256;

  Eigen::Index n_patches() const { return input_len / patch_len; }

  void validate() const {
    require(input_len > 0 && patch_len > 0 && input_len % patch_len == 0,
            "input_len must be divisible by patch_len");
    require(model_dim > 0 && n_heads > 0 && model_dim % n_heads == 0,
            "model_dim must be divisible by n_heads");
    require(n_blocks >= 1 && mlp_hidden >= 1 && head_hidden >= 1 && head_out >= 1,
            "layer sizes must be positive");
  }

  nlohmann::json to_json() const {
    return {{"input_len", input_len},   {"patch_len", patch_len},   {"n_blocks", n_blocks},
            {"n_heads", n_heads},       {"model_dim", model_dim},   {"mlp_hidden", mlp_hidden},
            {"head_hidden", head_hidden}, {"head_out", head_out}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.input_len = j.at("input_len");
    c.patch_len = j.at("patch_len");
    c.n_blocks = j.at("n_blocks");
    c.n_heads = j.at("n_heads");
    c.model_dim = j.at("model_dim");
    c.mlp_hidden = j.at("mlp_hidden");
    c.head_hidden = j.at("head_hidden");
    c.head_out = j.at("head_out");
    return c;
  }

  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), patch_embed_("encoder.patch_embed", cfg.patch_len, cfg.model_dim, rng),
        final_ln_("encoder.final_ln", cfg.model_dim) {
    cfg.validate();
    cls_.name = "encoder.cls_token";
    pos_.name = "encoder.pos_embed";
    cls_.decay = pos_.decay = false;
    cls_.value.resize(1, cfg.model_dim);
    pos_.value.resize(cfg.n_patches() + 1, cfg.model_dim);
    nn::init::normal(cls_.value, 0.02, rng);
    nn::init::normal(pos_.value, 0.02, rng);
    cls_.zero_grad();
    pos_.zero_grad();
    for (Eigen::Index b = 0; b < cfg.n_blocks; ++b)
      blocks_.emplace_back("encoder.block" + std::to_string(b), cfg.model_dim, cfg.n_heads, cfg.mlp_hidden, rng);
  }

  /// windows: S x input_len -> representations S x model_dim.
  Mat<T> forward(const Mat<T>& windows) {
    if (windows.cols() != cfg_.input_len)
      throw InvalidArgument("encoder expects windows of " + std::to_string(cfg_.input_len) + " samples, got " +
                            std::to_string(windows.cols()));
    const Eigen::Index S = windows.rows(), P = cfg_.n_patches(), L = P + 1, D = cfg_.model_dim;
    n_seq_ = S;
    const Eigen::Map<const Mat<T>> patches(windows.data(), S * P, cfg_.patch_len);
    const Mat<T> emb = patch_embed_.forward(patches);
    Mat<T> tokens(S * L, D);
    for (Eigen::Index s = 0; s < S; ++s) {
      tokens.row(s * L) = cls_.value.row(0) + pos_.value.row(0);
      tokens.middleRows(s * L + 1, P) = emb.middleRows(s * P, P) + pos_.value.bottomRows(P);
    }
    for (auto& b : blocks_) tokens = b.forward(tokens, L);
    Mat<T> agg(S, D);
    for (Eigen::Index s = 0; s < S; ++s) agg.row(s) = tokens.row(s * L);
    return final_ln_.forward(agg);
  }

  /// Inference in fixed-size chunks; output independent of the chunking.
  Mat<T> encode(const Mat<T>& windows, Eigen::Index chunk = 256) {
    Mat<T> out(windows.rows(), cfg_.model_dim);
    for (Eigen::Index r = 0; r < windows.rows(); r += chunk) {
      const Eigen::Index n = std::min(chunk, windows.rows() - r);
      out.middleRows(r, n) = forward(windows.middleRows(r, n));
    }
    return out;
  }

  void backward(const Mat<T>& d_repr) {
    const Eigen::Index S = n_seq_, P = cfg_.n_patches(), L = P + 1, D = cfg_.model_dim;
    const Mat<T> d_agg = final_ln_.backward(d_repr);
    Mat<T> d_tokens = Mat<T>::Zero(S * L, D);
    for (Eigen::Index s = 0; s < S; ++s) d_tokens.row(s * L) = d_agg.row(s);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d_tokens = it->backward(d_tokens);
    Mat<T> d_emb(S * P, D);
    for (Eigen::Index s = 0; s < S; ++s) {
      cls_.grad.row(0) += d_tokens.row(s * L);
      pos_.grad.row(0) += d_tokens.row(s * L);
      pos_.grad.bottomRows(P) += d_tokens.middleRows(s * L + 1, P);
      d_emb.middleRows(s * P, P) = d_tokens.middleRows(s * L + 1, P);
    }
    patch_embed_.backward(d_emb, false);
  }

  void collect(nn::ParamRefs<T>& out) {
    patch_embed_.collect(out);
    out.push_back(&cls_);
    out.push_back(&pos_);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  nn::Linear<T> patch_embed_;
  nn::Param<T> cls_, pos_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_ln_;
  Eigen::Index n_seq_ = 0;
};

/// Two-layer MLP: Linear -> BatchNorm -> ReLU -> Linear.
template <typename T>
class Head {
 public:
  Head() = default;
  Head(const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng)
      : fc1_(name + ".fc1", in, hidden, rng, nn::InitScheme::FanIn),
        bn_(name + ".bn", hidden),
        fc2_(name + ".fc2", hidden, out, rng, nn::InitScheme::FanIn) {}

  /// `groups` lists the row counts of the views stacked in `x`.
  Mat<T> forward(const Mat<T>& x, const std::vector<Eigen::Index>& groups, bool training = true) {
    return fc2_.forward(relu_.forward(bn_.forward(fc1_.forward(x), groups, training)));
  }

  Mat<T> forward(const Mat<T>& x, bool training = true) { return forward(x, {x.rows()}, training); }

  Mat<T> backward(const Mat<T>& dy) { return fc1_.backward(bn_.backward(relu_.backward(fc2_.backward(dy)))); }

  void collect(nn::ParamRefs<T>& out) {
    fc1_.collect(out);
    bn_.collect(out);
    fc2_.collect(out);
  }
  void collect_buffers(nn::BufferRefs<T>& out) { bn_.collect_buffers(out); }

  nn::Linear<T>& first() { return fc1_; }
  nn::Linear<T>& second() { return fc2_; }

 private:
  nn::Linear<T> fc1_;
  nn::GroupBatchNorm<T> bn_;
  nn::Relu<T> relu_;
  nn::Linear<T> fc2_;
};

enum class HeadKind { Static, Dynamic };

struct NetworkLayout {
  bool dynamic_head = true;  // second projector/predictor pair
  bool predictors = true;    // student-side predictors
};

/// Encoder plus heads. A student carries predictors; a teacher (from
/// make_teacher) carries the encoder and projectors only.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(const EncoderConfig& cfg, NetworkLayout layout, std::uint64_t seed) : layout_(layout) {
    std::mt19937_64 rng(mix_seed(seed, 0x11ULL));
    encoder_ = Encoder<T>(cfg, rng);
    const auto D = cfg.model_dim, Hh = cfg.head_hidden, O = cfg.head_out;
    proj_s_ = Head<T>("proj_static", D, Hh, O, rng);
    if (layout.dynamic_head) proj_d_ = Head<T>("proj_dynamic", D, Hh, O, rng);
    if (layout.predictors) {
      pred_s_ = Head<T>("pred_static", O, Hh, O, rng);
      if (layout.dynamic_head) pred_d_ = Head<T>("pred_dynamic", O, Hh, O, rng);
    }
  }

  Network make_teacher() const {
    Network t = *this;
    t.pred_s_.reset();
    t.pred_d_.reset();
    t.layout_.predictors = false;
    return t;
  }

  Encoder<T>& encoder() { return encoder_; }
  const EncoderConfig& config() const { return encoder_.config(); }
  NetworkLayout layout() const { return layout_; }
  bool has_predictors() const { return pred_s_.has_value(); }

  Head<T>& projector(HeadKind k) {
    if (k == HeadKind::Static) return proj_s_;
    if (!proj_d_) throw InvalidArgument("network has no dynamic projector");
    return *proj_d_;
  }

  Head<T>& predictor(HeadKind k) {
    auto& p = k == HeadKind::Static ? pred_s_ : pred_d_;
    if (!p) throw InvalidArgument("predictors exist on the student network only");
    return *p;
  }

  Mat<T> encode(const Mat<T>& windows) { return encoder_.forward(windows); }
  Mat<T> project(const Mat<T>& h, HeadKind k, const std::vector<Eigen::Index>& groups, bool training = true) {
    return projector(k).forward(h, groups, training);
  }
  Mat<T> predict(const Mat<T>& z, HeadKind k, const std::vector<Eigen::Index>& groups, bool training = true) {
    return predictor(k).forward(z, groups, training);
  }

  /// All trainable parameters in a fixed order.
  nn::ParamRefs<T> parameters() {
    nn::ParamRefs<T> out = shared_parameters();
    if (pred_s_) pred_s_->collect(out);
    if (pred_d_) pred_d_->collect(out);
    return out;
  }

  /// Encoder + projectors: the parameter set mirrored by the teacher.
  nn::ParamRefs<T> shared_parameters() {
    nn::ParamRefs<T> out;
    encoder_.collect(out);
    proj_s_.collect(out);
    if (proj_d_) proj_d_->collect(out);
    return out;
  }

  nn::ParamRefs<T> encoder_parameters() {
    nn::ParamRefs<T> out;
    encoder_.collect(out);
    return out;
  }

  nn::BufferRefs<T> buffers() {
    nn::BufferRefs<T> out;
    proj_s_.collect_buffers(out);
    if (proj_d_) proj_d_->collect_buffers(out);
    if (pred_s_) pred_s_->collect_buffers(out);
    if (pred_d_) pred_d_->collect_buffers(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  NetworkLayout layout_;
  Encoder<T> encoder_;
  Head<T> proj_s_;
  std::optional<Head<T>> proj_d_, pred_s_, pred_d_;
};

template <typename T>
std::size_t count_parameters(const nn::ParamRefs<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

/// Trainable parameter count of the encoder for a configuration.
inline std::size_t encoder_parameter_count(const EncoderConfig& cfg) {
  std::mt19937_64 rng(0);
  Encoder<float> enc(cfg, rng);
  nn::ParamRefs<float> refs;
  enc.collect(refs);
  return count_parameters(refs);
}

}  // namespace deaps::model
