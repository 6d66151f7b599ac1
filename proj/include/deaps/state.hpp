#pragma once

#include "deaps/core.hpp"
#include "deaps/model.hpp"
#include "deaps/objectives.hpp"
#include "deaps/optim.hpp"
#include "deaps/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace deaps::train {

enum class Method { Deaps, Byol, Contrastive };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Deaps: return "deaps";
    case Method::Byol: return "byol";
    case Method::Contrastive: return "contrastive";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "deaps") return Method::Deaps;
  if (s == "byol") return Method::Byol;
  if (s == "contrastive") return Method::Contrastive;
  throw InvalidArgument("unknown method '" + s + "' (expected deaps, byol or contrastive)");
}

struct TrainConfig {
  Method method = Method::Deaps;
  int iterations = 30000;
  int batch_size = 256;
  double lr = 3e-4;
  double weight_decay = 1.5e-6;
  double tau = 0.995;
  double temperature = 0.1;  // contrastive baseline only
  objectives::LossConfig loss;
  int window_size_s = 120;
  int min_offset_s = 10;
  std::uint64_t seed = 0;
  int checkpoint_every = 1000;
  model::EncoderConfig encoder;

  void validate() const {
    require(iterations >= 0, "iterations must be non-negative");
    require(batch_size >= 1, "batch_size must be positive");
    require(lr > 0.0, "lr must be positive");
    require(weight_decay >= 0.0, "weight_decay must be non-negative");
    require(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
    require(temperature > 0.0, "temperature must be positive");
    require(checkpoint_every >= 1, "checkpoint_every must be positive");
    require(loss.proj_dim == encoder.head_out, "loss proj_dim must equal the head output width");
    loss.validate();
    encoder.validate();
    sampler().validate();
    if (method == Method::Deaps) require(batch_size >= 2, "covariance term needs batch_size >= 2");
    if (method == Method::Contrastive) require(batch_size >= 2, "contrastive training needs batch_size >= 2");
  }

  sampling::SamplerConfig sampler() const { return {batch_size, window_size_s, min_offset_s, seed}; }

  model::NetworkLayout layout() const {
    switch (method) {
      case Method::Deaps: return {true, true};
      case Method::Byol: return {false, true};
      case Method::Contrastive: return {false, false};
    }
    return {};
  }

  nlohmann::json to_json() const {
    return {{"method", to_string(method)},
            {"iterations", iterations},
            {"batch_size", batch_size},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"tau", tau},
            {"temperature", temperature},
            {"alpha", loss.alpha},
            {"eps", loss.eps},
            {"n_selected", loss.n_selected},
            {"window_size_s", window_size_s},
            {"min_offset_s", min_offset_s},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"encoder", encoder.to_json()}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.method = parse_method(j.at("method").get<std::string>());
    c.iterations = j.at("iterations");
    c.batch_size = j.at("batch_size");
    c.lr = j.at("lr");
    c.weight_decay = j.at("weight_decay");
    c.tau = j.at("tau");
    c.temperature = j.at("temperature");
    c.loss.alpha = j.at("alpha");
    c.loss.eps = j.at("eps");
    c.loss.n_selected = j.at("n_selected");
    c.window_size_s = j.at("window_size_s");
    c.min_offset_s = j.at("min_offset_s");
    c.seed = j.at("seed");
    c.checkpoint_every = j.at("checkpoint_every");
    c.encoder = model::EncoderConfig::from_json(j.at("encoder"));
    c.loss.proj_dim = static_cast<int>(c.encoder.head_out);
    return c;
  }

  /// Hash of the canonical (key-sorted) JSON form.
  std::string hash() const { return content_hash(to_json().dump()); }
};

/// Student (trained), teacher (EMA copy; absent for the contrastive
/// baseline), optimizer and iteration counter.
template <typename T>
struct TrainState {
  TrainConfig config;
  model::Network<T> student;
  std::optional<model::Network<T>> teacher;
  optim::Adam<T> optimizer;
  std::int64_t iteration = 0;
};

/// Fresh state: deterministic in config.seed, teacher an exact copy of the
/// student's encoder and projectors.
template <typename T>
TrainState<T> make_state(const TrainConfig& config) {
  config.validate();
  TrainState<T> s;
  s.config = config;
  s.student = model::Network<T>(config.encoder, config.layout(), config.seed);
  if (config.method != Method::Contrastive) s.teacher = s.student.make_teacher();
  s.optimizer = optim::Adam<T>(s.student.parameters(), {config.lr, config.weight_decay});
  return s;
}

template <typename T>
TrainState<T> init_state(const TrainConfig& config, const sampling::Corpus& corpus) {
  if (corpus.subjects.empty()) throw InvalidArgument("corpus is empty");
  const auto sc = config.sampler();
  bool any = false;
  for (const auto& s : corpus.subjects) any = any || sampling::eligible(s, sc);
  if (!any) throw InvalidArgument("corpus has no subject with two sufficiently long records");
  return make_state<T>(config);
}

/// Stacks matrices row-wise.
template <typename T>
Mat<T> vstack(std::initializer_list<const Mat<T>*> parts) {
  Eigen::Index rows = 0, cols = (*parts.begin())->cols();
  for (const auto* p : parts) rows += p->rows();
  Mat<T> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto* p : parts) {
    out.middleRows(off, p->rows()) = *p;
    off += p->rows();
  }
  return out;
}

}  // namespace deaps::train
