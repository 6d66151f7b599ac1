#pragma once

// RunConfig: every tunable default as one flat JSON object. Files and
// command-line overrides may only name known keys.

#include "deaps/core.hpp"
#include "deaps/eval/embed.hpp"
#include "deaps/io.hpp"
#include "deaps/state.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace deaps::config {

using nlohmann::json;

struct RunConfig {
  train::TrainConfig train;
  std::string protocol = "loo";
  std::string probe_label = eval::kStateLabel;
  int kfold_k = 5;

  eval::ProtocolSpec protocol_spec() const {
    return {eval::parse_protocol(protocol), probe_label, kfold_k, train.seed};
  }

  void validate() const {
    train.validate();
    eval::parse_protocol(protocol);
    require(!probe_label.empty(), "probe_label must not be empty");
    require(kfold_k >= 2, "kfold_k must be at least 2");
  }
};

namespace detail {

struct Field {
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename V>
V as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) throw InvalidArgument("");
      return v.get<V>();
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw InvalidArgument("");
      return v.get<V>();
    } else {
      if (!v.is_string()) throw InvalidArgument("");
      return v.get<V>();
    }
  } catch (const std::exception&) {
    throw InvalidArgument("config key '" + key + "' has a value of the wrong type: " + v.dump());
  }
}

#define DEAPS_FIELD(key, type, member)                                        \
  {                                                                           \
    key, Field{[](const RunConfig& c) { return json(c.member); },             \
               [](RunConfig& c, const json& v) { c.member = as<type>(v, key); }} \
  }

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"method", Field{[](const RunConfig& c) { return json(train::to_string(c.train.method)); },
                       [](RunConfig& c, const json& v) { c.train.method = train::parse_method(as<std::string>(v, "method")); }}},
      DEAPS_FIELD("iterations", int, train.iterations),
      DEAPS_FIELD("batch_size", int, train.batch_size),
      DEAPS_FIELD("lr", double, train.lr),
      DEAPS_FIELD("weight_decay", double, train.weight_decay),
      DEAPS_FIELD("tau", double, train.tau),
      DEAPS_FIELD("temperature", double, train.temperature),
      DEAPS_FIELD("alpha", double, train.loss.alpha),
      DEAPS_FIELD("eps", double, train.loss.eps),
      DEAPS_FIELD("n_selected", int, train.loss.n_selected),
      DEAPS_FIELD("window_size_s", int, train.window_size_s),
      DEAPS_FIELD("min_offset_s", int, train.min_offset_s),
      DEAPS_FIELD("seed", std::uint64_t, train.seed),
      DEAPS_FIELD("checkpoint_every", int, train.checkpoint_every),
      DEAPS_FIELD("patch_len", Eigen::Index, train.encoder.patch_len),
      DEAPS_FIELD("n_blocks", Eigen::Index, train.encoder.n_blocks),
      DEAPS_FIELD("n_heads", Eigen::Index, train.encoder.n_heads),
      DEAPS_FIELD("model_dim", Eigen::Index, train.encoder.model_dim),
      DEAPS_FIELD("mlp_hidden", Eigen::Index, train.encoder.mlp_hidden),
      DEAPS_FIELD("head_hidden", Eigen::Index, train.encoder.head_hidden),
      {"head_out", Field{[](const RunConfig& c) { return json(c.train.encoder.head_out); },
                         [](RunConfig& c, const json& v) {
                           c.train.encoder.head_out = as<Eigen::Index>(v, "head_out");
                           c.train.loss.proj_dim = static_cast<int>(c.train.encoder.head_out);
                         }}},
      DEAPS_FIELD("protocol", std::string, protocol),
      DEAPS_FIELD("probe_label", std::string, probe_label),
      DEAPS_FIELD("kfold_k", int, kfold_k),
  };
  return f;
}

#undef DEAPS_FIELD

}  // namespace detail

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : detail::fields()) out.push_back(k);
  return out;
}

/// Named starting points. "smoke" shrinks the encoder and schedule so a run
/// finishes in minutes on one CPU core.
inline RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "default") return c;
  if (name == "smoke") {
    c.train.iterations = 2000;
    c.train.batch_size = 32;
    c.train.checkpoint_every = 500;
    c.train.encoder.model_dim = 64;
    c.train.encoder.n_blocks = 3;
    c.train.encoder.mlp_hidden = 128;
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected default or smoke)");
}

inline json to_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& [k, f] : detail::fields()) j[k] = f.get(c);
  return j;
}

/// Overlays a flat object onto `c`; unknown keys are rejected.
inline void overlay(RunConfig& c, const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a flat JSON object");
  const auto& f = detail::fields();
  for (const auto& [k, v] : j.items()) {
    auto it = f.find(k);
    if (it == f.end()) throw InvalidArgument("unknown config key '" + k + "'");
    it->second.set(c, v);
  }
}

/// Parses a `key=value` override; the value is read as JSON when possible and
/// as a bare string otherwise.
inline std::pair<std::string, json> parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("override '" + kv + "' is not key=value");
  const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;
  return {key, v};
}

inline RunConfig load_file(const io::fs::path& path, RunConfig base) {
  json j = json::parse(io::read_text(path), nullptr, false);
  if (j.is_discarded()) throw InvalidArgument("config file " + path.string() + " is not valid JSON");
  overlay(base, j);
  return base;
}

inline std::string hash(const RunConfig& c) { return content_hash(to_json(c).dump()); }

/// Writes the resolved config and its hash into `dir`.
inline void echo(const io::fs::path& dir, const RunConfig& c) {
  io::fs::create_directories(dir);
  io::write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  io::write_text(dir / "config.hash", hash(c) + "\n");
}

}  // namespace deaps::config
