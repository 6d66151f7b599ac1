#pragma once

#include "deaps/core.hpp"
#include "deaps/io.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace deaps {

/// A single-channel recording with its identity and optional ground truth.
struct SignalRecord {
  int subject_id = 0;
  int record_id = 0;
  double fs = 100.0;
  std::vector<double> samples;
  /// Per 10 s window state label (0 regular, 1 irregular); empty if unknown.
  std::vector<int> window_labels;
  /// Per 10 s window keep flag written by the quality filter; empty = all kept.
  std::vector<int> window_keep;
  std::optional<int> static_class;
  bool preprocessed = false;

  double duration_s() const { return static_cast<double>(samples.size()) / fs; }

  void validate() const {
    require(fs > 0.0, "record fs must be positive");
    for (double v : samples) require(std::isfinite(v), "record contains non-finite samples");
  }
};

namespace io {

inline json record_meta(const SignalRecord& r) {
  json j;
  j["subject_id"] = r.subject_id;
  j["record_id"] = r.record_id;
  j["fs"] = r.fs;
  j["n_samples"] = r.samples.size();
  if (!r.window_labels.empty()) j["window_labels"] = r.window_labels;
  if (!r.window_keep.empty()) j["window_keep"] = r.window_keep;
  if (r.static_class) j["static_class"] = *r.static_class;
  j["preprocessed"] = r.preprocessed;
  return j;
}

/// Writes `<stem>.f32` and `<stem>.json`; extra metadata is merged into the sidecar.
inline void save_record(const fs::path& stem, const SignalRecord& r, const json& extra = {}) {
  fs::create_directories(stem.parent_path());
  std::vector<float> f(r.samples.begin(), r.samples.end());
  write_f32(fs::path(stem.string() + ".f32"), f);
  json meta = record_meta(r);
  if (extra.is_object()) meta.update(extra);
  write_json(fs::path(stem.string() + ".json"), meta);
}

inline SignalRecord load_record(const Manifest& m, const ManifestEntry& e) {
  const json meta = read_json(m.meta_path(e));
  SignalRecord r;
  r.subject_id = meta.at("subject_id").get<int>();
  r.record_id = meta.at("record_id").get<int>();
  r.fs = meta.at("fs").get<double>();
  const auto raw = read_f32(m.samples_path(e));
  if (raw.size() != meta.at("n_samples").get<std::size_t>())
    throw RuntimeError("sample count mismatch for " + e.path);
  r.samples.assign(raw.begin(), raw.end());
  if (meta.contains("window_labels")) r.window_labels = meta["window_labels"].get<std::vector<int>>();
  if (meta.contains("window_keep")) r.window_keep = meta["window_keep"].get<std::vector<int>>();
  if (meta.contains("static_class")) r.static_class = meta["static_class"].get<int>();
  r.preprocessed = meta.value("preprocessed", false);
  if (r.subject_id != e.subject_id || r.record_id != e.record_id)
    throw RuntimeError("manifest/sidecar identity mismatch for " + e.path);
  return r;
}

inline std::vector<SignalRecord> load_records(const Manifest& m) {
  std::vector<SignalRecord> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(load_record(m, e));
  return out;
}

}  // namespace io
}  // namespace deaps
