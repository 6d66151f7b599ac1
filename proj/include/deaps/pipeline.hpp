#pragma once

// Preprocessing chain: resample to 100 Hz -> 0.5 Hz order-5 Butterworth
// high-pass (zero phase) -> per-record z-score -> 10 s tiling -> quality gate.

#include "deaps/core.hpp"
#include "deaps/dsp.hpp"
#include "deaps/io.hpp"
#include "deaps/record.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace deaps::pipeline {

inline constexpr double kTargetFs = 100.0;
inline constexpr std::size_t kWindowLen = 1000;
inline constexpr double kWindowS = 10.0;
inline constexpr int kHighpassOrder = 5;
inline constexpr double kHighpassHz = 0.5;
inline constexpr double kMinInputFs = 50.0;
inline constexpr double kFlatlineStd = 0.05;
inline constexpr double kClipFraction = 0.05;

/// Identifies the preprocessing configuration; checkpoints carry it so that
/// representations are only extracted from identically prepared data.
inline std::string pipeline_hash() {
  return content_hash("resample=100;highpass=butter5@0.5Hz,filtfilt;normalize=record-zscore;"
                      "window=1000;quality=flat0.05,clip0.05");
}

inline SignalRecord resample_to_100hz(const SignalRecord& record) {
  if (record.fs < kMinInputFs) throw InvalidArgument("sampling rate below 50 Hz is rejected");
  SignalRecord out = record;
  out.samples = dsp::resample(record.samples, record.fs, kTargetFs);
  out.fs = kTargetFs;
  return out;
}

inline const dsp::Sos& highpass_sos() {
  static const dsp::Sos sos = dsp::butterworth(kHighpassOrder, kHighpassHz, kTargetFs, dsp::Band::Highpass);
  return sos;
}

inline SignalRecord highpass(const SignalRecord& record) {
  require(record.fs == kTargetFs, "highpass expects a 100 Hz record");
  SignalRecord out = record;
  out.samples = dsp::filtfilt(highpass_sos(), record.samples);
  return out;
}

/// Zero mean, unit sample standard deviation (n - 1 denominator).
inline SignalRecord normalize(const SignalRecord& record) {
  const auto n = record.samples.size();
  require(n >= 2, "normalize needs at least two samples");
  double mean = 0.0;
  for (double v : record.samples) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : record.samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0) || sd < 1e-12 * (std::abs(mean) + 1.0))
    throw InvalidArgument("zero-variance record cannot be normalized");
  SignalRecord out = record;
  for (double& v : out.samples) v = (v - mean) / sd;
  return out;
}

struct WindowSet {
  Mat<double> windows;                // n_windows x 1000
  std::vector<double> start_times_s;  // multiples of 10 s
  std::vector<int> labels;            // optional; empty when unknown
  std::optional<double> record_min;
  std::optional<double> record_max;

  std::size_t size() const { return static_cast<std::size_t>(windows.rows()); }
};

inline WindowSet windowize(const SignalRecord& record) {
  if (record.samples.size() < kWindowLen) throw InvalidArgument("record shorter than 10 s");
  const std::size_t n = record.samples.size() / kWindowLen;
  WindowSet ws;
  ws.windows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kWindowLen));
  for (std::size_t w = 0; w < n; ++w) {
    for (std::size_t k = 0; k < kWindowLen; ++k)
      ws.windows(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(k)) = record.samples[w * kWindowLen + k];
    ws.start_times_s.push_back(static_cast<double>(w) * kWindowS);
  }
  if (record.window_labels.size() >= n)
    ws.labels.assign(record.window_labels.begin(), record.window_labels.begin() + static_cast<std::ptrdiff_t>(n));
  const auto [lo, hi] = std::minmax_element(record.samples.begin(), record.samples.end());
  ws.record_min = *lo;
  ws.record_max = *hi;
  return ws;
}

/// Quality verdict per window: flatline (std < 0.05) or clipped (>= 5% of
/// samples sitting at the record extremes) windows fail.
inline std::vector<int> quality_mask(const WindowSet& ws) {
  std::vector<int> keep(ws.size(), 1);
  for (Eigen::Index w = 0; w < ws.windows.rows(); ++w) {
    const auto row = ws.windows.row(w);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().sum() / static_cast<double>(row.size() - 1));
    if (sd < kFlatlineStd) {
      keep[static_cast<std::size_t>(w)] = 0;
      continue;
    }
    const double lo = ws.record_min.value_or(row.minCoeff());
    const double hi = ws.record_max.value_or(row.maxCoeff());
    const double tol = 1e-9 * std::max(1.0, hi - lo);
    Eigen::Index at_extreme = 0;
    for (Eigen::Index k = 0; k < row.size(); ++k)
      if (row(k) >= hi - tol || row(k) <= lo + tol) ++at_extreme;
    if (static_cast<double>(at_extreme) >= kClipFraction * static_cast<double>(row.size()))
      keep[static_cast<std::size_t>(w)] = 0;
  }
  return keep;
}

inline WindowSet quality_filter(const WindowSet& ws) {
  const auto keep = quality_mask(ws);
  WindowSet out;
  out.record_min = ws.record_min;
  out.record_max = ws.record_max;
  std::vector<Eigen::Index> rows;
  for (std::size_t w = 0; w < keep.size(); ++w)
    if (keep[w]) rows.push_back(static_cast<Eigen::Index>(w));
  out.windows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kWindowLen));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.windows.row(static_cast<Eigen::Index>(k)) = ws.windows.row(rows[k]);
    out.start_times_s.push_back(ws.start_times_s[static_cast<std::size_t>(rows[k])]);
    if (!ws.labels.empty()) out.labels.push_back(ws.labels[static_cast<std::size_t>(rows[k])]);
  }
  return out;
}

/// Resample -> high-pass -> normalize, then mark failing windows in
/// `window_keep`. The returned record is flagged as preprocessed.
inline SignalRecord preprocess(const SignalRecord& raw) {
  raw.validate();
  SignalRecord r = normalize(highpass(resample_to_100hz(raw)));
  r.window_keep = quality_mask(windowize(r));
  r.preprocessed = true;
  return r;
}

/// Full chain down to the quality-filtered tiling.
inline WindowSet compose(const SignalRecord& raw) {
  return quality_filter(windowize(normalize(highpass(resample_to_100hz(raw)))));
}

/// Preprocesses every record of a manifest into `out_dir` (same file formats)
/// and writes `pipeline.json` with the pipeline hash.
inline io::Manifest preprocess_manifest(const io::Manifest& in, const io::fs::path& out_dir) {
  io::Manifest out;
  out.root = out_dir;
  for (const auto& e : in.entries) {
    const SignalRecord r = preprocess(io::load_record(in, e));
    io::save_record(out_dir / e.path, r, {{"pipeline_hash", pipeline_hash()}});
    out.entries.push_back({e.subject_id, e.record_id, e.path, r.duration_s()});
  }
  io::write_manifest(out);
  io::write_json(out_dir / "pipeline.json", {{"pipeline_hash", pipeline_hash()},
                                             {"fs", kTargetFs},
                                             {"window_len", kWindowLen},
                                             {"highpass_order", kHighpassOrder},
                                             {"highpass_hz", kHighpassHz}});
  return out;
}

/// Loads a manifest, preprocessing any record not already preprocessed.
inline std::vector<SignalRecord> load_preprocessed(const io::Manifest& m) {
  std::vector<SignalRecord> out;
  for (const auto& e : m.entries) {
    SignalRecord r = io::load_record(m, e);
    if (!r.preprocessed) {
      r = preprocess(r);
    } else {
      const auto meta = io::read_json(m.meta_path(e));
      if (meta.value("pipeline_hash", std::string{}) != pipeline_hash())
        throw RuntimeError("record " + e.path + " was prepared with a different pipeline");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace deaps::pipeline
