#pragma once

// Synthetic quasiperiodic recordings with known static (subject morphology)
// and dynamic (rhythm state) factors.
//
// Each beat is the sum of three Gaussian bumps: an early bump, a main bump and
// a late bump. The subject's morphology vector fixes their amplitudes, widths
// and offsets. State 0 is a regular rhythm; state 1 drops the early bump and
// draws inter-beat intervals from a gamma distribution.

#include "deaps/core.hpp"
#include "deaps/io.hpp"
#include "deaps/record.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace deaps::synth {

inline constexpr double kFs = 100.0;
inline constexpr double kWindowS = 10.0;

/// Morphology layout (all entries in [0.2, 2.0]):
///   0 main amplitude   1 main width
///   2 late amplitude   3 late width   4 late offset
///   5 early amplitude  6 early width  7 early offset
struct SubjectSpec {
  int subject_id = 0;
  std::array<double, 8> morphology{};
  double base_rate = 70.0;  // beats per minute
  int static_class = 0;
};

/// Static class rule: the late-bump amplitude parameter exceeds the main-bump
/// one. A ratio of amplitudes survives per-record normalization, and the two
/// entries are i.i.d., so the classes are balanced.
inline int static_class_of(const std::array<double, 8>& morphology) {
  return morphology[2] > morphology[0] ? 1 : 0;
}

struct StateSegment {
  double start_s = 0.0;
  int state = 0;
};

struct StateSchedule {
  std::vector<StateSegment> segments;
  double total_duration_s = 0.0;

  void validate() const {
    require(!segments.empty(), "schedule has no segments");
    require(segments.front().start_s == 0.0, "schedule must start at 0 s");
    require(total_duration_s > 0.0, "schedule duration must be positive");
    for (std::size_t k = 0; k < segments.size(); ++k) {
      require(segments[k].state == 0 || segments[k].state == 1, "state must be 0 or 1");
      require(segments[k].start_s < total_duration_s, "segment starts past the end");
      if (k > 0) require(segments[k].start_s > segments[k - 1].start_s, "segment starts must increase");
    }
  }

  int state_at(double t) const {
    int s = segments.front().state;
    for (const auto& seg : segments) {
      if (seg.start_s <= t) s = seg.state;
      else break;
    }
    return s;
  }

  /// Time spent in `state` within [a, b).
  double time_in_state(double a, double b, int state) const {
    double total = 0.0;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const double s0 = segments[k].start_s;
      const double s1 = k + 1 < segments.size() ? segments[k + 1].start_s : total_duration_s;
      if (segments[k].state != state) continue;
      total += std::max(0.0, std::min(b, s1) - std::max(a, s0));
    }
    return total;
  }

  /// Majority state of each full 10 s window; exact ties go to state 1.
  std::vector<int> window_labels() const {
    const auto n = static_cast<std::size_t>(std::floor(total_duration_s / kWindowS + 1e-9));
    std::vector<int> labels(n);
    for (std::size_t w = 0; w < n; ++w) {
      const double a = static_cast<double>(w) * kWindowS;
      labels[w] = time_in_state(a, a + kWindowS, 1) >= 0.5 * kWindowS ? 1 : 0;
    }
    return labels;
  }
};

struct SynthRecord {
  int subject_id = 0;
  int record_id = 0;
  std::vector<double> samples;  // 100 Hz
  std::vector<int> window_labels;
  StateSchedule schedule;
  std::vector<double> beat_times_s;  // ground-truth main-bump times
  int static_class = 0;

  SignalRecord to_signal() const {
    SignalRecord r;
    r.subject_id = subject_id;
    r.record_id = record_id;
    r.fs = kFs;
    r.samples = samples;
    r.window_labels = window_labels;
    r.static_class = static_class;
    return r;
  }
};

inline SubjectSpec make_subject(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x5ULL));
  std::uniform_real_distribution<double> morph(0.2, 2.0);
  std::uniform_real_distribution<double> rate(50.0, 100.0);
  SubjectSpec s;
  s.subject_id = static_cast<int>(seed);
  for (auto& m : s.morphology) m = morph(rng);
  s.base_rate = rate(rng);
  s.static_class = static_class_of(s.morphology);
  return s;
}

inline StateSchedule constant_schedule(double duration_s, int state = 0) {
  return StateSchedule{{{0.0, state}}, duration_s};
}

namespace detail {

struct Bump {
  double amplitude;
  double offset_s;  // relative to the beat time
  double width_s;   // Gaussian standard deviation
};

inline std::array<Bump, 3> bumps_of(const SubjectSpec& spec) {
  const auto& m = spec.morphology;
  return {{
      {0.2 + 0.3 * m[5], -0.08 * (1.0 + 0.5 * m[7]), 0.015 * (1.0 + m[6])},  // early
      {m[0], 0.0, 0.01 * (1.0 + m[1])},                                   // main
      {0.35 * m[2], 0.15 * (1.0 + 0.5 * m[4]), 0.03 * (1.0 + m[3])},     // late
  }};
}

inline void add_bump(std::vector<double>& x, double center_s, const Bump& b) {
  const double lo = (center_s - 5.0 * b.width_s) * kFs;
  const double hi = (center_s + 5.0 * b.width_s) * kFs;
  const auto n = static_cast<long>(x.size());
  for (long k = std::max(0L, static_cast<long>(std::ceil(lo)));
       k <= std::min(n - 1, static_cast<long>(std::floor(hi))); ++k) {
    const double d = static_cast<double>(k) / kFs - center_s;
    x[static_cast<std::size_t>(k)] += b.amplitude * std::exp(-0.5 * d * d / (b.width_s * b.width_s));
  }
}

}  // namespace detail

/// Irregular-state rate multiplier and interval shape (CV = 1/sqrt(shape) = 0.25).
inline constexpr double kIrregularRateFactor = 1.2;
inline constexpr double kIrregularGammaShape = 16.0;
inline constexpr double kRegularJitter = 0.02;
inline constexpr double kNoiseFraction = 0.05;

inline SynthRecord synthesize_record(const SubjectSpec& spec, const StateSchedule& schedule,
                                     std::uint64_t record_seed, int record_id = 0) {
  schedule.validate();
  if (schedule.total_duration_s < 30.0) throw InvalidArgument("schedule shorter than 30 s");

  std::mt19937_64 rng(mix_seed(mix_seed(record_seed, 0x7eULL), static_cast<std::uint64_t>(spec.subject_id)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double T = schedule.total_duration_s;
  const auto n = static_cast<std::size_t>(std::llround(T * kFs));
  SynthRecord rec;
  rec.subject_id = spec.subject_id;
  rec.record_id = record_id;
  rec.schedule = schedule;
  rec.static_class = spec.static_class;
  rec.samples.assign(n, 0.0);

  const double regular_rr = 60.0 / spec.base_rate;
  const double irregular_rr = regular_rr / kIrregularRateFactor;
  std::gamma_distribution<double> gamma(kIrregularGammaShape, irregular_rr / kIrregularGammaShape);

  const auto bumps = detail::bumps_of(spec);
  double t = unit(rng) * regular_rr;
  while (t < T) {
    const int state = schedule.state_at(t);
    rec.beat_times_s.push_back(t);
    if (state == 0) detail::add_bump(rec.samples, t + bumps[0].offset_s, bumps[0]);
    detail::add_bump(rec.samples, t + bumps[1].offset_s, bumps[1]);
    detail::add_bump(rec.samples, t + bumps[2].offset_s, bumps[2]);
    double rr = state == 0 ? regular_rr * (1.0 + kRegularJitter * gauss(rng)) : gamma(rng);
    t += std::clamp(rr, 0.25, 2.5);
  }

  double mean = 0.0;
  for (double v : rec.samples) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : rec.samples) var += (v - mean) * (v - mean);
  const double scale = std::sqrt(var / static_cast<double>(n));
  for (double& v : rec.samples) v += kNoiseFraction * scale * gauss(rng);

  rec.window_labels = schedule.window_labels();
  return rec;
}

/// Regular / irregular / regular schedule with boundaries at 0.1 s resolution.
inline StateSchedule mixed_schedule(double duration_s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> first(0.15, 0.35);
  std::uniform_real_distribution<double> second(0.60, 0.85);
  const double s1 = std::round(first(rng) * duration_s * 10.0) / 10.0;
  const double s2 = std::round(second(rng) * duration_s * 10.0) / 10.0;
  return StateSchedule{{{0.0, 0}, {s1, 1}, {s2, 0}}, duration_s};
}

struct SynthDataset {
  std::vector<SubjectSpec> subjects;
  std::vector<SynthRecord> records;
};

/// In-memory corpus: record 0 of every subject mixes both states, record 1 is
/// regular-only, further records alternate between the two kinds.
inline SynthDataset generate_corpus(int n_subjects, int records_per_subject, double duration_s,
                                    std::uint64_t seed) {
  if (n_subjects < 2) throw InvalidArgument("need at least 2 subjects");
  if (records_per_subject < 2) throw InvalidArgument("need at least 2 records per subject");
  if (duration_s < 30.0) throw InvalidArgument("record duration shorter than 30 s");
  SynthDataset ds;
  for (int s = 0; s < n_subjects; ++s) {
    SubjectSpec spec = make_subject(mix_seed(seed, static_cast<std::uint64_t>(s)));
    spec.subject_id = s;
    std::mt19937_64 sched_rng(mix_seed(seed ^ 0xabcdefULL, static_cast<std::uint64_t>(s)));
    for (int r = 0; r < records_per_subject; ++r) {
      const StateSchedule sched =
          r % 2 == 0 ? mixed_schedule(duration_s, sched_rng) : constant_schedule(duration_s, 0);
      const auto rseed = mix_seed(seed, static_cast<std::uint64_t>(s * 1000 + r + 1));
      ds.records.push_back(synthesize_record(spec, sched, rseed, r));
    }
    ds.subjects.push_back(spec);
  }
  return ds;
}

inline std::string record_stem(int subject_id, int record_id) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "records/s%03d_r%d", subject_id, record_id);
  return buf;
}

/// Writes every record (raw floats + sidecar) and `manifest.csv` under `out_dir`.
inline io::Manifest generate_dataset(int n_subjects, int records_per_subject, double duration_s,
                                     std::uint64_t seed, const std::filesystem::path& out_dir) {
  const SynthDataset ds = generate_corpus(n_subjects, records_per_subject, duration_s, seed);
  io::Manifest m;
  m.root = out_dir;
  for (const auto& rec : ds.records) {
    const std::string stem = record_stem(rec.subject_id, rec.record_id);
    io::json schedule = io::json::array();
    for (const auto& seg : rec.schedule.segments)
      schedule.push_back({{"start_s", seg.start_s}, {"state", seg.state}});
    io::save_record(out_dir / stem, rec.to_signal(), {{"schedule", schedule}});
    m.entries.push_back({rec.subject_id, rec.record_id, stem, rec.schedule.total_duration_s});
  }
  io::write_manifest(m);
  return m;
}

}  // namespace deaps::synth
