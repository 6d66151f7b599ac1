#include "deaps/synthgen.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace deaps;
using namespace deaps::synth;

namespace {

double coefficient_of_variation(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / m;
}

/// Inter-beat intervals of beats whose interval lies entirely in [a, b).
std::vector<double> intervals_within(const SynthRecord& r, double a, double b) {
  std::vector<double> out;
  for (std::size_t k = 1; k < r.beat_times_s.size(); ++k)
    if (r.beat_times_s[k - 1] >= a && r.beat_times_s[k] < b) out.push_back(r.beat_times_s[k] - r.beat_times_s[k - 1]);
  return out;
}

/// Local maxima above half the record maximum, at least 0.25 s apart.
std::vector<double> detect_peaks(const std::vector<double>& x) {
  const double hi = *std::max_element(x.begin(), x.end());
  std::vector<double> t;
  for (std::size_t k = 1; k + 1 < x.size(); ++k) {
    if (x[k] < 0.5 * hi || x[k] < x[k - 1] || x[k] <= x[k + 1]) continue;
    const double ts = static_cast<double>(k) / kFs;
    if (!t.empty() && ts - t.back() < 0.25) {
      if (x[k] > x[static_cast<std::size_t>(std::llround(t.back() * kFs))]) t.back() = ts;
      continue;
    }
    t.push_back(ts);
  }
  return t;
}

/// Mean of pulses aligned on ground-truth beat times, from -0.3 s to +0.5 s.
std::vector<double> mean_template(const SynthRecord& r) {
  const int before = 30, after = 50;
  std::vector<double> acc(before + after, 0.0);
  int n = 0;
  for (double t : r.beat_times_s) {
    const long c = std::lround(t * kFs);
    if (c - before < 0 || c + after >= static_cast<long>(r.samples.size())) continue;
    for (int k = -before; k < after; ++k) acc[static_cast<std::size_t>(k + before)] += r.samples[static_cast<std::size_t>(c + k)];
    ++n;
  }
  for (double& v : acc) v /= n;
  return acc;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(MakeSubject, DeterministicInSeed) {
  const auto a = make_subject(0), b = make_subject(0);
  EXPECT_EQ(a.morphology, b.morphology);
  EXPECT_EQ(a.base_rate, b.base_rate);
  EXPECT_EQ(a.static_class, b.static_class);
}

TEST(MakeSubject, DistinctSeedsGiveDistinctMorphology) {
  EXPECT_NE(make_subject(0).morphology, make_subject(1).morphology);
}

TEST(MakeSubject, FieldRanges) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto spec = make_subject(s);
    EXPECT_GE(spec.base_rate, 50.0);
    EXPECT_LE(spec.base_rate, 100.0);
    for (double m : spec.morphology) {
      EXPECT_GE(m, 0.2);
      EXPECT_LE(m, 2.0);
    }
    EXPECT_EQ(spec.static_class, static_class_of(spec.morphology));
  }
}

TEST(MakeSubject, StaticClassBalancedOverThousandSeeds) {
  int ones = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) ones += make_subject(s).static_class;
  EXPECT_GE(ones, 400);
  EXPECT_LE(ones, 600);
}

TEST(SynthesizeRecord, RegularRecordHasAllZeroLabels) {
  const auto r = synthesize_record(make_subject(3), constant_schedule(60.0, 0), 11);
  EXPECT_EQ(r.samples.size(), 6000u);
  EXPECT_EQ(r.window_labels, std::vector<int>(6, 0));
}

TEST(SynthesizeRecord, SameSpecDifferentSeedsShareTemplate) {
  for (std::uint64_t s : {0ULL, 5ULL, 9ULL}) {
    const auto spec = make_subject(s);
    const auto a = synthesize_record(spec, constant_schedule(60.0, 0), 1);
    const auto b = synthesize_record(spec, constant_schedule(60.0, 0), 2);
    EXPECT_NE(a.samples, b.samples);
    EXPECT_GT(correlation(mean_template(a), mean_template(b)), 0.9) << "subject seed " << s;
  }
}

TEST(SynthesizeRecord, IrregularStateIntervalVariability) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto spec = make_subject(s);
    const auto irregular = synthesize_record(spec, constant_schedule(120.0, 1), 100 + s);
    EXPECT_GE(coefficient_of_variation(intervals_within(irregular, 0.0, 120.0)), 0.15);
    const auto regular = synthesize_record(spec, constant_schedule(120.0, 0), 200 + s);
    EXPECT_LE(coefficient_of_variation(intervals_within(regular, 0.0, 120.0)), 0.05);
  }
}

TEST(SynthesizeRecord, DetectedPeaksMatchGroundTruthBeats) {
  const auto spec = make_subject(4);
  const auto r = synthesize_record(spec, constant_schedule(60.0, 1), 3);
  const auto peaks = detect_peaks(r.samples);
  std::size_t matched = 0;
  for (double t : r.beat_times_s) {
    auto it = std::lower_bound(peaks.begin(), peaks.end(), t - 0.05);
    if (it != peaks.end() && std::abs(*it - t) <= 0.05) ++matched;
  }
  EXPECT_GE(static_cast<double>(matched), 0.9 * static_cast<double>(r.beat_times_s.size()));
  std::vector<double> ibi;
  for (std::size_t k = 1; k < peaks.size(); ++k) ibi.push_back(peaks[k] - peaks[k - 1]);
  EXPECT_GE(coefficient_of_variation(ibi), 0.15);
}

TEST(SynthesizeRecord, IrregularStateSuppressesEarlyWave) {
  // Aligned pulse means differ just before the main bump: the early wave only
  // exists in the regular state.
  const auto spec = make_subject(8);
  const auto reg = mean_template(synthesize_record(spec, constant_schedule(120.0, 0), 1));
  const auto irr = mean_template(synthesize_record(spec, constant_schedule(120.0, 1), 1));
  const auto bumps = detail::bumps_of(spec);
  const auto at = static_cast<std::size_t>(30 + std::lround(bumps[0].offset_s * kFs));
  EXPECT_GT(reg[at] - irr[at], 0.5 * bumps[0].amplitude);
}

TEST(SynthesizeRecord, NoiseLevelIsFivePercentOfScale) {
  const auto spec = make_subject(2);
  const auto a = synthesize_record(spec, constant_schedule(60.0, 0), 1);
  // Residual against a noiseless rebuild from the recorded beat times.
  std::vector<double> clean(a.samples.size(), 0.0);
  const auto bumps = detail::bumps_of(spec);
  for (double t : a.beat_times_s)
    for (const auto& b : bumps) detail::add_bump(clean, t + b.offset_s, b);
  double mean = 0.0;
  for (double v : clean) mean += v;
  mean /= static_cast<double>(clean.size());
  double var = 0.0, nvar = 0.0;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    var += (clean[k] - mean) * (clean[k] - mean);
    nvar += (a.samples[k] - clean[k]) * (a.samples[k] - clean[k]);
  }
  EXPECT_NEAR(std::sqrt(nvar / var), kNoiseFraction, 0.005);
}

TEST(SynthesizeRecord, ShortScheduleRejected) {
  EXPECT_THROW(synthesize_record(make_subject(0), constant_schedule(20.0, 0), 1), InvalidArgument);
}

TEST(SynthesizeRecord, InvalidScheduleRejected) {
  StateSchedule s{{{0.0, 0}, {0.0, 1}}, 60.0};
  EXPECT_THROW(synthesize_record(make_subject(0), s, 1), InvalidArgument);
  StateSchedule late{{{5.0, 0}}, 60.0};
  EXPECT_THROW(synthesize_record(make_subject(0), late, 1), InvalidArgument);
}

TEST(GenerateDataset, FourSubjectsTwoRecords) {
  const auto dir = deaps::testing::scratch_dir("synth4");
  const auto m = generate_dataset(4, 2, 300.0, 7, dir);
  EXPECT_EQ(m.entries.size(), 8u);
  std::size_t windows = 0;
  for (const auto& r : io::load_records(io::read_manifest(dir))) {
    EXPECT_EQ(r.samples.size(), 30000u);
    windows += r.window_labels.size();
  }
  EXPECT_EQ(windows, 240u);
}

TEST(GenerateDataset, ByteIdenticalOnRerun) {
  const auto a = deaps::testing::scratch_dir("synth_a"), b = deaps::testing::scratch_dir("synth_b");
  generate_dataset(3, 2, 60.0, 5, a);
  generate_dataset(3, 2, 60.0, 5, b);
  EXPECT_EQ(io::read_text(a / "manifest.csv"), io::read_text(b / "manifest.csv"));
  const auto m = io::read_manifest(a);
  for (const auto& e : m.entries) {
    EXPECT_EQ(io::read_f32(a / (e.path + ".f32")), io::read_f32(b / (e.path + ".f32")));
    EXPECT_EQ(io::read_text(a / (e.path + ".json")), io::read_text(b / (e.path + ".json")));
  }
}

TEST(GenerateDataset, TooFewSubjectsOrRecordsRejected) {
  EXPECT_THROW(generate_corpus(1, 2, 60.0, 0), InvalidArgument);
  EXPECT_THROW(generate_corpus(2, 1, 60.0, 0), InvalidArgument);
}

TEST(GenerateDataset, EverySubjectHasMixedAndRegularRecords) {
  const auto ds = generate_corpus(6, 2, 300.0, 1);
  for (int s = 0; s < 6; ++s) {
    bool mixed = false, regular = false;
    for (const auto& r : ds.records) {
      if (r.subject_id != s) continue;
      const bool has0 = std::count(r.window_labels.begin(), r.window_labels.end(), 0) > 0;
      const bool has1 = std::count(r.window_labels.begin(), r.window_labels.end(), 1) > 0;
      mixed = mixed || (has0 && has1);
      regular = regular || (has0 && !has1);
    }
    EXPECT_TRUE(mixed && regular) << "subject " << s;
  }
}

TEST(GenerateDataset, LabelHistogramMatchesScheduleDurations) {
  const auto ds = generate_corpus(8, 2, 300.0, 3);
  for (const auto& r : ds.records) {
    const auto ones = std::count(r.window_labels.begin(), r.window_labels.end(), 1);
    const double expected = r.schedule.time_in_state(0.0, 300.0, 1) / kWindowS;
    const auto transitions = static_cast<double>(r.schedule.segments.size() - 1);
    EXPECT_LE(std::abs(static_cast<double>(ones) - expected), transitions + 1e-9);
  }
}

TEST(GenerateDataset, LabelsRecomputableFromSchedule) {
  const auto ds = generate_corpus(4, 3, 120.0, 9);
  for (const auto& r : ds.records) {
    for (std::size_t w = 0; w < r.window_labels.size(); ++w) {
      const double a = static_cast<double>(w) * kWindowS;
      const double in1 = r.schedule.time_in_state(a, a + kWindowS, 1);
      EXPECT_EQ(r.window_labels[w], in1 >= 5.0 ? 1 : 0);
    }
  }
}

TEST(GenerateDataset, MorphologyIndependentOfState) {
  // Per-subject share of state-1 windows is uncorrelated with every
  // morphology entry (|r| < 0.5 is about 3 sigma for 40 subjects).
  const auto ds = generate_corpus(40, 2, 300.0, 21);
  std::vector<double> share(40, 0.0), count(40, 0.0);
  for (const auto& r : ds.records)
    for (int lab : r.window_labels) {
      share[static_cast<std::size_t>(r.subject_id)] += lab;
      count[static_cast<std::size_t>(r.subject_id)] += 1.0;
    }
  for (std::size_t s = 0; s < 40; ++s) share[s] /= count[s];
  for (std::size_t k = 0; k < 8; ++k) {
    std::vector<double> m;
    for (const auto& spec : ds.subjects) m.push_back(spec.morphology[k]);
    EXPECT_LT(std::abs(correlation(share, m)), 0.5) << "morphology entry " << k;
  }
}
