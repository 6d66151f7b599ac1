#pragma once

// Four-window training items: one window from record A, and a time-ordered
// triplet (t - i, t, t + j) from record B of the same subject.

#include "deaps/core.hpp"
#include "deaps/pipeline.hpp"
#include "deaps/record.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <tuple>
#include <vector>

namespace deaps::sampling {

inline constexpr int kWindowS = 10;
inline constexpr int kSamplesPerSecond = 100;
inline constexpr Eigen::Index kWindowLen = 1000;

struct CorpusRecord {
  int record_id = 0;
  std::vector<float> samples;  // preprocessed, 100 Hz
  std::vector<int> window_keep;
  std::vector<int> window_labels;

  int length_s() const { return static_cast<int>(samples.size()) / kSamplesPerSecond; }
  int n_tiles() const { return static_cast<int>(samples.size() / kWindowLen); }
  bool kept(int tile) const {
    return window_keep.empty() || window_keep[static_cast<std::size_t>(tile)] != 0;
  }
};

struct CorpusSubject {
  int subject_id = 0;
  std::optional<int> static_class;
  std::vector<CorpusRecord> records;
};

struct Corpus {
  std::vector<CorpusSubject> subjects;

  static Corpus from_records(const std::vector<SignalRecord>& records) {
    Corpus c;
    for (const auto& r : records) {
      require(r.preprocessed && r.fs == pipeline::kTargetFs, "corpus records must be preprocessed");
      auto it = std::find_if(c.subjects.begin(), c.subjects.end(),
                             [&](const CorpusSubject& s) { return s.subject_id == r.subject_id; });
      if (it == c.subjects.end()) {
        c.subjects.push_back({r.subject_id, r.static_class, {}});
        it = std::prev(c.subjects.end());
      }
      CorpusRecord cr;
      cr.record_id = r.record_id;
      cr.samples.assign(r.samples.begin(), r.samples.end());
      cr.window_keep = r.window_keep;
      cr.window_labels = r.window_labels;
      it->records.push_back(std::move(cr));
    }
    std::sort(c.subjects.begin(), c.subjects.end(),
              [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
    return c;
  }

  std::size_t n_records() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.records.size();
    return n;
  }
};

struct SamplerConfig {
  int batch_size = 256;
  int window_size_s = 120;
  int min_offset_s = 10;
  std::uint64_t seed = 0;

  /// Offsets i, j are drawn from [min_offset_s, max_offset_s()], so that
  /// i + j + 10 never exceeds the window size.
  int max_offset_s() const { return (window_size_s - kWindowS) / 2; }

  void validate() const {
    require(batch_size >= 1, "batch_size must be positive");
    require(min_offset_s >= kWindowS, "min_offset_s must be >= 10 so triplet windows do not overlap");
    require(max_offset_s() >= min_offset_s, "window_size_s too small for min_offset_s");
  }
};

struct QuadItem {
  RowVec<float> x1, x_tmi, x_t, x_tpj;
  int i_s = 0;
  int j_s = 0;
  int subject_id = 0;
  int record_a = 0;
  int record_b = 0;
  int x1_start_s = 0;
  int t_s = 0;  // start of the middle window in record B
};

struct QuadBatch {
  Mat<float> x1, x_tmi, x_t, x_tpj;  // B x 1000 each
  std::vector<double> i_s, j_s;
  std::vector<int> subject_ids;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return x1.rows(); }
};

namespace detail {

inline RowVec<float> slice(const CorpusRecord& r, int start_s) {
  const auto off = static_cast<Eigen::Index>(start_s) * kSamplesPerSecond;
  RowVec<float> w(kWindowLen);
  for (Eigen::Index k = 0; k < kWindowLen; ++k) w(k) = r.samples[static_cast<std::size_t>(off + k)];
  return w;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace detail

/// Whether a subject can supply items under `cfg`: two records, and at least
/// one of them long enough for the widest triplet.
inline bool eligible(const CorpusSubject& s, const SamplerConfig& cfg) {
  if (s.records.size() < 2) return false;
  const int span = 2 * cfg.max_offset_s() + kWindowS;
  return std::any_of(s.records.begin(), s.records.end(), [&](const auto& r) { return r.length_s() >= span; });
}

inline QuadItem sample_quad(const CorpusSubject& subject, std::mt19937_64& rng, const SamplerConfig& cfg) {
  if (subject.records.size() < 2)
    throw InvalidArgument("subject " + std::to_string(subject.subject_id) + " has a single record");
  const int n = static_cast<int>(subject.records.size());
  const int i = detail::uniform_int(rng, cfg.min_offset_s, cfg.max_offset_s());
  const int j = detail::uniform_int(rng, cfg.min_offset_s, cfg.max_offset_s());

  std::vector<int> candidates;
  for (int b = 0; b < n; ++b)
    if (subject.records[static_cast<std::size_t>(b)].length_s() >= i + j + kWindowS) candidates.push_back(b);
  if (candidates.empty()) throw InvalidArgument("no record long enough for the triplet span");
  const int b = candidates[static_cast<std::size_t>(detail::uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))];
  int a = detail::uniform_int(rng, 0, n - 2);
  if (a >= b) ++a;

  const auto& ra = subject.records[static_cast<std::size_t>(a)];
  const auto& rb = subject.records[static_cast<std::size_t>(b)];
  std::vector<int> tiles;
  for (int k = 0; k < ra.n_tiles(); ++k)
    if (ra.kept(k)) tiles.push_back(k);
  if (tiles.empty())
    for (int k = 0; k < ra.n_tiles(); ++k) tiles.push_back(k);
  if (tiles.empty()) throw InvalidArgument("record A has no full window");
  const int tile = tiles[static_cast<std::size_t>(detail::uniform_int(rng, 0, static_cast<int>(tiles.size()) - 1))];
  const int t = detail::uniform_int(rng, i, rb.length_s() - kWindowS - j);

  QuadItem q;
  q.i_s = i;
  q.j_s = j;
  q.subject_id = subject.subject_id;
  q.record_a = ra.record_id;
  q.record_b = rb.record_id;
  q.x1_start_s = tile * kWindowS;
  q.t_s = t;
  q.x1 = detail::slice(ra, q.x1_start_s);
  q.x_tmi = detail::slice(rb, t - i);
  q.x_t = detail::slice(rb, t);
  q.x_tpj = detail::slice(rb, t + j);
  return q;
}

/// Stacks B items; subjects are drawn uniformly with replacement and repeated
/// (subject, record, t) triplets are redrawn a few times before being accepted.
inline QuadBatch build_batch(const Corpus& corpus, int batch_size, std::mt19937_64& rng,
                             const SamplerConfig& cfg) {
  std::vector<const CorpusSubject*> pool;
  for (const auto& s : corpus.subjects)
    if (eligible(s, cfg)) pool.push_back(&s);
  if (pool.empty()) throw InvalidArgument("corpus has no eligible subject");
  require(batch_size >= 1, "batch size must be positive");

  QuadBatch b;
  const auto B = static_cast<Eigen::Index>(batch_size);
  b.x1.resize(B, kWindowLen);
  b.x_tmi.resize(B, kWindowLen);
  b.x_t.resize(B, kWindowLen);
  b.x_tpj.resize(B, kWindowLen);
  std::set<std::tuple<int, int, int>> seen;
  for (Eigen::Index k = 0; k < B; ++k) {
    QuadItem q;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const auto* s = pool[static_cast<std::size_t>(detail::uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
      q = sample_quad(*s, rng, cfg);
      if (seen.emplace(q.subject_id, q.record_b, q.t_s).second) break;
    }
    b.x1.row(k) = q.x1;
    b.x_tmi.row(k) = q.x_tmi;
    b.x_t.row(k) = q.x_t;
    b.x_tpj.row(k) = q.x_tpj;
    b.i_s.push_back(q.i_s);
    b.j_s.push_back(q.j_s);
    b.subject_ids.push_back(q.subject_id);
  }
  return b;
}

/// Batch order is a pure function of (seed, iteration), which makes resumed
/// runs draw exactly the batches a straight run would have drawn.
inline std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t iteration) {
  return mix_seed(seed, iteration);
}

inline QuadBatch batch_for_iteration(const Corpus& corpus, const SamplerConfig& cfg, std::uint64_t iteration) {
  std::mt19937_64 rng(batch_seed(cfg.seed, iteration));
  QuadBatch b = build_batch(corpus, cfg.batch_size, rng, cfg);
  b.seed = batch_seed(cfg.seed, iteration);
  return b;
}

}  // namespace deaps::sampling
