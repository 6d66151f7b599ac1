#pragma once

// Probe protocols on frozen representations. Every split is by subject and
// checked for overlap before anything is fitted or scored.

#include "deaps/core.hpp"
#include "deaps/eval/metrics.hpp"
#include "deaps/eval/svc.hpp"
#include "deaps/eval/table.hpp"

#include <algorithm>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace deaps::eval {

struct Probe {
  std::string label;
  std::set<int> train_subjects;
  Standardizer standardizer;
  Svc svc;
};

namespace detail {

/// Rows of the given subjects that carry a value for `label`.
inline std::vector<std::size_t> labeled_rows(const RepresentationTable& t, const std::string& label,
                                             const std::set<int>& subjects) {
  const auto& y = t.label(label);
  std::vector<std::size_t> out;
  for (std::size_t r : t.rows_of(subjects))
    if (y[r] != kMissing) out.push_back(r);
  return out;
}

inline Mat<double> gather(const Mat<double>& h, const std::vector<std::size_t>& rows) {
  Mat<double> out(static_cast<Eigen::Index>(rows.size()), h.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = h.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

}  // namespace detail

inline void check_disjoint(const std::set<int>& train, const std::set<int>& test) {
  for (int s : test)
    if (train.count(s)) throw InvalidArgument("subject " + std::to_string(s) + " appears in both train and test split");
}

/// Standardizes on the train rows, then fits the RBF support-vector classifier.
inline Probe fit_probe(const RepresentationTable& t, const std::string& label, const std::set<int>& train_subjects,
                       const SvcOptions& opt = {}) {
  require(!train_subjects.empty(), "train split is empty");
  const auto rows = detail::labeled_rows(t, label, train_subjects);
  if (rows.empty()) throw InvalidArgument("train split has no rows labeled '" + label + "'");
  Probe p;
  p.label = label;
  p.train_subjects = train_subjects;
  const Mat<double> X = detail::gather(t.h, rows);
  p.standardizer = Standardizer::fit(X);
  std::vector<int> y;
  for (std::size_t r : rows) y.push_back(t.label(label)[r]);
  p.svc = Svc(opt);
  p.svc.fit(p.standardizer.apply(X), y);
  return p;
}

inline ProbeResult score_probe(const Probe& p, const RepresentationTable& t, const std::set<int>& test_subjects) {
  check_disjoint(p.train_subjects, test_subjects);
  const auto rows = detail::labeled_rows(t, p.label, test_subjects);
  if (rows.empty()) throw InvalidArgument("test split has no rows labeled '" + p.label + "'");
  const auto pred = p.svc.predict(p.standardizer.apply(detail::gather(t.h, rows)));
  std::vector<int> truth;
  for (std::size_t r : rows) truth.push_back(t.label(p.label)[r]);
  ProbeResult res = score_predictions(truth, pred, p.svc.classes());
  FoldResult f;
  f.train_subjects = p.train_subjects;
  f.test_subjects = test_subjects;
  f.n_test = rows.size();
  f.accuracy = res.accuracy;
  res.folds = {f};
  res.fold_mean = res.accuracy;
  res.fold_std = 0.0;
  return res;
}

/// Runs one probe per fold and pools the confusion matrices; fold_mean/std
/// summarize the per-fold accuracies.
inline ProbeResult run_folds(const RepresentationTable& t, const std::string& label,
                             const std::vector<std::set<int>>& test_folds, const SvcOptions& opt = {}) {
  require(!test_folds.empty(), "no folds");
  const std::set<int> all = t.subjects();
  std::vector<ProbeResult> parts;
  std::vector<int> classes;
  for (const auto& test : test_folds) {
    std::set<int> train;
    std::set_difference(all.begin(), all.end(), test.begin(), test.end(), std::inserter(train, train.end()));
    const Probe p = fit_probe(t, label, train, opt);
    parts.push_back(score_probe(p, t, test));
    classes.insert(classes.end(), parts.back().classes.begin(), parts.back().classes.end());
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  ProbeResult out;
  out.classes = classes;
  const auto K = static_cast<Eigen::Index>(classes.size());
  out.confusion = Eigen::MatrixXi::Zero(K, K);
  auto pos = [&](int c) { return std::lower_bound(classes.begin(), classes.end(), c) - classes.begin(); };
  std::vector<double> accs;
  for (const auto& r : parts) {
    for (Eigen::Index a = 0; a < r.confusion.rows(); ++a)
      for (Eigen::Index b = 0; b < r.confusion.cols(); ++b)
        out.confusion(pos(r.classes[static_cast<std::size_t>(a)]), pos(r.classes[static_cast<std::size_t>(b)])) +=
            r.confusion(a, b);
    out.folds.push_back(r.folds.front());
    accs.push_back(r.accuracy);
  }
  finalize_metrics(out);
  std::tie(out.fold_mean, out.fold_std) = mean_std(accs);
  return out;
}

/// Leave-one-subject-out folds over subjects that carry the label.
inline std::vector<std::set<int>> loo_folds(const RepresentationTable& t, const std::string& label) {
  std::set<int> subjects;
  const auto& y = t.label(label);
  for (std::size_t r = 0; r < t.size(); ++r)
    if (y[r] != kMissing) subjects.insert(t.subject_ids[r]);
  if (subjects.size() < 2) throw InvalidArgument("leave-one-out needs at least 2 labeled subjects");
  std::vector<std::set<int>> folds;
  for (int s : subjects) folds.push_back({s});
  return folds;
}

inline ProbeResult loo_cv(const RepresentationTable& t, const std::string& label, const SvcOptions& opt = {}) {
  return run_folds(t, label, loo_folds(t, label), opt);
}

/// Subject-level folds stratified by each subject's majority label: subjects
/// are shuffled within their stratum and dealt round-robin.
inline std::vector<std::set<int>> kfold_folds(const RepresentationTable& t, const std::string& label, int k,
                                              std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k-fold needs k >= 2");
  const auto& y = t.label(label);
  std::map<int, std::map<int, int>> counts;
  for (std::size_t r = 0; r < t.size(); ++r)
    if (y[r] != kMissing) ++counts[t.subject_ids[r]][y[r]];
  if (counts.size() < static_cast<std::size_t>(k))
    throw InvalidArgument("k-fold needs at least k=" + std::to_string(k) + " labeled subjects, found " +
                          std::to_string(counts.size()));
  std::map<int, std::vector<int>> strata;
  for (const auto& [subject, c] : counts) {
    const auto best = std::max_element(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    strata[best->first].push_back(subject);
  }
  std::mt19937_64 rng(mix_seed(seed, 0x6b666f6c64ULL));
  std::vector<std::set<int>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (auto& [cls, subjects] : strata) {
    std::shuffle(subjects.begin(), subjects.end(), rng);
    for (int s : subjects) folds[next++ % folds.size()].insert(s);
  }
  return folds;
}

inline ProbeResult kfold_cv(const RepresentationTable& t, const std::string& label, int k = 5, std::uint64_t seed = 0,
                            const SvcOptions& opt = {}) {
  return run_folds(t, label, kfold_folds(t, label, k, seed), opt);
}

}  // namespace deaps::eval
