#pragma once

#include "deaps/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace deaps::eval {

/// Positive class for sensitivity: the abnormal state / second class.
inline constexpr int kPositiveClass = 1;

struct FoldResult {
  std::set<int> train_subjects;
  std::set<int> test_subjects;
  std::size_t n_test = 0;
  double accuracy = 0.0;
};

struct ProbeResult {
  std::vector<int> classes;
  /// confusion(t, p): rows with true class classes[t] predicted as classes[p].
  Eigen::MatrixXi confusion;
  double accuracy = 0.0;
  /// Only defined for binary {0, 1} problems with both true classes present.
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::map<int, double> per_class_accuracy;
  std::vector<FoldResult> folds;
  double fold_mean = 0.0;
  double fold_std = 0.0;

  std::size_t total() const { return static_cast<std::size_t>(confusion.sum()); }
};

/// Mean and population standard deviation (divides by n).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  require(!v.empty(), "mean_std of an empty list");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

/// Fills confusion-derived fields from the confusion matrix and class list.
inline void finalize_metrics(ProbeResult& r) {
  const auto K = static_cast<Eigen::Index>(r.classes.size());
  require(r.confusion.rows() == K && r.confusion.cols() == K, "confusion matrix does not match class list");
  const auto total = r.confusion.sum();
  require(total > 0, "no scored rows");
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(total);
  r.per_class_accuracy.clear();
  for (Eigen::Index t = 0; t < K; ++t) {
    const auto n = r.confusion.row(t).sum();
    if (n > 0) r.per_class_accuracy[r.classes[static_cast<std::size_t>(t)]] = static_cast<double>(r.confusion(t, t)) / n;
  }
  r.sensitivity.reset();
  r.specificity.reset();
  const bool binary01 =
      std::all_of(r.classes.begin(), r.classes.end(), [](int c) { return c == 0 || c == kPositiveClass; });
  if (binary01 && K == 2) {
    const double tn = r.confusion(0, 0), fp = r.confusion(0, 1), fn = r.confusion(1, 0), tp = r.confusion(1, 1);
    if (tp + fn > 0) r.sensitivity = tp / (tp + fn);
    if (tn + fp > 0) r.specificity = tn / (tn + fp);
  }
}

/// Metrics from paired true/predicted labels; the class list is the union of both.
inline ProbeResult score_predictions(const std::vector<int>& truth, const std::vector<int>& pred,
                                     std::vector<int> classes = {}) {
  require(truth.size() == pred.size(), "truth and prediction lengths differ");
  require(!truth.empty(), "nothing to score");
  for (int v : truth) classes.push_back(v);
  for (int v : pred) classes.push_back(v);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() == 1 && (classes[0] == 0 || classes[0] == kPositiveClass)) classes = {0, kPositiveClass};
  ProbeResult r;
  r.classes = classes;
  const auto K = static_cast<Eigen::Index>(classes.size());
  r.confusion = Eigen::MatrixXi::Zero(K, K);
  auto pos = [&](int c) { return std::lower_bound(classes.begin(), classes.end(), c) - classes.begin(); };
  for (std::size_t k = 0; k < truth.size(); ++k) ++r.confusion(pos(truth[k]), pos(pred[k]));
  finalize_metrics(r);
  return r;
}

/// Binary result built directly from confusion counts.
inline ProbeResult from_confusion(long tp, long fn, long tn, long fp) {
  ProbeResult r;
  r.classes = {0, kPositiveClass};
  r.confusion.resize(2, 2);
  r.confusion << static_cast<int>(tn), static_cast<int>(fp), static_cast<int>(fn), static_cast<int>(tp);
  finalize_metrics(r);
  return r;
}

}  // namespace deaps::eval
