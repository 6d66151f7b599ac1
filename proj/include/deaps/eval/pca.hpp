#pragma once

// Per-component separability of representations: PCA on all rows, then a
// subject-grouping F statistic and per-class Cohen's d for the leading
// components.

#include "deaps/core.hpp"
#include "deaps/eval/svg.hpp"
#include "deaps/eval/table.hpp"
#include "deaps/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

namespace deaps::eval {

struct PcaOptions {
  int n_report = 6;
  double d_threshold = 0.8;
};

struct PcaComponent {
  int index = 0;
  double explained_variance = 0.0;
  double explained_ratio = 0.0;
  double subject_f = 0.0;
  double state_d = 0.0;
  std::optional<double> static_d;
  bool state_discriminative = false;
  bool static_discriminative = false;
};

struct PcaReport {
  std::string static_label, state_label;
  double threshold = 0.8;
  std::vector<PcaComponent> components;
  RowVec<double> mean;
  Mat<double> loadings;  // dim x n_components, columns are unit vectors
  Mat<double> scores;    // rows x n_components

  std::size_t n_state_flagged() const {
    return static_cast<std::size_t>(
        std::count_if(components.begin(), components.end(), [](const auto& c) { return c.state_discriminative; }));
  }
  std::size_t n_static_flagged() const {
    return static_cast<std::size_t>(
        std::count_if(components.begin(), components.end(), [](const auto& c) { return c.static_discriminative; }));
  }
};

/// |mean_a - mean_b| / pooled standard deviation.
inline double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() >= 1 && b.size() >= 1 && a.size() + b.size() >= 3, "cohens_d needs at least 3 values over 2 groups");
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss};
  };
  const auto [ma, ssa] = stats(a);
  const auto [mb, ssb] = stats(b);
  const double pooled = std::sqrt((ssa + ssb) / static_cast<double>(a.size() + b.size() - 2));
  const double diff = std::abs(ma - mb);
  if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / pooled;
}

/// Largest pairwise Cohen's d across the classes of `labels` (missing rows
/// skipped); absent when fewer than two classes are present.
inline std::optional<double> max_pairwise_d(const Eigen::VectorXd& x, const std::vector<int>& labels) {
  std::map<int, std::vector<double>> groups;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] != kMissing) groups[labels[r]].push_back(x(static_cast<Eigen::Index>(r)));
  if (groups.size() < 2) return std::nullopt;
  double best = 0.0;
  for (auto a = groups.begin(); a != groups.end(); ++a)
    for (auto b = std::next(a); b != groups.end(); ++b) {
      if (a->second.size() + b->second.size() < 3) continue;
      best = std::max(best, cohens_d(a->second, b->second));
    }
  return best;
}

/// One-way ANOVA F statistic of x grouped by `groups`.
inline double anova_f(const Eigen::VectorXd& x, const std::vector<int>& groups) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t r = 0; r < groups.size(); ++r) {
    acc[groups[r]].first += x(static_cast<Eigen::Index>(r));
    ++acc[groups[r]].second;
  }
  const auto g = static_cast<double>(acc.size()), n = static_cast<double>(groups.size());
  require(acc.size() >= 2, "anova needs at least two groups");
  const double grand = x.mean();
  double ssb = 0.0, ssw = 0.0;
  for (const auto& [k, v] : acc) {
    const double m = v.first / static_cast<double>(v.second);
    ssb += static_cast<double>(v.second) * (m - grand) * (m - grand);
  }
  for (std::size_t r = 0; r < groups.size(); ++r) {
    const auto& v = acc[groups[r]];
    const double m = v.first / static_cast<double>(v.second);
    ssw += (x(static_cast<Eigen::Index>(r)) - m) * (x(static_cast<Eigen::Index>(r)) - m);
  }
  if (n - g <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double msb = ssb / (g - 1.0), msw = ssw / (n - g);
  if (msw <= 1e-300 * std::max(1.0, msb)) return msb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return msb / msw;
}

inline PcaReport pca_report(const RepresentationTable& t, const std::string& static_label, const std::string& state_label,
                            const PcaOptions& opt = {}) {
  t.validate();
  require(opt.n_report >= 1, "n_report must be positive");
  if (t.subjects().size() < 2) throw InvalidArgument("pca report needs at least 2 subjects");
  const auto& state = t.label(state_label);
  const auto& stat = t.label(static_label);
  {
    std::vector<int> seen;
    for (int v : state)
      if (v != kMissing && std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
    if (seen.size() < 2) throw InvalidArgument("pca report needs at least 2 states present");
  }
  PcaReport rep;
  rep.static_label = static_label;
  rep.state_label = state_label;
  rep.threshold = opt.d_threshold;
  rep.mean = t.h.colwise().mean();
  const Mat<double> Xc = t.h.rowwise() - rep.mean;
  const Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(std::max<std::size_t>(t.size() - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw RuntimeError("eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().reverse();
  const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  const double total = std::max(ev.sum(), 0.0);
  const double floor = std::max(1e-12, 1e-10 * std::max(ev(0), 0.0));
  Eigen::Index rank = 0;
  while (rank < ev.size() && ev(rank) > floor) ++rank;
  const Eigen::Index k = std::min<Eigen::Index>(rank, opt.n_report);
  rep.loadings.resize(t.dim(), k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd v = vecs.col(c);
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < v.size(); ++r)
      if (std::abs(v(r)) > std::abs(v(arg)) + 1e-12) arg = r;
    if (v(arg) < 0) v = -v;
    rep.loadings.col(c) = v;
  }
  rep.scores = Xc * rep.loadings;
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::VectorXd s = rep.scores.col(c);
    PcaComponent pc;
    pc.index = static_cast<int>(c);
    pc.explained_variance = ev(c);
    pc.explained_ratio = total > 0 ? ev(c) / total : 0.0;
    pc.subject_f = anova_f(s, t.subject_ids);
    pc.state_d = max_pairwise_d(s, state).value_or(0.0);
    pc.static_d = max_pairwise_d(s, stat);
    pc.state_discriminative = pc.state_d > opt.d_threshold;
    pc.static_discriminative = pc.static_d && *pc.static_d > opt.d_threshold;
    rep.components.push_back(pc);
  }
  return rep;
}

inline std::string to_csv(const PcaReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "component,explained_variance,explained_ratio,subject_f,state_d,static_d,state_discriminative,"
        "static_discriminative\n";
  for (const auto& c : r.components) {
    os << c.index << ',' << c.explained_variance << ',' << c.explained_ratio << ',' << c.subject_f << ',' << c.state_d
       << ',';
    if (c.static_d) os << *c.static_d;
    os << ',' << (c.state_discriminative ? 1 : 0) << ',' << (c.static_discriminative ? 1 : 0) << "\n";
  }
  return os.str();
}

/// Per-component class densities of the scores, one panel per component.
inline std::string density_svg(const PcaReport& r, const std::vector<int>& labels, const std::string& label_name) {
  std::vector<svg::Panel> panels;
  for (const auto& c : r.components) {
    const Eigen::VectorXd s = r.scores.col(c.index);
    std::map<int, std::vector<double>> groups;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] != kMissing) groups[labels[k]].push_back(s(static_cast<Eigen::Index>(k)));
    svg::Panel p;
    std::ostringstream title;
    title.precision(3);
    title << "PC" << c.index + 1;
    if (label_name == r.state_label) title << " |d|=" << c.state_d;
    if (label_name == r.static_label && c.static_d) title << " |d|=" << *c.static_d;
    p.title = title.str();
    p.x_label = "score";
    p.y_label = "density";
    const double lo = s.minCoeff(), hi = s.maxCoeff();
    for (const auto& [cls, v] : groups)
      p.series.push_back(svg::density(label_name + "=" + std::to_string(cls), v, lo, hi > lo ? hi : lo + 1.0));
    panels.push_back(std::move(p));
  }
  return svg::render(panels);
}

/// Writes pca_report.csv plus one density figure per label into `dir`.
inline void write_pca_report(const io::fs::path& dir, const PcaReport& r, const RepresentationTable& t) {
  io::fs::create_directories(dir);
  io::write_text(dir / "pca_report.csv", to_csv(r));
  if (r.components.empty()) return;
  io::write_text(dir / "pca_state_density.svg", density_svg(r, t.label(r.state_label), r.state_label));
  io::write_text(dir / "pca_static_density.svg", density_svg(r, t.label(r.static_label), r.static_label));
}

}  // namespace deaps::eval
