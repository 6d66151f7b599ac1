#pragma once

#include "deaps/core.hpp"
#include "deaps/io.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace deaps::eval {

/// Label value used for rows without ground truth for that label.
inline constexpr int kMissing = -1;

/// One row per evaluation window: identity, start time, named integer labels
/// and the representation vector.
struct RepresentationTable {
  std::vector<int> subject_ids;
  std::vector<int> record_ids;
  std::vector<double> window_start_s;
  std::map<std::string, std::vector<int>> labels;
  Mat<double> h;

  std::size_t size() const { return subject_ids.size(); }
  Eigen::Index dim() const { return h.cols(); }

  void validate() const {
    const auto n = size();
    require(record_ids.size() == n && window_start_s.size() == n && static_cast<std::size_t>(h.rows()) == n,
            "representation table columns have different lengths");
    for (const auto& [name, v] : labels) {
      require(!name.empty() && name.find(',') == std::string::npos, "invalid label name '" + name + "'");
      require(v.size() == n, "label column '" + name + "' has the wrong length");
    }
  }

  const std::vector<int>& label(const std::string& name) const {
    auto it = labels.find(name);
    if (it == labels.end()) throw InvalidArgument("table has no label '" + name + "'");
    return it->second;
  }

  std::set<int> subjects() const { return {subject_ids.begin(), subject_ids.end()}; }

  /// Rows whose subject is in `subjects`.
  std::vector<std::size_t> rows_of(const std::set<int>& subjects) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < size(); ++r)
      if (subjects.count(subject_ids[r])) out.push_back(r);
    return out;
  }

  void append(const RepresentationTable& other) {
    if (size() == 0 && labels.empty()) {
      *this = other;
      return;
    }
    require(other.dim() == dim(), "cannot append tables of different representation width");
    require(other.labels.size() == labels.size(), "cannot append tables with different label sets");
    for (const auto& [name, v] : other.labels) {
      auto it = labels.find(name);
      require(it != labels.end(), "cannot append tables with different label sets");
      it->second.insert(it->second.end(), v.begin(), v.end());
    }
    subject_ids.insert(subject_ids.end(), other.subject_ids.begin(), other.subject_ids.end());
    record_ids.insert(record_ids.end(), other.record_ids.begin(), other.record_ids.end());
    window_start_s.insert(window_start_s.end(), other.window_start_s.begin(), other.window_start_s.end());
    Mat<double> stacked(h.rows() + other.h.rows(), h.cols());
    stacked << h, other.h;
    h = std::move(stacked);
  }
};

inline std::string to_csv(const RepresentationTable& t) {
  t.validate();
  std::ostringstream os;
  os.precision(9);
  os << "subject_id,record_id,window_start_s";
  for (const auto& [name, v] : t.labels) os << ",label." << name;
  for (Eigen::Index k = 0; k < t.dim(); ++k) os << ",h_" << k;
  os << "\n";
  for (std::size_t r = 0; r < t.size(); ++r) {
    os << t.subject_ids[r] << ',' << t.record_ids[r] << ',' << t.window_start_s[r];
    for (const auto& [name, v] : t.labels) {
      os << ',';
      if (v[r] != kMissing) os << v[r];
    }
    for (Eigen::Index k = 0; k < t.dim(); ++k) os << ',' << t.h(static_cast<Eigen::Index>(r), k);
    os << "\n";
  }
  return os.str();
}

inline RepresentationTable table_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("representation table is empty");
  const auto header = io::split_csv(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "record_id" || header[2] != "window_start_s")
    throw InvalidArgument("representation table header must start with subject_id,record_id,window_start_s");
  RepresentationTable t;
  std::vector<std::string> label_cols;
  std::size_t c = 3;
  for (; c < header.size() && header[c].rfind("label.", 0) == 0; ++c) label_cols.push_back(header[c].substr(6));
  const std::size_t first_h = c;
  for (std::size_t k = first_h; k < header.size(); ++k)
    if (header[k] != "h_" + std::to_string(k - first_h))
      throw InvalidArgument("unexpected representation column '" + header[k] + "'");
  const auto D = static_cast<Eigen::Index>(header.size() - first_h);
  if (D == 0) throw InvalidArgument("representation table has no h_* columns");
  for (const auto& name : label_cols) t.labels[name];

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split_csv(line);
    if (f.size() != header.size())
      throw InvalidArgument("row " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields, expected " +
                            std::to_string(header.size()));
    try {
      t.subject_ids.push_back(std::stoi(f[0]));
      t.record_ids.push_back(std::stoi(f[1]));
      t.window_start_s.push_back(std::stod(f[2]));
      for (std::size_t k = 0; k < label_cols.size(); ++k)
        t.labels[label_cols[k]].push_back(f[3 + k].empty() ? kMissing : std::stoi(f[3 + k]));
      std::vector<double> hv;
      for (std::size_t k = first_h; k < f.size(); ++k) hv.push_back(std::stod(f[k]));
      rows.push_back(std::move(hv));
    } catch (const std::logic_error&) {
      throw InvalidArgument("unparsable value in row " + std::to_string(line_no));
    }
  }
  t.h.resize(static_cast<Eigen::Index>(rows.size()), D);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index k = 0; k < D; ++k) t.h(static_cast<Eigen::Index>(r), k) = rows[r][static_cast<std::size_t>(k)];
  t.validate();
  return t;
}

inline void write_table(const io::fs::path& path, const RepresentationTable& t) { io::write_text(path, to_csv(t)); }
inline RepresentationTable read_table(const io::fs::path& path) { return table_from_csv(io::read_text(path)); }

}  // namespace deaps::eval
