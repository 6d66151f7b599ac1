#pragma once

#include "deaps/core.hpp"
#include "deaps/eval/protocols.hpp"
#include "deaps/eval/svg.hpp"
#include "deaps/eval/table.hpp"
#include "deaps/io.hpp"
#include "deaps/model.hpp"
#include "deaps/pipeline.hpp"
#include "deaps/record.hpp"
#include "deaps/trainer.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace deaps::eval {

inline const std::string kStateLabel = "state";
inline const std::string kStaticLabel = "static_class";

/// Kept 10 s windows of preprocessed records with their identity and labels.
struct WindowBatch {
  Mat<float> windows;
  RepresentationTable meta;  // h left empty
};

inline WindowBatch collect_windows(const std::vector<SignalRecord>& records) {
  WindowBatch b;
  auto& t = b.meta;
  t.labels[kStateLabel];
  t.labels[kStaticLabel];
  std::vector<const double*> starts;
  for (const auto& r : records) {
    require(r.preprocessed && r.fs == pipeline::kTargetFs, "embedding needs preprocessed 100 Hz records");
    const std::size_t n = r.samples.size() / pipeline::kWindowLen;
    for (std::size_t w = 0; w < n; ++w) {
      if (!r.window_keep.empty() && (w >= r.window_keep.size() || r.window_keep[w] == 0)) continue;
      t.subject_ids.push_back(r.subject_id);
      t.record_ids.push_back(r.record_id);
      t.window_start_s.push_back(static_cast<double>(w) * pipeline::kWindowS);
      t.labels[kStateLabel].push_back(w < r.window_labels.size() ? r.window_labels[w] : kMissing);
      t.labels[kStaticLabel].push_back(r.static_class.value_or(kMissing));
      starts.push_back(r.samples.data() + w * pipeline::kWindowLen);
    }
  }
  b.windows.resize(static_cast<Eigen::Index>(starts.size()), static_cast<Eigen::Index>(pipeline::kWindowLen));
  for (std::size_t k = 0; k < starts.size(); ++k)
    for (std::size_t c = 0; c < pipeline::kWindowLen; ++c)
      b.windows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = static_cast<float>(starts[k][c]);
  t.h.resize(static_cast<Eigen::Index>(starts.size()), 0);
  return b;
}

/// Representations of every kept window from the encoder in inference mode.
template <typename T>
RepresentationTable embed(model::Encoder<T>& encoder, const std::vector<SignalRecord>& records) {
  WindowBatch b = collect_windows(records);
  if (b.windows.rows() == 0) throw InvalidArgument("no usable windows to embed");
  b.meta.h = encoder.encode(b.windows.template cast<T>()).template cast<double>();
  b.meta.validate();
  return b.meta;
}

/// Rejects checkpoints trained on data prepared by a different pipeline.
inline void check_pipeline(const nlohmann::json& ckpt_meta, const io::Manifest& m) {
  const std::string current = pipeline::pipeline_hash();
  const std::string trained = ckpt_meta.value("pipeline_hash", std::string{});
  if (trained != current)
    throw RuntimeError("checkpoint pipeline hash " + trained + " does not match the data pipeline " + current);
  const auto pj = m.root / "pipeline.json";
  if (io::fs::exists(pj)) {
    const auto data_hash = io::read_json(pj).value("pipeline_hash", std::string{});
    if (data_hash != trained)
      throw RuntimeError("manifest data was prepared with pipeline " + data_hash + ", checkpoint expects " + trained);
  }
}

inline RepresentationTable embed(const io::fs::path& checkpoint, const io::Manifest& m) {
  const auto stem = train::checkpoint_stem_of(checkpoint);
  check_pipeline(train::read_checkpoint_meta(stem), m);
  auto state = train::load_checkpoint<float>(stem);
  return embed(state.student.encoder(), pipeline::load_preprocessed(m));
}

enum class Protocol { Loo, Kfold };

inline Protocol parse_protocol(const std::string& s) {
  if (s == "loo") return Protocol::Loo;
  if (s == "kfold") return Protocol::Kfold;
  throw InvalidArgument("unknown protocol '" + s + "' (expected loo or kfold)");
}

struct ProtocolSpec {
  Protocol protocol = Protocol::Loo;
  std::string label = kStateLabel;
  int k = 5;
  std::uint64_t seed = 0;
};

inline ProbeResult run_protocol(const RepresentationTable& t, const ProtocolSpec& p) {
  return p.protocol == Protocol::Loo ? loo_cv(t, p.label) : kfold_cv(t, p.label, p.k, p.seed);
}

struct CurvePoint {
  long long iteration = 0;
  double accuracy = 0.0;
  double fold_mean = 0.0;
  double fold_std = 0.0;
};

/// Probe accuracy for every checkpoint in `dir`, in iteration order.
inline std::vector<CurvePoint> curve(const io::fs::path& dir, const io::Manifest& m, const ProtocolSpec& p) {
  const auto ckpts = train::list_checkpoints(dir);
  if (ckpts.empty()) throw InvalidArgument("no checkpoints in " + dir.string());
  const auto records = pipeline::load_preprocessed(m);
  std::vector<CurvePoint> out;
  for (const auto& stem : ckpts) {
    const auto meta = train::read_checkpoint_meta(stem);
    check_pipeline(meta, m);
    auto state = train::load_checkpoint<float>(stem);
    const auto res = run_protocol(embed(state.student.encoder(), records), p);
    out.push_back({meta.at("iteration").get<long long>(), res.accuracy, res.fold_mean, res.fold_std});
  }
  return out;
}

inline std::string curve_csv(const std::vector<CurvePoint>& c) {
  std::ostringstream os;
  os.precision(9);
  os << "iteration,accuracy,fold_mean,fold_std\n";
  for (const auto& p : c) os << p.iteration << ',' << p.accuracy << ',' << p.fold_mean << ',' << p.fold_std << "\n";
  return os.str();
}

inline std::string curve_svg(const std::vector<CurvePoint>& c, const std::string& title) {
  svg::Series s{"accuracy", {}, {}};
  for (const auto& p : c) {
    s.x.push_back(static_cast<double>(p.iteration));
    s.y.push_back(p.accuracy);
  }
  return svg::render({svg::Panel{title, "iteration", "accuracy", {s}}}, 1, 480, 320);
}

/// Text summary of a probe result as CSV rows of metric,value.
inline std::string probe_csv(const ProbeResult& r) {
  std::ostringstream os;
  os.precision(9);
  os << "metric,value\n";
  os << "accuracy," << r.accuracy << "\n";
  os << "sensitivity,";
  if (r.sensitivity) os << *r.sensitivity;
  os << "\nspecificity,";
  if (r.specificity) os << *r.specificity;
  os << "\nfold_mean," << r.fold_mean << "\nfold_std," << r.fold_std << "\nn_folds," << r.folds.size() << "\n";
  for (const auto& [cls, acc] : r.per_class_accuracy) os << "class_accuracy." << cls << ',' << acc << "\n";
  for (std::size_t a = 0; a < r.classes.size(); ++a)
    for (std::size_t b = 0; b < r.classes.size(); ++b)
      os << "confusion." << r.classes[a] << '.' << r.classes[b] << ','
         << r.confusion(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) << "\n";
  return os.str();
}

inline std::string folds_csv(const ProbeResult& r) {
  std::ostringstream os;
  os.precision(9);
  os << "fold,test_subjects,n_test,accuracy\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    os << f << ',';
    bool first = true;
    for (int s : r.folds[f].test_subjects) {
      os << (first ? "" : " ") << s;
      first = false;
    }
    os << ',' << r.folds[f].n_test << ',' << r.folds[f].accuracy << "\n";
  }
  return os.str();
}

}  // namespace deaps::eval
