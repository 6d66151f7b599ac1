#pragma once

// Training loop: forward through student and teacher, losses, one Adam step
// on the student, one EMA step on the teacher. Also checkpoint I/O and the
// fit() driver that writes the loss log and periodic checkpoints.

#include "deaps/baselines.hpp"
#include "deaps/core.hpp"
#include "deaps/io.hpp"
#include "deaps/objectives.hpp"
#include "deaps/optim.hpp"
#include "deaps/pipeline.hpp"
#include "deaps/sampling.hpp"
#include "deaps/state.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <string>
#include <vector>

namespace deaps::train {

/// Forward tensors and loss gradients of the last DEAPS step, for inspection.
template <typename T>
struct StepTrace {
  objectives::DeapsTensors<T> tensors;
  objectives::DeapsGrads<T> grads;
};

template <typename T>
objectives::LossBreakdown deaps_step(TrainState<T>& state, const sampling::QuadBatch& batch,
                                     StepTrace<T>* trace = nullptr) {
  using model::HeadKind;
  require(state.teacher.has_value(), "deaps_step needs a teacher network");
  const Eigen::Index B = batch.size();
  const Mat<T> x1 = batch.x1.template cast<T>(), xa = batch.x_tmi.template cast<T>(),
               xm = batch.x_t.template cast<T>(), xb = batch.x_tpj.template cast<T>();
  // Encoder input order: [x1 ; x_{t-i} ; x_t ; x_{t+j}]
  const Mat<T> X = vstack<T>({&x1, &xa, &xm, &xb});
  const std::vector<Eigen::Index> g2{B, B}, g3{B, B, B};

  auto split = [B](const Mat<T>& h, Mat<T>& hs, Mat<T>& hd) {
    hs.resize(2 * B, h.cols());
    hs.topRows(B) = h.topRows(B);
    hs.bottomRows(B) = h.middleRows(2 * B, B);
    hd = h.bottomRows(3 * B);
  };

  auto& st = state.student;
  auto& te = *state.teacher;
  st.zero_grad();

  objectives::DeapsTensors<T> x;
  x.i_s = batch.i_s;
  x.j_s = batch.j_s;
  {
    Mat<T> hs, hd;
    split(st.encoder().forward(X), hs, hd);
    x.proj_static = st.projector(HeadKind::Static).forward(hs, g2);
    x.pred_static = st.predictor(HeadKind::Static).forward(x.proj_static, g2);
    x.proj_dynamic = st.projector(HeadKind::Dynamic).forward(hd, g3);
    x.pred_dynamic = st.predictor(HeadKind::Dynamic).forward(x.proj_dynamic, g3);
  }
  {
    Mat<T> hs, hd;
    split(te.encoder().forward(X), hs, hd);
    x.teacher_static = te.projector(HeadKind::Static).forward(hs, g2);
    x.teacher_dynamic = te.projector(HeadKind::Dynamic).forward(hd, g3);
  }

  auto [lb, g] = objectives::total_loss(x, state.config.loss);
  detail::check_finite<T>(lb.total, batch, state.iteration);

  const Mat<T> dzs = st.predictor(HeadKind::Static).backward(g.pred_static) + g.proj_static;
  const Mat<T> dzd = st.predictor(HeadKind::Dynamic).backward(g.pred_dynamic) + g.proj_dynamic;
  const Mat<T> dhs = st.projector(HeadKind::Static).backward(dzs);
  const Mat<T> dhd = st.projector(HeadKind::Dynamic).backward(dzd);
  Mat<T> dh(4 * B, dhs.cols());
  dh.topRows(B) = dhs.topRows(B);
  dh.middleRows(B, B) = dhd.topRows(B);
  dh.middleRows(2 * B, B) = dhs.bottomRows(B) + dhd.middleRows(B, B);
  dh.bottomRows(B) = dhd.bottomRows(B);
  st.encoder().backward(dh);

  state.optimizer.step(st.parameters());
  optim::ema_update(te.shared_parameters(), st.shared_parameters(), state.config.tau);
  ++state.iteration;
  if (trace) {
    trace->tensors = std::move(x);
    trace->grads = std::move(g);
  }
  return lb;
}

template <typename T>
objectives::LossBreakdown train_step(TrainState<T>& state, const sampling::QuadBatch& batch) {
  switch (state.config.method) {
    case Method::Deaps: return deaps_step(state, batch);
    case Method::Byol: return byol_step(state, batch);
    case Method::Contrastive: return contrastive_step(state, batch);
  }
  throw InvalidArgument("unknown method");
}

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.bin holds named tensors, <stem>.json the metadata.
// ---------------------------------------------------------------------------

namespace ckpt {

inline constexpr char kMagic[8] = {'D', 'E', 'A', 'P', 'S', 'C', 'K', '1'};

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> tensors(TrainState<T>& s) {
  std::vector<std::pair<std::string, Mat<T>*>> out;
  for (auto* p : s.student.parameters()) out.emplace_back("student." + p->name, &p->value);
  for (auto& [n, m] : s.student.buffers()) out.emplace_back("student." + n, m);
  if (s.teacher) {
    for (auto* p : s.teacher->parameters()) out.emplace_back("teacher." + p->name, &p->value);
    for (auto& [n, m] : s.teacher->buffers()) out.emplace_back("teacher." + n, m);
  }
  auto params = s.student.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    out.emplace_back("adam.m." + params[k]->name, &s.optimizer.first_moments()[k]);
    out.emplace_back("adam.v." + params[k]->name, &s.optimizer.second_moments()[k]);
  }
  return out;
}

}  // namespace ckpt

inline std::string checkpoint_stem(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08lld", static_cast<long long>(iteration));
  return buf;
}

template <typename T>
void save_checkpoint(TrainState<T>& s, const std::filesystem::path& stem) {
  std::filesystem::create_directories(stem.parent_path());
  const auto bin = std::filesystem::path(stem.string() + ".bin");
  std::ofstream out(bin, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write checkpoint " + bin.string());
  out.write(ckpt::kMagic, sizeof(ckpt::kMagic));
  const auto ts = ckpt::tensors(s);
  const std::uint64_t count = ts.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, m] : ts) {
    const std::uint64_t len = name.size(), rows = static_cast<std::uint64_t>(m->rows()),
                        cols = static_cast<std::uint64_t>(m->cols());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), static_cast<std::streamsize>(len));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(T)));
  }
  if (!out) throw RuntimeError("checkpoint write failed: " + bin.string());
  out.close();

  nlohmann::json meta;
  meta["config"] = s.config.to_json();
  meta["config_hash"] = s.config.hash();
  meta["pipeline_hash"] = pipeline::pipeline_hash();
  meta["iteration"] = s.iteration;
  meta["seed"] = s.config.seed;
  meta["method"] = to_string(s.config.method);
  meta["dtype"] = ckpt::dtype_name<T>();
  meta["optimizer_steps"] = s.optimizer.steps();
  meta["encoder_parameters"] = model::count_parameters(s.student.encoder_parameters());
  io::write_json(std::filesystem::path(stem.string() + ".json"), meta);
}

inline nlohmann::json read_checkpoint_meta(const std::filesystem::path& stem) {
  return io::read_json(std::filesystem::path(stem.string() + ".json"));
}

/// Accepts a checkpoint stem or either of its two files.
inline std::filesystem::path checkpoint_stem_of(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".bin" || ext == ".json") return p.parent_path() / p.stem();
  return p;
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& where) {
  const auto stem = checkpoint_stem_of(where);
  const auto meta = read_checkpoint_meta(stem);
  if (meta.at("dtype").get<std::string>() != ckpt::dtype_name<T>())
    throw RuntimeError("checkpoint dtype " + meta.at("dtype").get<std::string>() + " does not match reader");
  const TrainConfig cfg = TrainConfig::from_json(meta.at("config"));
  if (cfg.hash() != meta.at("config_hash").get<std::string>())
    throw RuntimeError("checkpoint config hash mismatch in " + stem.string());
  TrainState<T> s = make_state<T>(cfg);
  s.iteration = meta.at("iteration").get<std::int64_t>();
  s.optimizer.set_steps(meta.at("optimizer_steps").get<std::int64_t>());

  std::map<std::string, Mat<T>*> by_name;
  for (auto& [n, m] : ckpt::tensors(s)) by_name[n] = m;
  const auto bin = std::filesystem::path(stem.string() + ".bin");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint " + bin.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0)
    throw RuntimeError("not a checkpoint file: " + bin.string());
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != by_name.size()) throw RuntimeError("checkpoint tensor count mismatch");
  for (std::uint64_t k = 0; k < count; ++k) {
    std::uint64_t len = 0, rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    auto it = by_name.find(name);
    if (!in || it == by_name.end()) throw RuntimeError("unexpected tensor '" + name + "' in checkpoint");
    Mat<T>& m = *it->second;
    if (static_cast<std::uint64_t>(m.rows()) != rows || static_cast<std::uint64_t>(m.cols()) != cols)
      throw RuntimeError("shape mismatch for tensor '" + name + "'");
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  }
  if (!in) throw RuntimeError("truncated checkpoint " + bin.string());
  return s;
}

/// Checkpoint stems in a directory, ordered by iteration.
inline std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
  static const std::regex pat("ckpt_(\\d+)\\.json");
  std::vector<std::pair<long long, std::filesystem::path>> found;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string fname = e.path().filename().string();
    if (std::regex_match(fname, m, pat) && std::filesystem::exists(dir / (e.path().stem().string() + ".bin")))
      found.emplace_back(std::stoll(m[1].str()), dir / e.path().stem());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& [it, p] : found) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(std::int64_t, const objectives::LossBreakdown&)> on_step;
};

inline std::string loss_row(std::int64_t iter, const objectives::LossBreakdown& lb) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(iter), lb.l_sim, lb.l_gra,
                lb.l_cov, lb.total);
  return buf;
}

/// Runs train_step until config.iterations, writing `loss_log.csv`
/// (iter,l_sim,l_gra,l_cov,total), a checkpoint every `checkpoint_every`
/// iterations and one at the end. Resuming truncates the log to the
/// checkpoint's iteration first.
template <typename T>
TrainState<T> fit(const TrainConfig& config, const sampling::Corpus& corpus, const FitOptions& opt) {
  namespace fs = std::filesystem;
  TrainState<T> state = opt.resume_from ? load_checkpoint<T>(*opt.resume_from) : init_state<T>(config, corpus);
  if (opt.resume_from) {
    require(state.config.hash() == config.hash() ||
                [&] {
                  auto a = state.config.to_json(), b = config.to_json();
                  a.erase("iterations");
                  b.erase("iterations");
                  return a == b;
                }(),
            "resume config differs from the checkpoint's (only iterations may change)");
    state.config.iterations = config.iterations;
  }
  fs::create_directories(opt.out_dir);
  const fs::path log_path = opt.out_dir / "loss_log.csv";

  std::vector<std::string> kept_rows;
  if (opt.resume_from && fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) < state.iteration) kept_rows.push_back(line);
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw RuntimeError("cannot write " + log_path.string());
  log << "iter,l_sim,l_gra,l_cov,total\n";
  for (const auto& r : kept_rows) log << r << '\n';

  const auto sc = state.config.sampler();
  while (state.iteration < state.config.iterations) {
    const std::int64_t k = state.iteration;
    const auto batch = sampling::batch_for_iteration(corpus, sc, static_cast<std::uint64_t>(k));
    objectives::LossBreakdown lb;
    try {
      lb = train_step(state, batch);
    } catch (const RuntimeError& e) {
      io::write_json(opt.out_dir / "failure.json",
                     {{"iteration", k}, {"batch_seed", batch.seed}, {"error", e.what()}});
      throw;
    }
    log << loss_row(k, lb);
    if (!log) throw RuntimeError("write failed: " + log_path.string());
    if (opt.on_step) opt.on_step(k, lb);
    if (state.iteration % state.config.checkpoint_every == 0 || state.iteration == state.config.iterations)
      save_checkpoint(state, opt.out_dir / checkpoint_stem(state.iteration));
  }
  log.flush();
  return state;
}

/// Smallest per-feature standard deviation of representations over `windows`;
/// a collapsed encoder drives this towards zero.
template <typename T>
double min_feature_std(model::Network<T>& net, const Mat<T>& windows) {
  const Mat<T> h = net.encoder().encode(windows);
  const RowVec<T> mu = h.colwise().mean();
  const RowVec<T> var = (h.rowwise() - mu).array().square().colwise().sum() / static_cast<T>(h.rows() - 1);
  return static_cast<double>(var.cwiseSqrt().minCoeff());
}

}  // namespace deaps::train
