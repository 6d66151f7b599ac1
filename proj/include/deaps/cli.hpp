#pragma once

// Command-line front end. run() returns the process exit code:
// 0 success, 1 usage error, 2 runtime failure.

#include "deaps/config.hpp"
#include "deaps/core.hpp"
#include "deaps/eval/embed.hpp"
#include "deaps/eval/pca.hpp"
#include "deaps/eval/protocols.hpp"
#include "deaps/io.hpp"
#include "deaps/pipeline.hpp"
#include "deaps/sampling.hpp"
#include "deaps/synthgen.hpp"
#include "deaps/trainer.hpp"

#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace deaps::cli {

/// Relative output paths are placed under this directory when it is set.
inline constexpr const char* kOutputRootEnv = "DEAPS_OUTPUT_ROOT";

inline io::fs::path output_path(const std::string& p) {
  io::fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return io::fs::path(root) / path;
  }
  return path;
}

inline std::set<int> parse_subjects(const std::string& s) {
  std::set<int> out;
  for (const auto& f : io::split_csv(s)) {
    if (f.empty()) continue;
    try {
      out.insert(std::stoi(f));
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad subject id '" + f + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("empty subject list");
  return out;
}

/// One axis of an ablation grid, e.g. `window_size_s=90,120,150`.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

inline GridAxis parse_grid_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("grid axis '" + spec + "' is not key=v1,v2,...");
  GridAxis a{spec.substr(0, eq), {}};
  for (const auto& v : io::split_csv(spec.substr(eq + 1)))
    if (!v.empty()) a.values.push_back(v);
  if (a.values.empty()) throw InvalidArgument("grid axis '" + a.key + "' has no values");
  const auto keys = config::known_keys();
  if (std::find(keys.begin(), keys.end(), a.key) == keys.end())
    throw InvalidArgument("unknown config key '" + a.key + "' in grid");
  return a;
}

/// Cartesian product of the axes; each point is a list of key=value overrides.
inline std::vector<std::vector<std::string>> expand_grid(const std::vector<GridAxis>& axes) {
  if (axes.empty()) throw InvalidArgument("empty ablation grid");
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& a : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points)
      for (const auto& v : a.values) {
        auto q = p;
        q.push_back(a.key + "=" + v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

struct TrainRun {
  train::TrainState<float> state;
  objectives::LossBreakdown last;
};

/// Trains one configuration into `dir` (config echo, loss log, checkpoints).
inline TrainRun train_run(const config::RunConfig& cfg, const std::vector<SignalRecord>& records,
                          const io::fs::path& dir, std::ostream& out,
                          std::optional<io::fs::path> resume = std::nullopt) {
  cfg.validate();
  config::echo(dir, cfg);
  TrainRun run;
  train::FitOptions fo;
  fo.out_dir = dir;
  fo.resume_from = std::move(resume);
  const auto every = std::max(1, cfg.train.iterations / 10);
  fo.on_step = [&out, &run, every](std::int64_t k, const objectives::LossBreakdown& lb) {
    run.last = lb;
    if ((k + 1) % every == 0)
      out << "iter " << k + 1 << " l_sim " << lb.l_sim << " l_gra " << lb.l_gra << " l_cov " << lb.l_cov << " total "
          << lb.total << "\n";
  };
  run.state = train::fit<float>(cfg.train, sampling::Corpus::from_records(records), fo);
  return run;
}

inline void write_probe(const io::fs::path& dir, const eval::ProbeResult& r) {
  io::fs::create_directories(dir);
  io::write_text(dir / "probe.csv", eval::probe_csv(r));
  io::write_text(dir / "folds.csv", eval::folds_csv(r));
}

inline void print_probe(std::ostream& out, const eval::ProbeResult& r) {
  out << "accuracy " << r.accuracy;
  out << " sensitivity ";
  if (r.sensitivity) out << *r.sensitivity; else out << "n/a";
  out << " specificity ";
  if (r.specificity) out << *r.specificity; else out << "n/a";
  out << " folds " << r.folds.size() << " fold_mean " << r.fold_mean << " fold_std " << r.fold_std << "\n";
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"deaps: self-supervised pretraining and evaluation for single-channel signals"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> global_seed;
  app.add_option("--seed", global_seed, "Seed applied to every stochastic step");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with known states");
  int n_subjects = 0, n_records = 0;
  double duration = 0;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  synth->add_option("--subjects", n_subjects)->required();
  synth->add_option("--records", n_records, "Records per subject")->required();
  synth->add_option("--duration", duration, "Record length in seconds")->required();
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Resample, filter, normalize and quality-mark a manifest");
  std::string in_manifest, prep_out;
  prep->add_option("--in-manifest", in_manifest)->required();
  prep->add_option("--out-dir", prep_out)->required();

  // train
  auto* tr = app.add_subcommand("train", "Pretrain an encoder");
  std::string cfg_file, data, train_out, preset = "default", method, resume;
  std::vector<std::string> sets;
  std::optional<int> iterations;
  bool dry_run = false;
  tr->add_option("--config", cfg_file, "Flat JSON config file");
  tr->add_option("--preset", preset, "default or smoke")->check(CLI::IsMember({"default", "smoke"}));
  tr->add_option("--data", data, "Manifest (file or directory)");
  tr->add_option("--out", train_out, "Run directory");
  tr->add_option("--method", method)->check(CLI::IsMember({"deaps", "byol", "contrastive"}));
  tr->add_option("--iterations", iterations);
  tr->add_option("--set", sets, "key=value config override (repeatable)");
  tr->add_option("--resume", resume, "Checkpoint to continue from");
  tr->add_flag("--dry-run", dry_run, "Validate the config and print the parameter count");

  // embed
  auto* em = app.add_subcommand("embed", "Extract representations with a checkpoint");
  std::string ckpt, em_data, em_out;
  em->add_option("--checkpoint", ckpt)->required();
  em->add_option("--data", em_data)->required();
  em->add_option("--out", em_out, "Representation table CSV")->required();

  // probe / loo / kfold
  std::string table, label = eval::kStateLabel, eval_out, train_subj, test_subj;
  int k = 5;
  auto* pr = app.add_subcommand("probe", "Fit a probe on some subjects and score it on others");
  pr->add_option("--table", table)->required();
  pr->add_option("--label", label);
  pr->add_option("--train-subjects", train_subj, "Comma-separated subject ids")->required();
  pr->add_option("--test-subjects", test_subj, "Comma-separated subject ids")->required();
  pr->add_option("--out", eval_out);
  auto* loo = app.add_subcommand("loo", "Leave-one-subject-out probe");
  loo->add_option("--table", table)->required();
  loo->add_option("--label", label);
  loo->add_option("--out", eval_out);
  auto* kf = app.add_subcommand("kfold", "Subject-level stratified k-fold probe");
  kf->add_option("--table", table)->required();
  kf->add_option("--label", label);
  kf->add_option("--k", k);
  kf->add_option("--out", eval_out);

  // pca-report
  auto* pca = app.add_subcommand("pca-report", "Per-component separability of representations");
  std::string static_label = eval::kStaticLabel, state_label = eval::kStateLabel;
  pca->add_option("--table", table)->required();
  pca->add_option("--static-label", static_label);
  pca->add_option("--state-label", state_label);
  pca->add_option("--out", eval_out)->required();

  // curve
  auto* cu = app.add_subcommand("curve", "Probe accuracy across the checkpoints of a run");
  std::string ckpt_dir, cu_data, protocol = "loo";
  cu->add_option("--checkpoints", ckpt_dir)->required();
  cu->add_option("--data", cu_data)->required();
  cu->add_option("--protocol", protocol)->check(CLI::IsMember({"loo", "kfold"}));
  cu->add_option("--label", label);
  cu->add_option("--k", k);
  cu->add_option("--out", eval_out)->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and probe every point of a config grid");
  std::vector<std::string> grid;
  std::string ab_data, ab_out, ab_preset = "smoke", ab_cfg;
  std::vector<std::string> ab_sets;
  ab->add_option("--grid", grid, "key=v1,v2,... (repeatable; axes are crossed)")->required();
  ab->add_option("--data", ab_data, "Manifest; a synthetic corpus is generated when omitted");
  ab->add_option("--preset", ab_preset)->check(CLI::IsMember({"default", "smoke"}));
  ab->add_option("--config", ab_cfg);
  ab->add_option("--set", ab_sets);
  ab->add_option("--out", ab_out)->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  auto resolve = [&](const std::string& preset_name, const std::string& file, const std::vector<std::string>& overrides) {
    config::RunConfig c = config::preset(preset_name);
    if (!file.empty()) c = config::load_file(file, c);
    for (const auto& kv : overrides) {
      auto [key, v] = config::parse_override(kv);
      config::overlay(c, {{key, v}});
    }
    if (global_seed) c.train.seed = *global_seed;
    return c;
  };

  try {
    if (*synth) {
      const std::uint64_t seed = synth_seed.value_or(global_seed.value_or(0));
      const auto dir = output_path(synth_out);
      const auto m = synth::generate_dataset(n_subjects, n_records, duration, seed, dir);
      const nlohmann::json echo = {{"subjects", n_subjects}, {"records", n_records}, {"duration", duration}, {"seed", seed}};
      io::write_text(dir / "synth.json", echo.dump(2) + "\n");
      io::write_text(dir / "synth.hash", content_hash(echo.dump()) + "\n");
      out << "wrote " << m.entries.size() << " records to " << dir.string() << "\n";
    } else if (*prep) {
      const auto m = pipeline::preprocess_manifest(io::read_manifest(in_manifest), output_path(prep_out));
      out << "preprocessed " << m.entries.size() << " records into " << m.root.string() << "\n";
    } else if (*tr) {
      std::vector<std::string> overrides = sets;
      if (!method.empty()) overrides.push_back("method=\"" + method + "\"");
      if (iterations) overrides.push_back("iterations=" + std::to_string(*iterations));
      const auto cfg = resolve(preset, cfg_file, overrides);
      cfg.validate();
      if (dry_run) {
        model::Network<float> net(cfg.train.encoder, cfg.train.layout(), cfg.train.seed);
        out << config::to_json(cfg).dump(2) << "\n";
        out << "config_hash " << config::hash(cfg) << "\n";
        out << "encoder_parameters " << model::encoder_parameter_count(cfg.train.encoder) << "\n";
        out << "trainable_parameters " << model::count_parameters(net.parameters()) << "\n";
        return 0;
      }
      if (data.empty() || train_out.empty()) throw InvalidArgument("train needs --data and --out (or --dry-run)");
      const auto records = pipeline::load_preprocessed(io::read_manifest(data));
      const auto dir = output_path(train_out);
      const auto run = train_run(cfg, records, dir, out,
                                 resume.empty() ? std::nullopt : std::optional<io::fs::path>(resume));
      out << "trained " << run.state.iteration << " iterations; checkpoints and loss_log.csv in " << dir.string() << "\n";
    } else if (*em) {
      const auto t = eval::embed(ckpt, io::read_manifest(em_data));
      const auto path = output_path(em_out);
      if (path.has_parent_path()) io::fs::create_directories(path.parent_path());
      eval::write_table(path, t);
      out << "wrote " << t.size() << " rows x " << t.dim() << " features to " << path.string() << "\n";
    } else if (*pr || *loo || *kf) {
      const auto t = eval::read_table(table);
      eval::ProbeResult r;
      if (*pr) {
        const auto probe = eval::fit_probe(t, label, parse_subjects(train_subj));
        r = eval::score_probe(probe, t, parse_subjects(test_subj));
      } else if (*loo) {
        r = eval::loo_cv(t, label);
      } else {
        r = eval::kfold_cv(t, label, k, global_seed.value_or(0));
      }
      print_probe(out, r);
      if (!eval_out.empty()) write_probe(output_path(eval_out), r);
    } else if (*pca) {
      const auto t = eval::read_table(table);
      const auto rep = eval::pca_report(t, static_label, state_label);
      eval::write_pca_report(output_path(eval_out), rep, t);
      out << eval::to_csv(rep);
    } else if (*cu) {
      const eval::ProtocolSpec spec{eval::parse_protocol(protocol), label, k, global_seed.value_or(0)};
      const auto points = eval::curve(ckpt_dir, io::read_manifest(cu_data), spec);
      const auto dir = output_path(eval_out);
      io::fs::create_directories(dir);
      io::write_text(dir / "curve.csv", eval::curve_csv(points));
      io::write_text(dir / "curve.svg", eval::curve_svg(points, protocol + " " + label + " accuracy"));
      out << eval::curve_csv(points);
    } else if (*ab) {
      std::vector<GridAxis> axes;
      for (const auto& g : grid) axes.push_back(parse_grid_axis(g));
      const auto points = expand_grid(axes);
      const auto base = resolve(ab_preset, ab_cfg, ab_sets);
      const auto dir = output_path(ab_out);
      io::fs::create_directories(dir);
      io::Manifest m;
      if (ab_data.empty()) {
        m = pipeline::preprocess_manifest(synth::generate_dataset(16, 2, 300, base.train.seed, dir / "data"),
                                          dir / "data_prep");
      } else {
        m = io::read_manifest(ab_data);
      }
      const auto records = pipeline::load_preprocessed(m);
      std::ostringstream csv;
      csv.precision(9);
      csv << "run";
      for (const auto& a : axes) csv << ',' << a.key;
      csv << ",config_hash,accuracy,fold_mean,fold_std,final_total_loss\n";
      for (std::size_t p = 0; p < points.size(); ++p) {
        config::RunConfig c = base;
        for (const auto& kv : points[p]) {
          auto [key, v] = config::parse_override(kv);
          config::overlay(c, {{key, v}});
        }
        c.validate();
        char name[32];
        std::snprintf(name, sizeof(name), "run_%02zu", p);
        out << name << ":";
        for (const auto& kv : points[p]) out << ' ' << kv;
        out << "\n";
        auto run = train_run(c, records, dir / name, out);
        const auto t = eval::embed(run.state.student.encoder(), records);
        const auto r = eval::run_protocol(t, c.protocol_spec());
        csv << name;
        for (const auto& kv : points[p]) csv << ',' << kv.substr(kv.find('=') + 1);
        csv << ',' << config::hash(c) << ',' << r.accuracy << ',' << r.fold_mean << ',' << r.fold_std << ','
            << run.last.total << "\n";
        print_probe(out, r);
      }
      io::write_text(dir / "ablation.csv", csv.str());
      out << "wrote " << points.size() << " rows to " << (dir / "ablation.csv").string() << "\n";
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace deaps::cli
