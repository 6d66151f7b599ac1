#include "deaps/cli.hpp"
#include "deaps/config.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace deaps;
using deaps::testing::scratch_dir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTinySets = {
    "--set", "patch_len=50",  "--set", "n_blocks=1",    "--set", "n_heads=2",        "--set", "model_dim=8",
    "--set", "mlp_hidden=16", "--set", "head_hidden=16", "--set", "head_out=8",       "--set", "n_selected=4",
    "--set", "batch_size=4",  "--set", "iterations=4",  "--set", "checkpoint_every=2"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinySets.begin(), kTinySets.end());
  return args;
}

/// Synthesizes and preprocesses a 3-subject corpus through the CLI.
std::filesystem::path prepared(const std::string& name) {
  const auto dir = scratch_dir(name);
  EXPECT_EQ(run_cli({"synth", "--subjects", "3", "--records", "2", "--duration", "300", "--seed", "1", "--out",
                     (dir / "raw").string()})
                .code,
            0);
  EXPECT_EQ(run_cli({"preprocess", "--in-manifest", (dir / "raw").string(), "--out-dir", (dir / "prep").string()}).code,
            0);
  return dir / "prep";
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
  config::RunConfig c;
  EXPECT_THROW(config::overlay(c, {{"learning_rate", 0.1}}), InvalidArgument);
  EXPECT_THROW(config::overlay(c, nlohmann::json::array()), InvalidArgument);
}

TEST(Config, OverlayAndHash) {
  config::RunConfig c = config::preset("smoke");
  const auto h0 = config::hash(c);
  config::overlay(c, {{"lr", 1e-3}, {"head_out", 64}});
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.loss.proj_dim, 64);
  EXPECT_NE(config::hash(c), h0);
  EXPECT_EQ(config::hash(config::preset("smoke")), h0);
}

TEST(Config, SmokePresetValues) {
  const auto c = config::preset("smoke");
  EXPECT_EQ(c.train.encoder.model_dim, 64);
  EXPECT_EQ(c.train.encoder.n_blocks, 3);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.iterations, 2000);
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(config::preset("huge"), InvalidArgument);
}

TEST(Config, DefaultsFollowTrainingSetup) {
  const auto c = config::preset("default");
  EXPECT_EQ(c.train.iterations, 30000);
  EXPECT_EQ(c.train.batch_size, 256);
  EXPECT_DOUBLE_EQ(c.train.lr, 3e-4);
  EXPECT_DOUBLE_EQ(c.train.weight_decay, 1.5e-6);
  EXPECT_DOUBLE_EQ(c.train.tau, 0.995);
  EXPECT_EQ(c.train.loss.n_selected, 32);
  EXPECT_EQ(c.train.window_size_s, 120);
}

TEST(Config, EchoWritesConfigAndHash) {
  const auto dir = scratch_dir("echo");
  const auto c = config::preset("smoke");
  config::echo(dir, c);
  const auto back = config::load_file(dir / "config.json", config::RunConfig{});
  EXPECT_EQ(config::hash(back), config::hash(c));
  EXPECT_EQ(io::read_text(dir / "config.hash"), config::hash(c) + "\n");
}

TEST(Config, OverrideParsing) {
  EXPECT_EQ(config::parse_override("lr=0.5").second, 0.5);
  EXPECT_EQ(config::parse_override("protocol=kfold").second, "kfold");
  EXPECT_THROW(config::parse_override("noequals"), InvalidArgument);
}

TEST(Cli, SynthWritesManifest) {
  const auto dir = scratch_dir("cli_synth");
  const auto r = run_cli({"synth", "--subjects", "4", "--records", "2", "--duration", "300", "--seed", "7", "--out",
                          dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_manifest(dir).entries.size(), 8u);
  EXPECT_TRUE(std::filesystem::exists(dir / "synth.hash"));
}

TEST(Cli, OutputRootFromEnvironment) {
  const auto root = scratch_dir("cli_root");
  ::setenv(cli::kOutputRootEnv, root.c_str(), 1);
  const auto r = run_cli({"synth", "--subjects", "2", "--records", "2", "--duration", "60", "--out", "rel"});
  ::unsetenv(cli::kOutputRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(root / "rel" / "manifest.csv"));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--subjects", "4"}).code, 1);
  EXPECT_EQ(run_cli({"train", "--dry-run", "--set", "no_such_key=1"}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--subjects", "1", "--records", "2", "--duration", "300", "--out",
                     scratch_dir("cli_bad").string()})
                .code,
            1);
  EXPECT_EQ(run_cli({"loo", "--table", "/nonexistent/table.csv"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, DryRunPrintsExactParameterCount) {
  const auto r = run_cli({"train", "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("encoder_parameters 1199232"), std::string::npos);
  EXPECT_NE(r.out.find("config_hash " + config::hash(config::preset("default"))), std::string::npos);
}

TEST(Cli, GlobalSeedOverridesConfig) {
  const auto a = run_cli({"--seed", "11", "train", "--dry-run"});
  ASSERT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("\"seed\": 11"), std::string::npos);
}

TEST(Cli, UnknownKeyInConfigFileRejected) {
  const auto dir = scratch_dir("cli_cfg");
  io::write_text(dir / "c.json", R"({"lr": 0.001, "warmup": 10})");
  const auto r = run_cli({"train", "--dry-run", "--config", (dir / "c.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("warmup"), std::string::npos);
}

TEST(Cli, EndToEndTrainEmbedEvaluate) {
  const auto data = prepared("cli_e2e");
  const auto run = scratch_dir("cli_e2e_run");
  auto r = run_cli(with_tiny({"train", "--data", data.string(), "--out", run.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(run / "loss_log.csv"));
  EXPECT_TRUE(std::filesystem::exists(run / "config.hash"));
  EXPECT_TRUE(std::filesystem::exists(run / "ckpt_00000004.bin"));
  EXPECT_TRUE(std::filesystem::exists(run / "ckpt_00000004.json"));

  const auto table = run / "table.csv";
  r = run_cli({"embed", "--checkpoint", (run / "ckpt_00000004").string(), "--data", data.string(), "--out",
               table.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"loo", "--table", table.string(), "--out", (run / "loo").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(run / "loo" / "probe.csv"));
  r = run_cli({"probe", "--table", table.string(), "--train-subjects", "0,1", "--test-subjects", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run_cli({"probe", "--table", table.string(), "--train-subjects", "0,1", "--test-subjects", "1"}).code, 1);
  r = run_cli({"pca-report", "--table", table.string(), "--out", (run / "pca").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"curve", "--checkpoints", run.string(), "--data", data.string(), "--out", (run / "curve").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(run / "curve" / "curve.svg"));
}

TEST(Cli, SingletonAblationMatchesDirectRun) {
  const auto data = prepared("cli_ablate");
  const auto ab = scratch_dir("cli_ablate_out"), direct = scratch_dir("cli_ablate_direct");
  auto r = run_cli(with_tiny({"ablate", "--grid", "n_selected=4", "--data", data.string(), "--out", ab.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli(with_tiny({"train", "--preset", "smoke", "--data", data.string(), "--out", direct.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_text(ab / "run_00" / "config.hash"), io::read_text(direct / "config.hash"));

  const auto rows = io::read_text(ab / "ablation.csv");
  std::istringstream is(rows);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "run,n_selected,config_hash,accuracy,fold_mean,fold_std,final_total_loss");
  const auto f = io::split_csv(row);
  ASSERT_EQ(f.size(), 7u);
  EXPECT_EQ(f[2] + "\n", io::read_text(direct / "config.hash"));
  const auto t = eval::embed(direct / "ckpt_00000004", io::read_manifest(data));
  const auto cfg = config::load_file(direct / "config.json", config::RunConfig{});
  EXPECT_NEAR(std::stod(f[3]), eval::run_protocol(t, cfg.protocol_spec()).accuracy, 1e-8);
}

TEST(Cli, GridRowsAndEmptyGrid) {
  EXPECT_EQ(cli::expand_grid({cli::parse_grid_axis("n_selected=16,32,48")}).size(), 3u);
  EXPECT_EQ(cli::expand_grid({cli::parse_grid_axis("window_size_s=90,120,150"), cli::parse_grid_axis("n_selected=16,32")})
                .size(),
            6u);
  EXPECT_THROW(cli::expand_grid({}), InvalidArgument);
  EXPECT_THROW(cli::parse_grid_axis("n_selected="), InvalidArgument);
  EXPECT_THROW(cli::parse_grid_axis("bogus=1,2"), InvalidArgument);
}
