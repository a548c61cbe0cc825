#include <gtest/gtest.h>

#include <sstream>

#include "cli_support.hpp"
#include "krlab/experiments.hpp"

namespace krlab {
namespace {

using testing::run_cli;
using testing::scratch_dir;
namespace fs = std::filesystem;

TEST(Experiments, NamesRoundTrip) {
  for (auto id : {ExperimentId::kScaling, ExperimentId::kRnnVsTransformer, ExperimentId::kNtkConvergence,
                  ExperimentId::kGradcheck})
    EXPECT_EQ(parse_experiment(experiment_name(id)), id);
  EXPECT_THROW(parse_experiment("bogus"), ConfigError);
}

TEST(Presets, PaperAndDeskValues) {
  const auto p61 = preset_spec(ExperimentId::kScaling);
  EXPECT_EQ(p61.preset, "paper-6.1");
  EXPECT_EQ(p61.pool, 8192);
  EXPECT_EQ(p61.d, 8);
  EXPECT_EQ(p61.T, 16);
  EXPECT_EQ(p61.n, 5000);
  EXPECT_EQ(p61.tau, 4000);
  EXPECT_EQ(p61.seeds, 10);
  EXPECT_EQ(p61.widths, (std::vector<int>{8, 16, 64, 128, 256}));
  EXPECT_EQ(p61.nu.c, 3.0);
  EXPECT_EQ(p61.activation, "tanh");
  EXPECT_DOUBLE_EQ(p61.resolved_eta(), 1.0 / std::sqrt(4000.0));

  const auto d61 = preset_spec(ExperimentId::kScaling, "desk-6.1");
  EXPECT_EQ(d61.d, 4);
  EXPECT_EQ(d61.T, 8);
  EXPECT_EQ(d61.n, 200);
  EXPECT_EQ(d61.pool, 1024);
  EXPECT_EQ(d61.tau, 500);
  EXPECT_EQ(d61.seeds, 5);
  EXPECT_EQ(d61.widths, (std::vector<int>{8, 16, 32, 64, 128}));

  const auto p62 = preset_spec(ExperimentId::kRnnVsTransformer);
  EXPECT_EQ(p62.n, 5000);
  EXPECT_EQ(p62.alpha, 0.9);
  EXPECT_EQ(p62.noise_var, 0.1);
  EXPECT_EQ(p62.seeds, 20);
  EXPECT_EQ(p62.tau, 2000);
  EXPECT_EQ(p62.width, 64);

  const auto d62 = preset_spec(ExperimentId::kRnnVsTransformer, "desk-6.2");
  EXPECT_EQ(d62.lags, (std::vector<int>{1, 4, 16, 32}));
  EXPECT_EQ(d62.n, 1000);
  EXPECT_EQ(d62.tau, 500);
  EXPECT_EQ(d62.seeds, 8);
  EXPECT_EQ(d62.gamma, 1.5);

  EXPECT_THROW(preset_spec(ExperimentId::kGradcheck, "desk-6.1"), ConfigError);
}

TEST(Config, ParseAndApply) {
  std::istringstream in("# comment\n\n  tau = 12 \nwidths=2,4\nnu=1,2,3\n");
  auto spec = preset_spec(ExperimentId::kScaling, "smoke");
  for (const auto& [k, v] : parse_config(in)) apply_setting(spec, k, v);
  EXPECT_EQ(spec.tau, 12);
  EXPECT_EQ(spec.widths, (std::vector<int>{2, 4}));
  EXPECT_EQ(spec.nu.u, 2.0);

  std::istringstream bad("tau\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  EXPECT_THROW(apply_setting(spec, "no_such_key", "1"), ConfigError);
  EXPECT_THROW(apply_setting(spec, "tau", "ten"), ConfigError);
  EXPECT_THROW(apply_setting(spec, "widths", "4,x"), ConfigError);
  EXPECT_THROW(apply_setting(spec, "boundary", "sideways"), ConfigError);
}

TEST(Config, ManifestRoundTrip) {
  for (auto id : {ExperimentId::kScaling, ExperimentId::kRnnVsTransformer, ExperimentId::kNtkConvergence,
                  ExperimentId::kGradcheck}) {
    auto spec = preset_spec(id);
    apply_setting(spec, "eta", "0.1234567890123");
    apply_setting(spec, "master_seed", "18446744073709551615");
    const std::string text = manifest_text(spec);
    std::istringstream in(text);
    auto back = preset_spec(id);
    for (const auto& [k, v] : parse_config(in)) {
      if (k == "version" || k == "experiment" || k == "preset") continue;
      apply_setting(back, k, v);
    }
    EXPECT_EQ(manifest_text(back), text);
  }
}

TEST(Config, Validation) {
  auto s = preset_spec(ExperimentId::kScaling, "smoke");
  EXPECT_NO_THROW(validate_spec(s));
  s.seeds = 1;
  EXPECT_THROW(validate_spec(s), ConfigError);
  s = preset_spec(ExperimentId::kScaling, "smoke");
  s.widths = {3, 8};
  EXPECT_THROW(validate_spec(s), ConfigError);
  s.widths = {};
  EXPECT_THROW(validate_spec(s), ConfigError);
  auto r = preset_spec(ExperimentId::kRnnVsTransformer, "smoke");
  r.lags = {};
  EXPECT_THROW(validate_spec(r), ConfigError);
  r.lags = {1};
  r.alpha = 1.5;
  EXPECT_THROW(validate_spec(r), ConfigError);
  auto n = preset_spec(ExperimentId::kNtkConvergence, "smoke");
  n.mc_samples = 1;
  EXPECT_THROW(validate_spec(n), ConfigError);
}

TEST(Cli, InvalidConfigurationExitsTwo) {
  const auto dir = scratch_dir("cli_invalid");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(run_cli("bogus" + out), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("scaling --preset nope" + out), 2);
  EXPECT_EQ(run_cli("scaling --preset smoke --widths 3,5" + out), 2);
  EXPECT_EQ(run_cli("scaling --preset smoke --seeds 1" + out), 2);
  EXPECT_EQ(run_cli("scaling --preset smoke --tau 0" + out), 2);
  EXPECT_EQ(run_cli("scaling --preset smoke --no-such-flag" + out), 2);
  EXPECT_EQ(run_cli("rnn-vs-transformer --preset smoke --set alpha=2" + out), 2);
  EXPECT_EQ(run_cli("scaling --preset smoke --config " + (dir / "missing.cfg").string() + out), 2);

  std::ofstream(dir / "ntk.cfg") << "experiment=ntk-convergence\n";
  EXPECT_EQ(run_cli("scaling --config " + (dir / "ntk.cfg").string() + out), 2);
}

TEST(Cli, GradcheckPassesAndMutationFails) {
  const auto dir = scratch_dir("cli_gradcheck");
  EXPECT_EQ(run_cli("gradcheck --out " + dir.string()), 0);
  const std::string report = testing::slurp(dir / "gradcheck.csv");
  for (const char* block : {"tf.c", "tf.U", "tf.W", "rnn.U", "rnn.w", "rnn.c"})
    EXPECT_NE(report.find(block), std::string::npos) << block;
  EXPECT_EQ(run_cli("gradcheck --set gradcheck_perturbation=1e-3 --out " + dir.string()), 1);
}

TEST(Cli, EnvironmentOverridesOut) {
  const auto flag_dir = scratch_dir("cli_env_flag");
  const auto env_dir = scratch_dir("cli_env_target");
  EXPECT_EQ(run_cli("gradcheck --set instances=3 --out " + flag_dir.string(), "KRLAB_OUT=" + env_dir.string()), 0);
  EXPECT_TRUE(fs::exists(env_dir / "gradcheck.csv"));
  EXPECT_FALSE(fs::exists(flag_dir / "gradcheck.csv"));
}

TEST(Cli, FlagsOverrideConfigFile) {
  const auto dir = scratch_dir("cli_precedence");
  std::ofstream(dir / "run.cfg") << "preset=smoke\ntau=7\nwidths=4,8\n";
  EXPECT_EQ(run_cli("scaling --config " + (dir / "run.cfg").string() + " --tau 5 --out " + (dir / "o").string()), 0);
  const std::string manifest = testing::slurp(dir / "o" / "manifest.txt");
  EXPECT_NE(manifest.find("\ntau=5\n"), std::string::npos);
  EXPECT_NE(manifest.find("\nwidths=4,8\n"), std::string::npos);
  EXPECT_NE(manifest.find("\npreset=smoke\n"), std::string::npos);
}

TEST(Cli, SmokeScalingOutputsAndManifestReplay) {
  const auto dir = scratch_dir("cli_replay");
  const auto first = dir / "first";
  const auto second = dir / "second";
  ASSERT_EQ(run_cli("scaling --preset smoke --out " + first.string()), 0);
  for (const char* f : {"summary.csv", "linearization.csv", "approximation.csv", "min_loss.csv", "manifest.txt",
                        "run_scaling_4_0.csv", "run_scaling_16_1.csv"})
    EXPECT_TRUE(fs::exists(first / f)) << f;
  EXPECT_EQ(testing::slurp(first / "run_scaling_4_0.csv").substr(0, 24), "step,loss,attn_grad_norm");
  ASSERT_EQ(run_cli("scaling --config " + (first / "manifest.txt").string() + " --out " + second.string()), 0);
  const auto a = testing::csv_files(first);
  const auto b = testing::csv_files(second);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace krlab
