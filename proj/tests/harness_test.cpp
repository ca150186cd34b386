#include "ctd4/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "ctd4/config.hpp"

namespace ctd4 {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

RunConfig tiny(const std::string& env = "pendulum_swingup") {
  RunConfig c;
  c.env_id = env;
  c.total_steps = 240;
  c.eval_interval = 80;
  c.eval_episodes = 2;
  c.replay_capacity = 1000;
  c.record_wall_clock = false;
  c.agent.num_critics = 2;
  c.agent.batch_size = 32;
  c.agent.hidden_sizes = {16, 16};
  c.agent.warmup_steps = 40;
  return c;
}

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("ctd4_harness_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(HarnessTest, ZeroStepsWritesHeaderOnlyAndInitialCheckpoint) {
  RunConfig c = tiny();
  c.total_steps = 0;
  const RunResult r = run_training(c, 3, dir_ / "run");
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.csv"), std::string(kMetricsHeader) + "\n");
  const Ctd4Agent loaded = Ctd4Agent::load_checkpoint(dir_ / "run" / "checkpoint.ctd4", c.agent, 3, 1);
  Rng init = make_stream(3, "agent_init");
  EXPECT_TRUE(loaded.bit_equal(Ctd4Agent(c.agent, 3, 1, init)));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "config.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "run.json"));
}

TEST_F(HarnessTest, RowsAtEvalIntervalsWithScheduledNoise) {
  RunConfig c = tiny();
  c.total_steps = 250;
  const RunResult r = run_training(c, 1, dir_ / "run");
  const auto rows = read_metrics_csv(dir_ / "run" / "metrics.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].step, 80 * (i + 1));
    EXPECT_NEAR(rows[i].explore_noise_std, std::max(0.01, 0.1 * std::pow(0.9999, rows[i].step)), 1e-12);
    EXPECT_TRUE(std::isfinite(rows[i].critic_loss));
    EXPECT_TRUE(std::isfinite(rows[i].actor_loss));
    EXPECT_EQ(rows[i].wall_clock_seconds, 0.0);
    EXPECT_GE(rows[i].eval_mean_return, 0.0);
    EXPECT_LE(rows[i].eval_mean_return, 200.0);
  }
  EXPECT_EQ(r.final_eval_mean(), rows.back().eval_mean_return);
}

TEST_F(HarnessTest, SameSeedGivesByteIdenticalOutputs) {
  const RunConfig c = tiny();
  run_training(c, 7, dir_ / "a");
  run_training(c, 7, dir_ / "b");
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.ctd4"), slurp(dir_ / "b" / "checkpoint.ctd4"));
  run_training(c, 8, dir_ / "c");
  EXPECT_NE(slurp(dir_ / "a" / "checkpoint.ctd4"), slurp(dir_ / "c" / "checkpoint.ctd4"));
}

TEST_F(HarnessTest, EvalSeedDoesNotPerturbTraining) {
  RunConfig c = tiny();
  c.eval_seed = 100;
  const RunResult a = run_training(c, 7, dir_ / "a");
  c.eval_seed = 200;
  const RunResult b = run_training(c, 7, dir_ / "b");
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.ctd4"), slurp(dir_ / "b" / "checkpoint.ctd4"));
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].critic_loss, b.rows[i].critic_loss);
    EXPECT_EQ(a.rows[i].actor_loss, b.rows[i].actor_loss);
  }
}

TEST_F(HarnessTest, ResumeReusesFinishedRunOnlyForSameConfig) {
  RunConfig c = tiny();
  c.record_wall_clock = true;
  const RunResult first = run_training(c, 2, dir_ / "run", true);
  const std::string csv = slurp(dir_ / "run" / "metrics.csv");
  const RunResult again = run_training(c, 2, dir_ / "run", true);
  EXPECT_EQ(again.wall_clock_seconds, first.wall_clock_seconds);
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.csv"), csv);
  c.agent.tau = 0.01;
  const RunResult changed = run_training(c, 2, dir_ / "run", true);
  EXPECT_NE(changed.wall_clock_seconds, first.wall_clock_seconds);
}

TEST(Evaluate, ConstProbeReturnsHundred) {
  ConstProbe env;
  Rng init(1);
  const Ctd4Agent agent(AgentConfig{}, 1, 1, init);
  const EvalResult r = evaluate(agent, env, 5, 9);
  EXPECT_EQ(r.mean_return, 100.0);
  EXPECT_EQ(r.std_return, 0.0);
}

TEST(Evaluate, SingleEpisodeHasZeroStdAndAgentUntouched) {
  PendulumSwingup env;
  AgentConfig cfg;
  cfg.hidden_sizes = {16};
  Rng init(1);
  const Ctd4Agent agent(cfg, 3, 1, init);
  Rng init_copy(1);
  const Ctd4Agent reference(cfg, 3, 1, init_copy);
  EXPECT_EQ(evaluate(agent, env, 1, 4).std_return, 0.0);
  const EvalResult a = evaluate(agent, env, 4, 4);
  const EvalResult b = evaluate(agent, env, 4, 4);
  EXPECT_EQ(a.mean_return, b.mean_return);
  EXPECT_TRUE(agent.bit_equal(reference));
  EXPECT_THROW(evaluate(agent, env, 0, 4), std::invalid_argument);
}

TEST_F(HarnessTest, FusionAblationLayoutAndFactoring) {
  RunConfig c = tiny();
  c.seeds = {1, 2};
  c.out_dir = dir_ / "ablate";
  const auto runs = ablate_fusion(c, {.jobs = 2});
  ASSERT_EQ(runs.size(), 6u);
  for (const char* name : {"kalman", "min", "average"}) {
    for (int seed : {1, 2}) {
      EXPECT_TRUE(fs::exists(c.out_dir / (std::string("fusion_") + name) /
                             ("seed_" + std::to_string(seed)) / "metrics.csv"));
    }
  }
  const auto summary = lines_of(c.out_dir / "fusion_summary.csv");
  ASSERT_EQ(summary.size(), 7u);
  EXPECT_EQ(summary[0], "strategy,seed,final_eval_mean");
  EXPECT_EQ(summary[1].rfind("kalman,1,", 0), 0u);

  run_training(c, 2, dir_ / "standalone");
  EXPECT_EQ(slurp(dir_ / "standalone" / "metrics.csv"),
            slurp(c.out_dir / "fusion_kalman" / "seed_2" / "metrics.csv"));
  RunConfig avg = c;
  avg.agent.fusion = FusionStrategy::Average;
  run_training(avg, 1, dir_ / "standalone_avg");
  EXPECT_EQ(slurp(dir_ / "standalone_avg" / "metrics.csv"),
            slurp(c.out_dir / "fusion_average" / "seed_1" / "metrics.csv"));
}

TEST_F(HarnessTest, EnsembleSweepIncludingSingleCritic) {
  RunConfig c = tiny();
  c.total_steps = 160;
  c.seeds = {4};
  c.out_dir = dir_ / "sweep";
  const std::vector<std::size_t> sizes = {1, 3};
  const auto runs = ablate_ensemble(c, sizes);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].label, "1");
  const auto summary = lines_of(c.out_dir / "ensemble_summary.csv");
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[0], "num_critics,seed,final_eval_mean,wall_clock_seconds");
  for (const auto& r : runs) {
    for (const auto& row : r.result.rows) EXPECT_TRUE(std::isfinite(row.critic_loss));
    EXPECT_GT(r.result.wall_clock_seconds, 0.0);
  }

  // A single size is a plain multi-seed run.
  RunConfig three = c;
  three.agent.num_critics = 3;
  run_training(three, 4, dir_ / "plain");
  EXPECT_EQ(slurp(dir_ / "plain" / "metrics.csv"),
            slurp(c.out_dir / "critics_3" / "seed_4" / "metrics.csv"));
  EXPECT_THROW(ablate_ensemble(c, std::span<const std::size_t>{}), std::invalid_argument);
}

TEST_F(HarnessTest, TrainSeedsWritesOneDirectoryPerSeed) {
  RunConfig c = tiny();
  c.total_steps = 80;
  c.seeds = {5, 6, 7};
  c.out_dir = dir_ / "multi";
  const auto runs = train_seeds(c, {.jobs = 3});
  ASSERT_EQ(runs.size(), 3u);
  for (int s : {5, 6, 7}) EXPECT_TRUE(fs::exists(c.out_dir / ("seed_" + std::to_string(s)) / "run.json"));
}

TEST_F(HarnessTest, BiasDiagnosticOnConstProbe) {
  ConstProbe env;
  AgentConfig cfg;
  cfg.hidden_sizes = {8};
  Rng init(3);
  const Ctd4Agent agent(cfg, 1, 1, init);
  const BiasReport r = bias_diagnostic(agent, env, 4, 11, dir_ / "bias.csv");
  const double truth = (1.0 - std::pow(0.99, 100)) / 0.01;
  ASSERT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.mc_return, 63.39676587267709, 1e-9);
    EXPECT_NEAR(row.mc_return, truth, 1e-9);
    EXPECT_EQ(row.bias, row.fused_mean - row.mc_return);
  }
  const auto lines = lines_of(dir_ / "bias.csv");
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "rollout,fused_mean,mc_return,bias");
  EXPECT_EQ(lines[5].rfind("mean,", 0), 0u);

  const BiasReport empty = bias_diagnostic(agent, env, 0, 11, dir_ / "empty.csv");
  EXPECT_TRUE(empty.rows.empty());
  EXPECT_TRUE(std::isnan(empty.mean_bias));
  EXPECT_EQ(slurp(dir_ / "empty.csv"), "rollout,fused_mean,mc_return,bias\n");
}

// Minimal well-formedness check: one root, balanced and properly nested tags.
bool well_formed_xml(const std::string& text) {
  static const std::regex tag(R"(<(/?)([A-Za-z][\w:-]*)[^>]*?(/?)>)");
  std::vector<std::string> stack;
  int roots = 0;
  std::string body = std::regex_replace(text, std::regex(R"(<\?[^>]*\?>)"), "");
  for (auto it = std::sregex_iterator(body.begin(), body.end(), tag); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const bool closing = m[1].length() > 0;
    const bool self_closing = m[3].length() > 0;
    const std::string name = m[2];
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      if (stack.empty()) ++roots;
      if (!self_closing) stack.push_back(name);
    }
  }
  return stack.empty() && roots == 1;
}

void write_metrics(const fs::path& path, const std::vector<std::pair<std::uint64_t, double>>& points) {
  std::ofstream out(path);
  out << kMetricsHeader << '\n';
  for (auto [step, ret] : points) out << format_metrics_row({step, ret, 0, 0, 0, 0.1, 0}) << '\n';
}

std::string attribute_points(const std::string& svg, const std::string& cls) {
  const std::regex re("class=\"" + cls + "\"[^>]*points=\"([^\"]*)\"");
  std::smatch m;
  return std::regex_search(svg, m, re) ? m[1].str() : std::string("<missing>");
}

TEST_F(HarnessTest, PlotIsWellFormedAndSpansLargestStep) {
  write_metrics(dir_ / "a.csv", {{100, 10}, {200, 50}, {300, 120}});
  write_metrics(dir_ / "b.csv", {{100, 20}, {200, 70}, {300, 180}, {400, 190}});
  const std::vector<fs::path> csvs = {dir_ / "a.csv", dir_ / "b.csv"};
  plot_metrics(csvs, dir_ / "plot.svg");
  const std::string svg = slurp(dir_ / "plot.svg");
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("<text class=\"x-max\""), std::string::npos);
  EXPECT_NE(svg.find(">400</text>"), std::string::npos);
  EXPECT_NE(attribute_points(svg, "band"), "<missing>");
}

TEST_F(HarnessTest, PlotBandCollapsesForSingleCsv) {
  write_metrics(dir_ / "a.csv", {{100, 10}, {200, 50}, {300, 120}});
  const std::vector<fs::path> csvs = {dir_ / "a.csv"};
  plot_metrics(csvs, dir_ / "plot.svg");
  const std::string svg = slurp(dir_ / "plot.svg");
  ASSERT_TRUE(well_formed_xml(svg));
  const std::string mean = attribute_points(svg, "mean");
  const std::string band = attribute_points(svg, "band");
  ASSERT_NE(mean, "<missing>");
  // Upper edge of the band traces the mean line exactly.
  EXPECT_EQ(band.substr(0, mean.size()), mean);
}

TEST_F(HarnessTest, PlotRejectsSchemaMismatch) {
  {
    std::ofstream out(dir_ / "bad.csv");
    out << "step,return\n100,5\n";
  }
  const std::vector<fs::path> csvs = {dir_ / "bad.csv"};
  EXPECT_THROW(plot_metrics(csvs, dir_ / "plot.svg"), std::runtime_error);
  EXPECT_THROW(plot_metrics({}, dir_ / "plot.svg"), std::invalid_argument);
}

TEST(WellFormedChecker, DetectsBrokenNesting) {
  EXPECT_TRUE(well_formed_xml("<a><b/><c></c></a>"));
  EXPECT_FALSE(well_formed_xml("<a><b></a></b>"));
  EXPECT_FALSE(well_formed_xml("<a></a><a></a>"));
  EXPECT_FALSE(well_formed_xml("<a>"));
}

TEST(MetricsCsv, RowRoundTrip) {
  const MetricsRow row{1234, 150.25, 3.5, 0.0123456789012345, -42.0, 0.09, 12.5};
  const std::string line = format_metrics_row(row);
  EXPECT_EQ(line.rfind("1234,150.25,3.5,", 0), 0u);
  const fs::path p = fs::temp_directory_path() / "ctd4_metrics_roundtrip.csv";
  {
    std::ofstream out(p);
    out << kMetricsHeader << '\n' << line << '\n';
  }
  const auto rows = read_metrics_csv(p);
  fs::remove(p);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].critic_loss, row.critic_loss);
  EXPECT_EQ(rows[0].explore_noise_std, row.explore_noise_std);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  RunConfig c;
  c.env_id = "cartpole_swingup";
  c.agent.num_critics = 5;
  c.agent.fusion = FusionStrategy::Average;
  c.agent.fusion_variance = FusionVariance::InverseVariance;
  c.agent.hidden_sizes = {64, 32};
  c.seeds = {1, 2, 3};
  c.eval_seed = 77;
  EXPECT_EQ(merge_json(RunConfig{}, to_json(c)), c);
  EXPECT_EQ(to_json(c).at("fusion"), "average");
  EXPECT_EQ(to_json(c).at("num_critics"), 5);

  const RunConfig partial = merge_json(RunConfig{}, nlohmann::json{{"total_steps", 123}, {"fusion", "min"}});
  EXPECT_EQ(partial.total_steps, 123u);
  EXPECT_EQ(partial.agent.fusion, FusionStrategy::MinMean);
  EXPECT_EQ(partial.agent.num_critics, 3u);

  EXPECT_THROW(merge_json(RunConfig{}, nlohmann::json{{"num_critic", 3}}), std::invalid_argument);
  EXPECT_THROW(merge_json(RunConfig{}, nlohmann::json{{"fusion", "median"}}), std::invalid_argument);
  EXPECT_THROW(merge_json(RunConfig{}, nlohmann::json::array()), std::invalid_argument);
}

TEST(Config, SeedListParsing) {
  EXPECT_EQ(parse_seed_list("1,2,3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(parse_seed_list("42"), (std::vector<std::uint64_t>{42}));
  EXPECT_THROW(parse_seed_list(""), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("1,x"), std::invalid_argument);
}

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.total_steps, 50000u);
  EXPECT_EQ(c.eval_interval, 10000u);
  EXPECT_EQ(c.eval_episodes, 10u);
  EXPECT_NO_THROW(c.validate());
  RunConfig bad;
  bad.eval_interval = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace ctd4
