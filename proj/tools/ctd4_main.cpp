// ctd4: train, evaluate and ablate continuous distributional actor-critic agents.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctd4/allocator.hpp"
#include "ctd4/config.hpp"
#include "ctd4/envs.hpp"
#include "ctd4/harness.hpp"

namespace fs = std::filesystem;
using namespace ctd4;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> env;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> seeds;
  std::optional<std::size_t> steps;
  std::optional<std::string> fusion;
  std::optional<std::size_t> critics;
  std::optional<std::string> out;
  std::optional<std::size_t> eval_interval;
  std::optional<std::size_t> eval_episodes;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "Flat JSON config file");
  app->add_option("--env", f.env, "pendulum_swingup | cartpole_swingup | const_probe");
  app->add_option("--seed", f.seed, "Single run seed");
  app->add_option("--seeds", f.seeds, "Comma-separated run seeds");
  app->add_option("--steps", f.steps, "Total environment steps");
  app->add_option("--fusion", f.fusion, "kalman | min | average");
  app->add_option("--critics", f.critics, "Ensemble size N");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--eval-interval", f.eval_interval, "Steps between evaluations");
  app->add_option("--eval-episodes", f.eval_episodes, "Episodes per evaluation");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (f.config) c = load_run_config(*f.config, c);
  if (f.env) c.env_id = *f.env;
  if (f.seeds) c.seeds = parse_seed_list(*f.seeds);
  if (f.seed) c.seeds = {*f.seed};
  if (f.steps) c.total_steps = *f.steps;
  if (f.fusion) c.agent.fusion = parse_fusion_strategy(*f.fusion);
  if (f.critics) c.agent.num_critics = *f.critics;
  if (f.out) c.out_dir = *f.out;
  if (f.eval_interval) c.eval_interval = *f.eval_interval;
  if (f.eval_episodes) c.eval_episodes = *f.eval_episodes;
  c.validate();
  return c;
}

// Config for a saved checkpoint: explicit --config, else the run's own config.json.
RunConfig checkpoint_config(const CommonFlags& f, const fs::path& checkpoint) {
  CommonFlags g = f;
  if (!g.config) {
    const fs::path sibling = checkpoint.parent_path() / "config.json";
    if (fs::exists(sibling)) g.config = sibling.string();
  }
  return resolve(g);
}

void print_runs(const std::vector<SweepRun>& runs) {
  for (const auto& r : runs) {
    std::printf("%s seed=%llu final_eval_mean=%.4f wall_clock=%.1fs dir=%s\n", r.label.c_str(),
                static_cast<unsigned long long>(r.seed), r.result.final_eval_mean(),
                r.result.wall_clock_seconds, r.result.run_dir.string().c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  ctd4::tune_allocator();
  CLI::App app{"ctd4 - continuous distributional actor-critic with Kalman-fused critic ensembles"};
  app.require_subcommand(1);

  std::size_t jobs = 1;
  bool resume = false;

  CommonFlags train_f;
  auto* train = app.add_subcommand("train", "Train one agent per seed into <out>/seed_<s>/");
  add_common(train, train_f);
  train->add_option("--jobs", jobs, "Seeds trained in parallel");
  train->add_flag("--resume", resume, "Skip runs already finished with the same config");

  CommonFlags eval_f;
  std::string eval_ckpt;
  std::size_t episodes = 10;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with the deterministic policy");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Episodes");

  CommonFlags fusion_f;
  auto* fusion = app.add_subcommand("ablate-fusion", "Same seeds under kalman, min and average fusion");
  add_common(fusion, fusion_f);
  fusion->add_option("--jobs", jobs, "Runs in parallel");
  fusion->add_flag("--resume", resume, "Skip runs already finished with the same config");

  CommonFlags ens_f;
  std::vector<std::size_t> sizes = {2, 3, 5, 10};
  auto* ens = app.add_subcommand("ablate-ensemble", "Same seeds under several ensemble sizes");
  add_common(ens, ens_f);
  ens->add_option("--sizes", sizes, "Ensemble sizes")->delimiter(',');
  ens->add_option("--jobs", jobs, "Runs in parallel");
  ens->add_flag("--resume", resume, "Skip runs already finished with the same config");

  CommonFlags bias_f;
  std::string bias_ckpt;
  std::size_t rollouts = 10;
  std::string report = "bias_report.csv";
  auto* bias = app.add_subcommand("bias", "Fused critic estimate vs Monte-Carlo return");
  add_common(bias, bias_f);
  bias->add_option("--checkpoint", bias_ckpt, "Checkpoint file")->required();
  bias->add_option("--rollouts", rollouts, "Start states");
  bias->add_option("--report", report, "Report CSV path");

  std::vector<std::string> plot_inputs;
  std::string plot_out = "curve.svg";
  auto* plot = app.add_subcommand("plot", "SVG of mean eval return with a +-1 std band");
  plot->add_option("csvs", plot_inputs, "Metrics CSV files")->required();
  plot->add_option("--out", plot_out, "Output SVG");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      print_runs(train_seeds(resolve(train_f), {jobs, resume}));
    } else if (*eval) {
      const RunConfig c = checkpoint_config(eval_f, eval_ckpt);
      auto env = make_env(c.env_id);
      const Ctd4Agent agent =
          Ctd4Agent::load_checkpoint(eval_ckpt, c.agent, env->obs_dim(), env->action_dim());
      const EvalResult r = evaluate(agent, *env, episodes, c.seeds.front());
      std::printf("mean_return,std_return\n%.17g,%.17g\n", r.mean_return, r.std_return);
    } else if (*fusion) {
      print_runs(ablate_fusion(resolve(fusion_f), {jobs, resume}));
    } else if (*ens) {
      print_runs(ablate_ensemble(resolve(ens_f), sizes, {jobs, resume}));
    } else if (*bias) {
      const RunConfig c = checkpoint_config(bias_f, bias_ckpt);
      auto env = make_env(c.env_id);
      const Ctd4Agent agent =
          Ctd4Agent::load_checkpoint(bias_ckpt, c.agent, env->obs_dim(), env->action_dim());
      const BiasReport r = bias_diagnostic(agent, *env, rollouts, c.seeds.front(), report);
      std::printf("rollouts=%zu mean_bias=%.6f report=%s\n", r.rows.size(), r.mean_bias,
                  report.c_str());
    } else if (*plot) {
      std::vector<fs::path> paths(plot_inputs.begin(), plot_inputs.end());
      plot_metrics(paths, plot_out);
      std::printf("wrote %s\n", plot_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ctd4: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
