#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctd4/agent.hpp"
#include "ctd4/config.hpp"
#include "ctd4/envs.hpp"

namespace ctd4 {

inline constexpr std::string_view kMetricsHeader =
    "step,eval_mean_return,eval_std_return,critic_loss,actor_loss,explore_noise_std,"
    "wall_clock_seconds";

// Losses are means over the training steps since the previous row (NaN when
// none happened).
struct MetricsRow {
  std::uint64_t step = 0;
  double eval_mean_return = 0.0;
  double eval_std_return = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double explore_noise_std = 0.0;
  double wall_clock_seconds = 0.0;
};

std::string format_metrics_row(const MetricsRow& row);
// Throws std::runtime_error if the header is not exactly kMetricsHeader.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;  // population std across episodes
};

// Deterministic-policy episodes; episode j resets from a seed derived from
// (seed, j). The agent is only read.
EvalResult evaluate(const Ctd4Agent& agent, Env& env, std::size_t episodes, std::uint64_t seed);

struct RunResult {
  std::vector<MetricsRow> rows;
  std::filesystem::path run_dir;
  double wall_clock_seconds = 0.0;
  double final_eval_mean() const;
};

// Writes run_dir/{config.json, metrics.csv, checkpoint.ctd4, run.json}.
// With resume = true a directory holding a finished run of the identical
// resolved config is read back instead of retrained.
RunResult run_training(const RunConfig& config, std::uint64_t seed,
                       const std::filesystem::path& run_dir, bool resume = false);

struct SweepOptions {
  std::size_t jobs = 1;
  bool resume = false;
};

struct SweepRun {
  std::string label;  // fusion name or critic count
  std::uint64_t seed = 0;
  RunResult result;
};

// out_dir/fusion_<name>/seed_<s>/ for kalman, min, average, plus
// out_dir/fusion_summary.csv (strategy,seed,final_eval_mean).
std::vector<SweepRun> ablate_fusion(const RunConfig& config, const SweepOptions& opts = {});

// out_dir/critics_<N>/seed_<s>/ per size, plus out_dir/ensemble_summary.csv
// (num_critics,seed,final_eval_mean,wall_clock_seconds).
std::vector<SweepRun> ablate_ensemble(const RunConfig& config, std::span<const std::size_t> sizes,
                                      const SweepOptions& opts = {});

// Runs each seed into out_dir/seed_<s>/.
std::vector<SweepRun> train_seeds(const RunConfig& config, const SweepOptions& opts = {});

struct BiasRow {
  std::size_t rollout = 0;
  double fused_mean = 0.0;
  double mc_return = 0.0;
  double bias = 0.0;
};

struct BiasReport {
  std::vector<BiasRow> rows;
  double mean_bias = 0.0;  // NaN without rollouts
};

// Fused critic mean at (s0, pi(s0)) against the discounted Monte-Carlo
// return of the deterministic policy from s0. Writes `report_csv` when
// non-empty: rollout,fused_mean,mc_return,bias rows, then a "mean" row.
BiasReport bias_diagnostic(const Ctd4Agent& agent, Env& env, std::size_t rollouts,
                           std::uint64_t seed, const std::filesystem::path& report_csv = {});

// Mean eval return against step across the given runs with a +-1 std band.
void plot_metrics(std::span<const std::filesystem::path> csvs, const std::filesystem::path& out_svg);

}  // namespace ctd4
