#include "ctd4/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ctd4/replay.hpp"
#include "ctd4/rng.hpp"

namespace ctd4 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_or_nan(double sum, std::size_t n) { return n == 0 ? kNaN : sum / static_cast<double>(n); }

RunConfig resolved_config(const RunConfig& config, std::uint64_t seed, const fs::path& run_dir) {
  RunConfig c = config;
  c.seeds = {seed};
  c.out_dir = run_dir;
  return c;
}

std::optional<RunResult> try_resume(const RunConfig& resolved, const fs::path& run_dir) {
  const fs::path info_path = run_dir / "run.json";
  const fs::path config_path = run_dir / "config.json";
  if (!fs::exists(info_path) || !fs::exists(config_path) || !fs::exists(run_dir / "checkpoint.ctd4")) {
    return std::nullopt;
  }
  try {
    std::ifstream cin(config_path);
    json stored;
    cin >> stored;
    if (stored != to_json(resolved)) return std::nullopt;
    std::ifstream iin(info_path);
    json info;
    iin >> info;
    RunResult r;
    r.run_dir = run_dir;
    r.rows = read_metrics_csv(run_dir / "metrics.csv");
    r.wall_clock_seconds = info.at("wall_clock_seconds").get<double>();
    if (r.rows.size() != resolved.total_steps / resolved.eval_interval) return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct Job {
  RunConfig config;
  std::string label;
  std::uint64_t seed;
  fs::path dir;
};

std::vector<SweepRun> run_jobs(const std::vector<Job>& jobs, const SweepOptions& opts) {
  std::vector<SweepRun> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& job = jobs[i];
        out[i] = {job.label, job.seed, run_training(job.config, job.seed, job.dir, opts.resume)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.jobs, jobs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + ',' + fmt_real(r.eval_mean_return) + ',' +
         fmt_real(r.eval_std_return) + ',' + fmt_real(r.critic_loss) + ',' + fmt_real(r.actor_loss) +
         ',' + fmt_real(r.explore_noise_std) + ',' + fmt_real(r.wall_clock_seconds);
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error(path.string() + ": not a metrics CSV (header mismatch)");
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    }
    try {
      rows.push_back({std::stoull(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
                      std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5]),
                      std::stod(cells[6])});
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

EvalResult evaluate(const Ctd4Agent& agent, Env& env, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be positive");
  std::vector<double> returns;
  returns.reserve(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Eigen::VectorXd obs = env.reset(make_stream(seed, "eval_episode", ep)());
    double total = 0.0;
    for (;;) {
      const StepResult sr = env.step(rescale_action(env, agent.act(obs)));
      total += sr.reward;
      obs = sr.observation;
      if (sr.terminated || sr.truncated) break;
    }
    returns.push_back(total);
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(episodes);
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  return {mean, std::sqrt(var / static_cast<double>(episodes))};
}

double RunResult::final_eval_mean() const { return rows.empty() ? kNaN : rows.back().eval_mean_return; }

RunResult run_training(const RunConfig& config, std::uint64_t seed, const fs::path& run_dir,
                       bool resume) {
  config.validate();
  const RunConfig resolved = resolved_config(config, seed, run_dir);
  auto env = make_env(config.env_id);
  auto eval_env = make_env(config.env_id);
  if (resume) {
    if (auto done = try_resume(resolved, run_dir)) return *done;
  }

  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec || !fs::is_directory(run_dir)) {
    throw std::runtime_error("cannot create output directory " + run_dir.string());
  }
  fs::remove(run_dir / "run.json", ec);
  save_run_config(resolved, run_dir / "config.json");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Rng init_rng = make_stream(seed, "agent_init");
  Rng explore_rng = make_stream(seed, "exploration");
  Rng replay_rng = make_stream(seed, "replay_sampling");
  Rng target_noise_rng = make_stream(seed, "target_noise");
  Rng env_rng = make_stream(seed, "env");
  const std::uint64_t eval_seed = config.eval_seed.value_or(seed);

  Ctd4Agent agent(config.agent, env->obs_dim(), env->action_dim(), init_rng);
  ReplayBuffer replay(config.replay_capacity, env->obs_dim(), env->action_dim());

  std::ofstream csv = open_for_write(run_dir / "metrics.csv");
  csv << kMetricsHeader << '\n' << std::flush;

  RunResult result;
  result.run_dir = run_dir;
  double critic_sum = 0.0;
  double actor_sum = 0.0;
  std::size_t critic_n = 0;
  std::size_t actor_n = 0;

  Eigen::VectorXd obs = env->reset(env_rng());
  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    const Eigen::VectorXd action = agent.select_action(obs, true, explore_rng);
    const StepResult sr = env->step(rescale_action(*env, action));
    replay.push({obs, action, sr.reward, sr.observation, sr.terminated});
    obs = sr.observation;
    if (sr.terminated || sr.truncated) obs = env->reset(env_rng());

    if (step >= config.agent.warmup_steps) {
      const TrainStepResult tr = agent.train_step(replay, replay_rng, target_noise_rng);
      critic_sum += tr.critic_loss;
      ++critic_n;
      if (tr.actor_loss) {
        actor_sum += *tr.actor_loss;
        ++actor_n;
      }
    }

    if (step % config.eval_interval == 0) {
      const std::uint64_t point = step / config.eval_interval;
      const EvalResult ev =
          evaluate(agent, *eval_env, config.eval_episodes, make_stream(eval_seed, "eval", point)());
      MetricsRow row{step,
                     ev.mean_return,
                     ev.std_return,
                     mean_or_nan(critic_sum, critic_n),
                     mean_or_nan(actor_sum, actor_n),
                     agent.explore_noise_std(),
                     config.record_wall_clock ? elapsed() : 0.0};
      csv << format_metrics_row(row) << '\n' << std::flush;
      result.rows.push_back(row);
      critic_sum = actor_sum = 0.0;
      critic_n = actor_n = 0;
    }
  }
  agent.save_checkpoint(run_dir / "checkpoint.ctd4");
  result.wall_clock_seconds = elapsed();

  std::ofstream info = open_for_write(run_dir / "run.json");
  info << json{{"wall_clock_seconds", result.wall_clock_seconds},
               {"final_eval_mean", result.final_eval_mean()}}
              .dump(2)
       << '\n';
  return result;
}

std::vector<SweepRun> train_seeds(const RunConfig& config, const SweepOptions& opts) {
  config.validate();
  std::vector<Job> jobs;
  for (std::uint64_t seed : config.seeds) {
    jobs.push_back({config, std::to_string(seed), seed, config.out_dir / ("seed_" + std::to_string(seed))});
  }
  return run_jobs(jobs, opts);
}

std::vector<SweepRun> ablate_fusion(const RunConfig& config, const SweepOptions& opts) {
  config.validate();
  std::vector<Job> jobs;
  for (FusionStrategy s : {FusionStrategy::Kalman, FusionStrategy::MinMean, FusionStrategy::Average}) {
    RunConfig variant = config;
    variant.agent.fusion = s;
    const std::string name(to_string(s));
    for (std::uint64_t seed : config.seeds) {
      jobs.push_back({variant, name, seed,
                      config.out_dir / ("fusion_" + name) / ("seed_" + std::to_string(seed))});
    }
  }
  fs::create_directories(config.out_dir);
  save_run_config(config, config.out_dir / "config.json");
  auto runs = run_jobs(jobs, opts);

  std::ofstream summary = open_for_write(config.out_dir / "fusion_summary.csv");
  summary << "strategy,seed,final_eval_mean\n";
  for (const auto& r : runs) {
    summary << r.label << ',' << r.seed << ',' << fmt_real(r.result.final_eval_mean()) << '\n';
  }
  return runs;
}

std::vector<SweepRun> ablate_ensemble(const RunConfig& config, std::span<const std::size_t> sizes,
                                      const SweepOptions& opts) {
  config.validate();
  if (sizes.empty()) throw std::invalid_argument("ablate_ensemble: no ensemble sizes given");
  std::vector<Job> jobs;
  for (std::size_t n : sizes) {
    RunConfig variant = config;
    variant.agent.num_critics = n;
    variant.agent.validate();
    for (std::uint64_t seed : config.seeds) {
      jobs.push_back({variant, std::to_string(n), seed,
                      config.out_dir / ("critics_" + std::to_string(n)) /
                          ("seed_" + std::to_string(seed))});
    }
  }
  fs::create_directories(config.out_dir);
  save_run_config(config, config.out_dir / "config.json");
  auto runs = run_jobs(jobs, opts);

  std::ofstream summary = open_for_write(config.out_dir / "ensemble_summary.csv");
  summary << "num_critics,seed,final_eval_mean,wall_clock_seconds\n";
  for (const auto& r : runs) {
    summary << r.label << ',' << r.seed << ',' << fmt_real(r.result.final_eval_mean()) << ','
            << fmt_real(r.result.wall_clock_seconds) << '\n';
  }
  return runs;
}

BiasReport bias_diagnostic(const Ctd4Agent& agent, Env& env, std::size_t rollouts,
                           std::uint64_t seed, const fs::path& report_csv) {
  const double gamma = agent.config().gamma;
  BiasReport report;
  double bias_sum = 0.0;
  for (std::size_t r = 0; r < rollouts; ++r) {
    Eigen::VectorXd obs = env.reset(make_stream(seed, "bias_rollout", r)());
    const double fused = agent.fused_value(obs, agent.act(obs)).mean();
    double mc = 0.0;
    double discount = 1.0;
    for (;;) {
      const StepResult sr = env.step(rescale_action(env, agent.act(obs)));
      mc += discount * sr.reward;
      discount *= gamma;
      obs = sr.observation;
      if (sr.terminated || sr.truncated) break;
    }
    report.rows.push_back({r, fused, mc, fused - mc});
    bias_sum += fused - mc;
  }
  report.mean_bias = mean_or_nan(bias_sum, rollouts);

  if (!report_csv.empty()) {
    std::ofstream out = open_for_write(report_csv);
    out << "rollout,fused_mean,mc_return,bias\n";
    double fused_sum = 0.0;
    double mc_sum = 0.0;
    for (const auto& row : report.rows) {
      out << row.rollout << ',' << fmt_real(row.fused_mean) << ',' << fmt_real(row.mc_return) << ','
          << fmt_real(row.bias) << '\n';
      fused_sum += row.fused_mean;
      mc_sum += row.mc_return;
    }
    if (rollouts > 0) {
      out << "mean," << fmt_real(mean_or_nan(fused_sum, rollouts)) << ','
          << fmt_real(mean_or_nan(mc_sum, rollouts)) << ',' << fmt_real(report.mean_bias) << '\n';
    }
  }
  return report;
}

}  // namespace ctd4
