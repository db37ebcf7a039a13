#ifndef POLYMORPH_CLI_HPP_
#define POLYMORPH_CLI_HPP_

// Command-line runner: train / eval / compare / oracle.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "polymorph/config.hpp"
#include "polymorph/experiments.hpp"
#include "polymorph/metrics.hpp"
#include "polymorph/oracles.hpp"
#include "polymorph/trainer.hpp"

namespace polymorph {

namespace cli_detail {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string arch;
  std::optional<std::size_t> agents;
  std::optional<std::size_t> episodes;
};

inline TrainConfig resolve(const Overrides& o, TrainConfig base) {
  TrainConfig c = o.config.empty() ? std::move(base) : load_config(o.config, std::move(base));
  if (o.seed) c.seed = *o.seed;
  if (!o.arch.empty()) c.architecture = critic_kind_from_string(o.arch);
  if (o.agents) c.env.n_agents = *o.agents;
  if (o.episodes) c.episodes = *o.episodes;
  c.env.ep_length = c.ep_length;
  c.validate();
  return c;
}

inline int run_train(const Overrides& o, const std::string& out, std::ostream& os) {
  const TrainConfig cfg = resolve(o, TrainConfig{});
  Trainer trainer(cfg);
  const auto history = trainer.train(out);
  const RunSummary s = summarize_run(cfg, history, trainer.update_index());
  os << "trained " << to_string(cfg.architecture) << " n=" << cfg.env.n_agents
     << " episodes=" << s.episodes << " updates=" << s.updates
     << " final_reward=" << s.final_reward << " final_similarity="
     << s.final_similarity << "\nmetrics: " << (std::filesystem::path(out) / "metrics.csv").string()
     << '\n';
  return 0;
}

inline int run_eval(const std::string& checkpoint, const std::string& config,
                    std::size_t episodes, std::uint64_t seed, bool stochastic,
                    const std::string& out, std::ostream& os) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const GaussianPolicy policy = GaussianPolicy::from_checkpoint(ckpt);
  TrainConfig cfg;
  if (!config.empty()) {
    cfg = load_config(config);
  } else if (ckpt.meta.contains("config")) {
    cfg = config_from_json(ckpt.meta.at("config"));
  } else {
    throw ConfigError("config: checkpoint carries no config; pass --config");
  }
  QuadEnv env(cfg.env);
  if (env.merged_dim() != policy.state_dim() || env.dim_a0() != policy.dim_a0()) {
    throw ConfigError("n_agents/control: config does not match the checkpoint");
  }
  std::filesystem::create_directories(out);
  TraceWriter trace(std::filesystem::path(out) / "traces.jsonl");
  MetricsCsvWriter writer(std::filesystem::path(out) / "metrics.csv", cfg.env.n_agents);
  Rng rng(seed);
  for (std::size_t e = 0; e < episodes; ++e) {
    MetricsRow row;
    row.episode = run_policy_episode(policy, env, rng, !stochastic, e, &trace);
    row.critic_losses.assign(cfg.env.n_agents, 0.0);
    writer.write(row);
    os << "episode " << e << " reward=" << row.episode.aggregated_reward
       << " length=" << row.episode.episode_length
       << " similarity=" << row.episode.similarity << '\n';
  }
  return 0;
}

inline int run_compare(const Overrides& o, std::size_t seeds, std::size_t threads,
                       const std::string& out, std::ostream& os) {
  const std::size_t agents = o.agents.value_or(2);
  const std::size_t episodes = o.episodes.value_or(300);
  TrainConfig base = desk_scale_config(agents, CriticKind::kMulti, 0, episodes);
  Overrides no_arch = o;
  no_arch.arch.clear();
  base = resolve(no_arch, base);
  const std::uint64_t first_seed = o.seed.value_or(0);
  std::vector<std::uint64_t> seed_list;
  for (std::size_t s = 0; s < seeds; ++s) seed_list.push_back(first_seed + s);
  std::vector<CriticKind> archs = {CriticKind::kSingle, CriticKind::kMulti,
                                   CriticKind::kHybrid};
  if (!o.arch.empty()) archs = {critic_kind_from_string(o.arch)};
  const auto runs = run_sweep(base, archs, seed_list, out, threads);
  const auto table = summarize_by_architecture(runs);
  write_summary_tables(out, base.env.n_agents, table);
  os << "agents method    reward_mean reward_sigma similarity_mean episodes updates\n";
  for (const auto& r : table) {
    os << std::setw(6) << base.env.n_agents << ' ' << std::setw(9) << std::left
       << to_string(r.architecture) << std::right << ' ' << std::setw(11)
       << r.reward.mean << ' ' << std::setw(12) << r.reward.sigma << ' '
       << std::setw(15) << r.similarity.mean << ' ' << std::setw(8) << r.episodes
       << ' ' << r.updates << '\n';
  }
  return 0;
}

inline int run_oracle(std::ostream& os) {
  os << std::setprecision(12);
  os << "similarity r_hat=(1,0): " << oracle::similarity_of_mean({1.0, 0.0}) << '\n';
  os << "similarity r_hat=(1,1,1): " << oracle::similarity_of_mean({1.0, 1.0, 1.0}) << '\n';
  os << "free fall z(1s) from 10m, closed form: "
     << oracle::free_fall_height(10.0, 9.81, 1.0) << '\n';
  {
    double z = 10.0, v = 0.0;
    for (int k = 0; k < 100; ++k) {
      v -= 9.81 * 0.01;
      z += v * 0.01;
    }
    os << "free fall z(1s) from 10m, semi-implicit dt=0.01: " << z << '\n';
  }
  const auto g = oracle::brute_force_returns({{1.0}, {1.0}, {1.0}}, 0.5, {0.0});
  os << "returns [1,1,1] gamma=0.5 terminal: " << g[0][0] << ' ' << g[1][0] << ' '
     << g[2][0] << '\n';
  os << "log N(0 | 0, 1): " << oracle::normal_log_density(0.0, 0.0, 1.0) << '\n';
  os << "log N(1 | 1, 1) x2 components: " << 2.0 * oracle::normal_log_density(1.0, 1.0, 1.0)
     << '\n';
  // Gradient check on a random 3 -> 5 -> 1 tanh net.
  Rng rng(7);
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5};
  spec.output_dim = 1;
  Mlp net(spec, rng);
  Matrix x = Matrix::Random(4, 3);
  auto loss = [&]() { return net.predict(x).array().square().sum() * 0.5; };
  net.zero_grad();
  const Matrix y = net.forward(x);
  net.backward(y);
  std::vector<double*> ptrs;
  std::vector<double> analytic;
  for (ParamTensor* p : net.parameters()) {
    for (std::size_t k = 0; k < p->size(); ++k) {
      ptrs.push_back(&p->values[k]);
      analytic.push_back(p->grad[k]);
    }
  }
  const auto numeric = oracle::central_difference(loss, ptrs, 1e-5);
  double worst = 0.0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    worst = std::max(worst, oracle::relative_error(analytic[k], numeric[k]));
  }
  os << "gradient check 3-5-1 tanh, max relative error: " << worst << '\n';
  return 0;
}

}  // namespace cli_detail

inline int cli_run(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Multi-critic policy gradient toolkit for multi-drone coordination",
               "polymorph"};
  app.require_subcommand(1);

  cli_detail::Overrides train_o;
  std::string train_out = "runs/train";
  auto* train = app.add_subcommand("train", "Train a policy from a config file");
  train->add_option("--config", train_o.config, "Flat JSON config file");
  train->add_option("--seed", train_o.seed, "Random seed");
  train->add_option("--arch", train_o.arch, "Critic architecture")
      ->check(CLI::IsMember({"single", "multi", "hybrid"}));
  train->add_option("--agents", train_o.agents, "Number of drones");
  train->add_option("--episodes", train_o.episodes, "Episode budget");
  train->add_option("--out", train_out, "Output directory");

  std::string eval_ckpt, eval_config, eval_out = "runs/eval";
  std::size_t eval_episodes = 3;
  std::uint64_t eval_seed = 0;
  bool eval_stochastic = false;
  auto* eval = app.add_subcommand("eval", "Run a trained policy and export traces");
  eval->add_option("--checkpoint", eval_ckpt, "Actor checkpoint")->required();
  eval->add_option("--config", eval_config, "Config (defaults to the checkpoint's)");
  eval->add_option("--episodes", eval_episodes, "Episodes to run");
  eval->add_option("--seed", eval_seed, "Random seed");
  eval->add_flag("--stochastic", eval_stochastic, "Sample actions instead of using the mean");
  eval->add_option("--out", eval_out, "Output directory");

  cli_detail::Overrides cmp_o;
  std::size_t cmp_seeds = 3;
  std::size_t cmp_threads = 0;
  std::string cmp_out = "runs/compare";
  auto* compare = app.add_subcommand("compare", "Single/multi/hybrid sweep over seeds");
  compare->add_option("--config", cmp_o.config, "Flat JSON config applied to every run");
  compare->add_option("--seed", cmp_o.seed, "First seed");
  compare->add_option("--seeds", cmp_seeds, "Seeds per architecture");
  compare->add_option("--arch", cmp_o.arch, "Restrict to one architecture")
      ->check(CLI::IsMember({"single", "multi", "hybrid"}));
  compare->add_option("--agents", cmp_o.agents, "Number of drones");
  compare->add_option("--episodes", cmp_o.episodes, "Episodes per run");
  compare->add_option("--threads", cmp_threads, "Worker threads (0 = all cores)");
  compare->add_option("--out", cmp_out, "Output directory");

  auto* oracle = app.add_subcommand("oracle", "Print reference values used by the tests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*train) return cli_detail::run_train(train_o, train_out, out);
    if (*eval) {
      return cli_detail::run_eval(eval_ckpt, eval_config, eval_episodes, eval_seed,
                                  eval_stochastic, eval_out, out);
    }
    if (*compare) return cli_detail::run_compare(cmp_o, cmp_seeds, cmp_threads, cmp_out, out);
    if (*oracle) return cli_detail::run_oracle(out);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace polymorph

#endif  // POLYMORPH_CLI_HPP_
