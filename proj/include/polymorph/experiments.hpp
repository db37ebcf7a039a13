#ifndef POLYMORPH_EXPERIMENTS_HPP_
#define POLYMORPH_EXPERIMENTS_HPP_

// Architecture sweeps: run {single, multi, hybrid} x seeds at a fixed budget
// and reduce each run to first/last-window statistics.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "polymorph/config.hpp"
#include "polymorph/metrics.hpp"
#include "polymorph/trainer.hpp"

namespace polymorph {

struct RunSummary {
  CriticKind architecture = CriticKind::kMulti;
  std::uint64_t seed = 0;
  std::size_t agents = 0;
  std::size_t episodes = 0;
  std::size_t updates = 0;
  double first_reward = 0.0;
  double final_reward = 0.0;
  double first_similarity = 0.0;
  double final_similarity = 0.0;
  double first_length = 0.0;
  double final_length = 0.0;
};

inline constexpr double kWindowFraction = 0.1;

inline RunSummary summarize_run(const TrainConfig& cfg,
                                const std::vector<MetricsRow>& history,
                                std::size_t updates) {
  if (history.empty()) throw ShapeError("run produced no episodes");
  std::vector<double> reward, sim, len;
  for (const MetricsRow& r : history) {
    reward.push_back(r.episode.aggregated_reward);
    sim.push_back(r.episode.similarity);
    len.push_back(static_cast<double>(r.episode.episode_length));
  }
  RunSummary s;
  s.architecture = cfg.architecture;
  s.seed = cfg.seed;
  s.agents = cfg.env.n_agents;
  s.episodes = history.size();
  s.updates = updates;
  s.first_reward = window_mean(reward, kWindowFraction, false);
  s.final_reward = window_mean(reward, kWindowFraction, true);
  s.first_similarity = window_mean(sim, kWindowFraction, false);
  s.final_similarity = window_mean(sim, kWindowFraction, true);
  s.first_length = window_mean(len, kWindowFraction, false);
  s.final_length = window_mean(len, kWindowFraction, true);
  return s;
}

// Trains one configuration; writes its run directory when out_dir is set,
// including radar.csv (first vs last window per-agent means).
inline RunSummary run_one(const TrainConfig& cfg,
                          const std::filesystem::path& out_dir = {}) {
  Trainer trainer(cfg);
  const std::vector<MetricsRow> history = trainer.train(out_dir);
  if (!out_dir.empty()) {
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(kWindowFraction * static_cast<double>(history.size())));
    std::vector<std::vector<double>> early, late;
    for (std::size_t k = 0; k < count; ++k) {
      early.push_back(history[k].episode.per_agent_reward);
      late.push_back(history[history.size() - count + k].episode.per_agent_reward);
    }
    write_radar_csv(out_dir / "radar.csv", radar_data(early, late));
  }
  return summarize_run(cfg, history, trainer.update_index());
}

inline std::string run_name(CriticKind arch, std::uint64_t seed) {
  return std::string(to_string(arch)) + "_seed" + std::to_string(seed);
}

// Runs every (architecture, seed) pair, in parallel up to `threads`.
inline std::vector<RunSummary> run_sweep(const TrainConfig& base,
                                         const std::vector<CriticKind>& archs,
                                         const std::vector<std::uint64_t>& seeds,
                                         const std::filesystem::path& out_dir,
                                         std::size_t threads = 0) {
  std::vector<TrainConfig> jobs;
  for (CriticKind a : archs) {
    for (std::uint64_t s : seeds) {
      TrainConfig c = base;
      c.architecture = a;
      c.seed = s;
      jobs.push_back(std::move(c));
    }
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<RunSummary> results(jobs.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    while (true) {
      std::size_t k;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= jobs.size()) return;
        k = next++;
      }
      const std::filesystem::path dir =
          out_dir.empty() ? std::filesystem::path{}
                          : out_dir / run_name(jobs[k].architecture, jobs[k].seed);
      results[k] = run_one(jobs[k], dir);
    }
  };
  std::vector<std::future<void>> pool;
  for (std::size_t t = 0; t < std::min(threads, jobs.size()); ++t) {
    pool.push_back(std::async(std::launch::async, worker));
  }
  for (auto& f : pool) f.get();
  return results;
}

struct ArchitectureSummary {
  CriticKind architecture;
  SummaryStats reward;
  SummaryStats similarity;
  SummaryStats length;
  double median_reward = 0.0;
  double median_similarity = 0.0;
  std::size_t episodes = 0;
  std::size_t updates = 0;  // mean over seeds, rounded down
};

inline std::vector<ArchitectureSummary> summarize_by_architecture(
    const std::vector<RunSummary>& runs) {
  std::vector<ArchitectureSummary> out;
  for (CriticKind a : {CriticKind::kSingle, CriticKind::kMulti, CriticKind::kHybrid}) {
    std::vector<double> r, s, l;
    std::size_t episodes = 0, updates = 0;
    for (const RunSummary& run : runs) {
      if (run.architecture != a) continue;
      r.push_back(run.final_reward);
      s.push_back(run.final_similarity);
      l.push_back(run.final_length);
      episodes = run.episodes;
      updates += run.updates;
    }
    if (r.empty()) continue;
    ArchitectureSummary as{a, summarize(r), summarize(s), summarize(l),
                           median(r), median(s), episodes, updates / r.size()};
    out.push_back(as);
  }
  return out;
}

// Two tables: summary.csv (final-window aggregated reward) and
// summary_similarity.csv (final-window similarity). `iterations` counts
// episodes; `updates` counts optimization phases.
inline void write_summary_tables(const std::filesystem::path& out_dir,
                                 std::size_t agents,
                                 const std::vector<ArchitectureSummary>& rows) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, auto pick) {
    std::ofstream os(out_dir / name);
    if (!os) throw ConfigError("cannot write " + (out_dir / name).string());
    os << "agents,method,mean,sigma,r_min,r_max,iterations,updates\n";
    for (const ArchitectureSummary& r : rows) {
      const SummaryStats& s = pick(r);
      os << agents << ',' << to_string(r.architecture) << ','
         << format_real(s.mean) << ',' << format_real(s.sigma) << ','
         << format_real(s.min) << ',' << format_real(s.max) << ','
         << r.episodes << ',' << r.updates << '\n';
    }
  };
  write("summary.csv", [](const ArchitectureSummary& r) -> const SummaryStats& { return r.reward; });
  write("summary_similarity.csv",
        [](const ArchitectureSummary& r) -> const SummaryStats& { return r.similarity; });
}

}  // namespace polymorph

#endif  // POLYMORPH_EXPERIMENTS_HPP_
