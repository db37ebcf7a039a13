#ifndef POLYMORPH_METRICS_HPP_
#define POLYMORPH_METRICS_HPP_

// Reward-signal metrics: similarity to the all-ones direction, per-episode
// aggregates, radar-plot data and summary statistics across seeds.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

struct SimilarityStats {
  std::vector<double> r_hat;
  double cos_theta = 0.0;
  double similarity = 0.0;
};

// r_hat is the mean reward vector of the rows; cos is its angle to (1,..,1)
// and S = 1 - |1 - cos|. A zero r_hat has no direction: cos and S are 0.
inline SimilarityStats similarity(const Matrix& reward_rows) {
  if (reward_rows.rows() < 1 || reward_rows.cols() < 1) {
    throw ShapeError("similarity needs at least one row and one agent");
  }
  SimilarityStats s;
  const Eigen::RowVectorXd mean = reward_rows.colwise().mean();
  s.r_hat.assign(mean.data(), mean.data() + mean.size());
  const double norm = mean.norm();
  if (norm == 0.0) return s;
  s.cos_theta =
      mean.sum() / (norm * std::sqrt(static_cast<double>(mean.size())));
  s.similarity = 1.0 - std::abs(1.0 - s.cos_theta);
  return s;
}

struct EpisodeMetrics {
  std::size_t episode = 0;
  double aggregated_reward = 0.0;
  std::size_t episode_length = 0;
  double similarity = 0.0;
  std::vector<double> per_agent_reward;
};

inline EpisodeMetrics episode_metrics(const Matrix& episode_rewards,
                                      std::size_t episode = 0) {
  if (episode_rewards.rows() == 0) throw ShapeError("episode has no steps");
  EpisodeMetrics m;
  m.episode = episode;
  m.episode_length = static_cast<std::size_t>(episode_rewards.rows());
  const Eigen::RowVectorXd per_agent = episode_rewards.colwise().sum();
  m.per_agent_reward.assign(per_agent.data(), per_agent.data() + per_agent.size());
  m.aggregated_reward = per_agent.sum();
  m.similarity = similarity(episode_rewards).similarity;
  return m;
}

struct RadarRow {
  std::size_t agent_index = 0;
  double early_mean = 0.0;
  double late_mean = 0.0;
};

// Inputs are per-episode per-agent reward totals. Means are divided by the
// largest absolute mean over both windows (no division when that is zero).
inline std::vector<RadarRow> radar_data(
    const std::vector<std::vector<double>>& early,
    const std::vector<std::vector<double>>& late) {
  if (early.empty() || late.empty()) {
    throw ShapeError("radar export needs non-empty early and late windows");
  }
  const std::size_t n = early.front().size();
  auto window_mean = [n](const std::vector<std::vector<double>>& w) {
    std::vector<double> m(n, 0.0);
    for (const auto& ep : w) {
      if (ep.size() != n) throw ShapeError("radar rows differ in agent count");
      for (std::size_t i = 0; i < n; ++i) m[i] += ep[i];
    }
    for (double& v : m) v /= static_cast<double>(w.size());
    return m;
  };
  const std::vector<double> e = window_mean(early);
  const std::vector<double> l = window_mean(late);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    peak = std::max({peak, std::abs(e[i]), std::abs(l[i])});
  }
  std::vector<RadarRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].agent_index = i;
    rows[i].early_mean = peak > 0.0 ? e[i] / peak : 0.0;
    rows[i].late_mean = peak > 0.0 ? l[i] / peak : 0.0;
  }
  return rows;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_radar_csv(const std::filesystem::path& path,
                            const std::vector<RadarRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "agent_index,early_mean,late_mean\n";
  for (const RadarRow& r : rows) {
    os << r.agent_index << ',' << format_real(r.early_mean) << ','
       << format_real(r.late_mean) << '\n';
  }
}

struct SummaryStats {
  double mean = 0.0;
  double sigma = 0.0;  // sample standard deviation; 0 for a single value
  double min = 0.0;
  double max = 0.0;
};

inline SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw ShapeError("summarize: no values");
  SummaryStats s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sigma = values.size() > 1
                ? std::sqrt(ss / static_cast<double>(values.size() - 1))
                : 0.0;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ShapeError("median: no values");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Exponential moving average used for the *_smoothed columns.
class Ema {
 public:
  explicit Ema(double coef = 0.99) : coef_(coef) {}
  double update(double x) {
    value_ = started_ ? coef_ * value_ + (1.0 - coef_) * x : x;
    started_ = true;
    return value_;
  }
  double value() const { return value_; }

 private:
  double coef_;
  double value_ = 0.0;
  bool started_ = false;
};

// One metrics row per episode; column order is fixed by header().
struct MetricsRow {
  EpisodeMetrics episode;
  std::size_t update_index = 0;
  double actor_loss = 0.0;
  std::vector<double> critic_losses;
  double mean_entropy = 0.0;
};

class MetricsCsvWriter {
 public:
  MetricsCsvWriter(const std::filesystem::path& path, std::size_t n_agents)
      : os_(path), n_agents_(n_agents) {
    if (!os_) throw ConfigError("cannot write " + path.string());
    os_ << header(n_agents) << '\n';
  }

  static std::string header(std::size_t n) {
    std::string h = "episode,update_index,aggregated_reward,episode_length,similarity";
    for (std::size_t i = 0; i < n; ++i) h += ",per_agent_reward_" + std::to_string(i);
    h += ",actor_loss";
    for (std::size_t i = 0; i < n; ++i) h += ",critic_loss_" + std::to_string(i);
    h += ",mean_entropy";
    h += ",aggregated_reward_smoothed,episode_length_smoothed,similarity_smoothed";
    return h;
  }

  void write(const MetricsRow& row) {
    const EpisodeMetrics& e = row.episode;
    os_ << e.episode << ',' << row.update_index << ','
        << format_real(e.aggregated_reward) << ',' << e.episode_length << ','
        << format_real(e.similarity);
    for (std::size_t i = 0; i < n_agents_; ++i) {
      os_ << ',' << format_real(i < e.per_agent_reward.size() ? e.per_agent_reward[i] : 0.0);
    }
    os_ << ',' << format_real(row.actor_loss);
    for (std::size_t i = 0; i < n_agents_; ++i) {
      os_ << ',' << format_real(i < row.critic_losses.size() ? row.critic_losses[i] : 0.0);
    }
    os_ << ',' << format_real(row.mean_entropy);
    os_ << ',' << format_real(reward_ema_.update(e.aggregated_reward)) << ','
        << format_real(length_ema_.update(static_cast<double>(e.episode_length)))
        << ',' << format_real(similarity_ema_.update(e.similarity)) << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
  std::size_t n_agents_;
  Ema reward_ema_, length_ema_, similarity_ema_;
};

// Minimal reader for the metrics CSV (all columns numeric).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ShapeError("csv has no column '" + name + "'");
  }
  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.at(c));
    return out;
  }
};

inline CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(is, line)) throw ShapeError("empty csv " + path.string());
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& c : split(line)) row.push_back(std::stod(c));
    if (row.size() != t.header.size()) {
      throw ShapeError("ragged csv row in " + path.string());
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Mean of `values` over the first or last `fraction` of entries (>= 1 entry).
inline double window_mean(const std::vector<double>& values, double fraction,
                          bool from_end) {
  if (values.empty()) throw ShapeError("window_mean: no values");
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(values.size()))));
  const auto first = from_end ? values.end() - static_cast<std::ptrdiff_t>(count)
                              : values.begin();
  return std::accumulate(first, first + static_cast<std::ptrdiff_t>(count), 0.0) /
         static_cast<double>(count);
}

}  // namespace polymorph

#endif  // POLYMORPH_METRICS_HPP_
