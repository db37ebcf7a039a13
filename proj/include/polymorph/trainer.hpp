#ifndef POLYMORPH_TRAINER_HPP_
#define POLYMORPH_TRAINER_HPP_

// Multi-critic policy gradient training loop.
//
// Rollouts fill a fixed-capacity buffer; once full, the critics are
// regressed on discounted returns (per agent, or summed for the single
// critic), advantages are formed from the values stored at collection time,
// stacked across each agent's action slice, and the actor minimizes the
// clipped surrogate plus an entropy bonus.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "polymorph/advantage.hpp"
#include "polymorph/checkpoint.hpp"
#include "polymorph/config.hpp"
#include "polymorph/critic_bank.hpp"
#include "polymorph/errors.hpp"
#include "polymorph/metrics.hpp"
#include "polymorph/nn.hpp"
#include "polymorph/policy.hpp"
#include "polymorph/quad_env.hpp"
#include "polymorph/trace.hpp"

namespace polymorph {

class RolloutBuffer {
 public:
  RolloutBuffer() = default;
  RolloutBuffer(std::size_t capacity, std::size_t state_dim,
                std::size_t action_dim, std::size_t n_agents,
                std::size_t value_count)
      : capacity_(capacity),
        states(capacity, state_dim),
        actions(capacity, action_dim),
        logp_old(capacity, n_agents),
        rewards(capacity, n_agents),
        agent_terminal(capacity, n_agents),
        episode_terminal(capacity),
        segment_end(capacity),
        values(capacity, value_count),
        next_values(capacity, value_count) {
    if (capacity == 0) throw ConfigError("batch_size: must be >= 1");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size_ >= capacity_; }
  bool empty() const { return size_ == 0; }
  void clear() { size_ = 0; }

  void push(std::span<const double> state, const ActionRecord& rec,
            const StepResult& step, std::span<const double> value,
            std::span<const double> next_value) {
    if (full()) throw StateError("rollout buffer is full");
    const auto t = static_cast<Eigen::Index>(size_);
    for (std::size_t k = 0; k < state.size(); ++k) states(t, idx(k)) = state[k];
    for (std::size_t k = 0; k < rec.action.size(); ++k) actions(t, idx(k)) = rec.action[k];
    for (std::size_t k = 0; k < rec.per_agent_logp.size(); ++k) {
      logp_old(t, idx(k)) = rec.per_agent_logp[k];
      rewards(t, idx(k)) = step.rewards[k];
      agent_terminal(t, idx(k)) = step.per_agent_done[k] ? 1 : 0;
    }
    episode_terminal[size_] = step.terminal;
    segment_end[size_] = step.done;
    for (std::size_t k = 0; k < value.size(); ++k) {
      values(t, idx(k)) = value[k];
      next_values(t, idx(k)) = next_value[k];
    }
    ++size_;
  }

  // Drops value column k (a removed critic).
  void drop_value_column(std::size_t k) {
    auto drop = [k](Matrix& m) {
      Matrix out(m.rows(), m.cols() - 1);
      const auto c = static_cast<Eigen::Index>(k);
      out.leftCols(c) = m.leftCols(c);
      out.rightCols(m.cols() - c - 1) = m.rightCols(m.cols() - c - 1);
      m = std::move(out);
    };
    drop(values);
    drop(next_values);
  }

 private:
  static Eigen::Index idx(std::size_t k) { return static_cast<Eigen::Index>(k); }

  std::size_t capacity_ = 0;
  std::size_t size_ = 0;

 public:
  Matrix states;
  Matrix actions;
  Matrix logp_old;
  Matrix rewards;  // per agent
  Eigen::MatrixXi agent_terminal;
  Flags episode_terminal;
  Flags segment_end;
  Matrix values;
  Matrix next_values;
};

struct UpdateStats {
  double actor_loss = 0.0;
  std::vector<double> critic_losses;
  double mean_ratio = 0.0;
  double first_minibatch_mean_ratio = 0.0;
  double mean_entropy = 0.0;
};

struct CollectResult {
  std::size_t steps = 0;
  bool episode_finished = false;
  std::optional<EpisodeMetrics> finished;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(prepare(std::move(cfg))),
        rng_(cfg_.seed),
        env_(cfg_.env) {
    PolicySpec ps;
    ps.state_dim = env_.merged_dim();
    ps.n_agents = cfg_.env.n_agents;
    ps.dim_a0 = env_.dim_a0();
    ps.hidden = cfg_.actor_hidden;
    ps.log_std_floor = cfg_.log_std_floor;
    policy_ = GaussianPolicy(ps, rng_);
    CriticBankSpec cs;
    cs.kind = cfg_.architecture;
    cs.n_agents = cfg_.env.n_agents;
    cs.state_dim = env_.merged_dim();
    cs.hidden = cfg_.critic_hidden;
    cs.learning_rate = cfg_.lr_critic;
    bank_ = CriticBank(cs, rng_);
    actor_opt_ = OptimizerState::adam(cfg_.lr_actor);
    critic_agents_.resize(bank_.value_count());
    std::iota(critic_agents_.begin(), critic_agents_.end(), std::size_t{0});
    buffer_ = make_buffer();
  }

  const TrainConfig& config() const { return cfg_; }
  GaussianPolicy& policy() { return policy_; }
  CriticBank& bank() { return bank_; }
  QuadEnv& env() { return env_; }
  RolloutBuffer& buffer() { return buffer_; }
  Rng& rng() { return rng_; }
  std::size_t update_index() const { return update_index_; }
  std::size_t episode_index() const { return episode_index_; }
  const UpdateStats& last_update() const { return last_update_; }
  // Agent served by each value column of the bank (identity unless removed).
  const std::vector<std::size_t>& critic_agents() const { return critic_agents_; }

  // Steps the environment until the buffer is full or the episode ends.
  CollectResult collect_rollout(
      const std::function<void(const StepResult&, const ActionRecord&)>& on_step = {}) {
    if (buffer_.full()) throw StateError("collect_rollout called on a full buffer");
    if (!episode_open_) begin_episode();
    CollectResult res;
    while (!buffer_.full()) {
      const std::vector<double> s = env_.state().merged();
      const ActionRecord rec = policy_.sample_action(s, rng_);
      StepResult step;
      try {
        step = env_.step(rec.action);
      } catch (const EnvironmentFault& e) {
        throw EnvironmentFault(std::string(e.what()) + " (episode " +
                               std::to_string(episode_index_) + ", step " +
                               std::to_string(env_.state().step_index) + ")");
      }
      const std::vector<double> next_v =
          bank_.estimate_values(std::span<const double>(step.next_state.merged()));
      buffer_.push(s, rec, step, current_values_, next_v);
      current_values_ = next_v;
      episode_rewards_.push_back(step.rewards);
      ++res.steps;
      if (on_step) on_step(step, rec);
      if (step.done) {
        res.episode_finished = true;
        res.finished = close_episode();
        break;
      }
    }
    return res;
  }

  UpdateStats update() {
    if (!buffer_.full()) throw StateError("update needs a full buffer");
    const Eigen::Index batch = static_cast<Eigen::Index>(buffer_.size());
    const LossConfig& lc = cfg_.loss;
    const std::size_t n = cfg_.env.n_agents;
    const std::size_t d0 = env_.dim_a0();

    // Reward / terminal columns matching the bank's value heads.
    Matrix rewards;
    Eigen::MatrixXi terminal;
    if (bank_.kind() == CriticKind::kSingle) {
      rewards = buffer_.rewards.rowwise().sum();
      terminal.resize(batch, 1);
      for (Eigen::Index t = 0; t < batch; ++t) {
        terminal(t, 0) = buffer_.episode_terminal[static_cast<std::size_t>(t)] ? 1 : 0;
      }
    } else {
      rewards.resize(batch, static_cast<Eigen::Index>(critic_agents_.size()));
      terminal.resize(batch, rewards.cols());
      for (std::size_t k = 0; k < critic_agents_.size(); ++k) {
        const auto src = static_cast<Eigen::Index>(critic_agents_[k]);
        rewards.col(static_cast<Eigen::Index>(k)) = buffer_.rewards.col(src);
        terminal.col(static_cast<Eigen::Index>(k)) = buffer_.agent_terminal.col(src);
      }
    }

    const Matrix returns = discounted_returns(rewards, lc.gamma, terminal,
                                              buffer_.segment_end,
                                              buffer_.next_values);

    UpdateStats stats;
    stats.critic_losses.assign(bank_.value_count(), 0.0);

    // Critics first.
    std::size_t critic_steps = 0;
    for (std::size_t epoch = 0; epoch < cfg_.epochs_per_update; ++epoch) {
      for (const auto& mb : minibatches(static_cast<std::size_t>(batch))) {
        const std::vector<double> l =
            bank_.train_step(rows(buffer_.states, mb), rows(returns, mb));
        for (std::size_t k = 0; k < l.size(); ++k) stats.critic_losses[k] += l[k];
        ++critic_steps;
      }
    }
    for (double& l : stats.critic_losses) l /= static_cast<double>(critic_steps);

    // Advantages from the values stored during collection.
    Matrix adv = advantages(rewards, buffer_.values, buffer_.next_values,
                            terminal, lc.gamma);
    if (lc.normalize_advantages) {
      std::vector<double> m, s;
      normalize_columns(adv, m, s);
    }
    Matrix per_agent = Matrix::Zero(batch, static_cast<Eigen::Index>(n));
    if (bank_.kind() == CriticKind::kSingle) {
      per_agent.colwise() = adv.col(0);
    } else {
      for (std::size_t k = 0; k < critic_agents_.size(); ++k) {
        per_agent.col(static_cast<Eigen::Index>(critic_agents_[k])) =
            adv.col(static_cast<Eigen::Index>(k));
      }
    }
    const Matrix stacked = stack_advantages(per_agent, d0);

    // Actor.
    std::size_t actor_steps = 0;
    double ratio_sum = 0.0;
    for (std::size_t epoch = 0; epoch < cfg_.epochs_per_update; ++epoch) {
      for (const auto& mb : minibatches(static_cast<std::size_t>(batch))) {
        const Matrix s_mb = rows(buffer_.states, mb);
        const Matrix a_mb = rows(buffer_.actions, mb);
        const Matrix old_mb = rows(buffer_.logp_old, mb);
        const Matrix adv_mb = rows(stacked, mb);
        const ActorStep st = actor_step(s_mb, a_mb, old_mb, adv_mb);
        if (actor_steps == 0) stats.first_minibatch_mean_ratio = st.mean_ratio;
        stats.actor_loss += st.loss;
        stats.mean_entropy += st.entropy;
        ratio_sum += st.mean_ratio;
        ++actor_steps;
      }
    }
    stats.actor_loss /= static_cast<double>(actor_steps);
    stats.mean_entropy /= static_cast<double>(actor_steps);
    stats.mean_ratio = ratio_sum / static_cast<double>(actor_steps);

    buffer_.clear();
    ++update_index_;
    last_update_ = stats;
    // The open episode's next stored V(s) must come from the updated critics.
    if (episode_open_) {
      current_values_ =
          bank_.estimate_values(std::span<const double>(env_.state().merged()));
    }
    return stats;
  }

  // Permanently removes agent i from the run. A multi bank drops the agent's
  // critic; the other critics are left untouched.
  void remove_agent(std::size_t i) {
    env_.retire_agent(i);
    if (bank_.kind() != CriticKind::kMulti) return;
    const auto it = std::find(critic_agents_.begin(), critic_agents_.end(), i);
    if (it == critic_agents_.end()) return;
    const auto k = static_cast<std::size_t>(it - critic_agents_.begin());
    bank_.remove_critic(k);
    critic_agents_.erase(it);
    buffer_.drop_value_column(k);
    if (!current_values_.empty()) {
      current_values_.erase(current_values_.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }

  // Full run. Writes metrics.csv, config.json, checkpoints/ and traces/
  // under out_dir (when non-empty). Returns the per-episode metrics.
  std::vector<MetricsRow> train(const std::filesystem::path& out_dir = {}) {
    std::optional<MetricsCsvWriter> writer;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      std::ofstream(out_dir / "config.json") << to_json(cfg_).dump(2) << '\n';
      writer.emplace(out_dir / "metrics.csv", cfg_.env.n_agents);
    }
    std::vector<MetricsRow> history;
    history.reserve(cfg_.episodes);
    std::optional<TraceWriter> trace;
    while (episode_index_ < cfg_.episodes) {
      const std::size_t ep = episode_index_;
      if (!out_dir.empty() && cfg_.trace_interval > 0 && !trace &&
          ep % cfg_.trace_interval == 0) {
        std::filesystem::create_directories(out_dir / "traces");
        trace.emplace(out_dir / "traces" / ("episode_" + std::to_string(ep) + ".jsonl"));
      }
      CollectResult cr;
      try {
        cr = collect_rollout([&](const StepResult& step, const ActionRecord& rec) {
          if (trace) trace->write(trace_record(ep, step, rec.action, env_.dim_a0()));
        });
        if (buffer_.full()) update();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (architecture " +
                           std::string(to_string(cfg_.architecture)) + ", episode " +
                           std::to_string(ep) + ", update " +
                           std::to_string(update_index_) + ")");
      }
      if (!cr.finished) continue;
      trace.reset();
      MetricsRow row;
      row.episode = *cr.finished;
      row.update_index = update_index_;
      row.actor_loss = last_update_.actor_loss;
      row.critic_losses = expand_critic_losses(last_update_.critic_losses);
      row.mean_entropy = last_update_.mean_entropy;
      if (writer) writer->write(row);
      history.push_back(std::move(row));
      if (!out_dir.empty() && cfg_.eval_interval > 0 &&
          episode_index_ % cfg_.eval_interval == 0) {
        save_checkpoints(out_dir / "checkpoints", episode_index_);
      }
    }
    if (!out_dir.empty()) save_checkpoints(out_dir / "checkpoints", episode_index_);
    return history;
  }

  void save_checkpoints(const std::filesystem::path& dir, std::size_t tag) const {
    Checkpoint actor = policy_.to_checkpoint();
    actor.meta["config"] = to_json(cfg_);
    actor.meta["episode"] = tag;
    actor.meta["update_index"] = update_index_;
    const std::string suffix = std::to_string(tag);
    save_checkpoint(dir / ("actor_" + suffix + ".bin"), actor);
    save_checkpoint(dir / ("critics_" + suffix + ".bin"), bank_.to_checkpoint());
    save_checkpoint(dir / "actor_latest.bin", actor);
    save_checkpoint(dir / "critics_latest.bin", bank_.to_checkpoint());
  }

 private:
  struct ActorStep {
    double loss = 0.0;
    double entropy = 0.0;
    double mean_ratio = 0.0;
  };

  ActorStep actor_step(const Matrix& states, const Matrix& actions,
                       const Matrix& logp_old, const Matrix& stacked_adv) {
    const LossConfig& lc = cfg_.loss;
    const std::size_t d0 = policy_.dim_a0();
    const PolicyEvaluation ev = policy_.evaluate(states, actions);
    const Matrix agent_ratio = (ev.logp - logp_old).array().exp().matrix();
    const Matrix ratio = broadcast_ratio(agent_ratio, d0);
    const SurrogateResult sur =
        clipped_surrogate_objective(ratio, stacked_adv, lc.clip_epsilon);
    const double entropy = ev.entropy.mean();
    ActorStep out;
    out.loss = actor_loss(sur.objective, entropy, lc.entropy_coef);
    out.entropy = entropy;
    out.mean_ratio = agent_ratio.mean();
    if (!std::isfinite(out.loss)) throw NumericError("actor loss is not finite");

    // d(loss)/d(logp_i) = sum over agent i's columns of -dObj/dratio * ratio_i
    const Eigen::Index batch = states.rows();
    Matrix dlogp(batch, agent_ratio.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index i = 0; i < agent_ratio.cols(); ++i) {
        double g = 0.0;
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d0); ++k) {
          g += sur.d_objective_d_ratio(b, i * static_cast<Eigen::Index>(d0) + k);
        }
        dlogp(b, i) = -g * agent_ratio(b, i);
      }
    }
    const Vector dentropy =
        Vector::Constant(batch, -lc.entropy_coef / static_cast<double>(batch));
    policy_.backward(ev, actions, dlogp, dentropy);
    optimizer_step(policy_.net(), actor_opt_);
    return out;
  }

  static TrainConfig prepare(TrainConfig cfg) {
    cfg.env.ep_length = cfg.ep_length;
    cfg.validate();
    return cfg;
  }

  RolloutBuffer make_buffer() const {
    return RolloutBuffer(cfg_.batch_size, env_.merged_dim(),
                         env_.merged_dim() / kAgentStateDim * env_.dim_a0(),
                         cfg_.env.n_agents, bank_.value_count());
  }

  std::vector<std::vector<std::size_t>> minibatches(std::size_t count) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < count; start += cfg_.minibatch_size) {
      const std::size_t end = std::min(count, start + cfg_.minibatch_size);
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }

  static Matrix rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
    }
    return out;
  }

  void begin_episode() {
    env_.reset(rng_);
    current_values_ =
        bank_.estimate_values(std::span<const double>(env_.state().merged()));
    episode_rewards_.clear();
    episode_open_ = true;
  }

  EpisodeMetrics close_episode() {
    Matrix r(static_cast<Eigen::Index>(episode_rewards_.size()),
             static_cast<Eigen::Index>(cfg_.env.n_agents));
    for (std::size_t t = 0; t < episode_rewards_.size(); ++t) {
      for (std::size_t i = 0; i < cfg_.env.n_agents; ++i) {
        r(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
            episode_rewards_[t][i];
      }
    }
    EpisodeMetrics m = episode_metrics(r, episode_index_);
    ++episode_index_;
    episode_open_ = false;
    begin_episode();
    return m;
  }

  // One critic-loss column per agent. The single critic serves every agent,
  // so its loss is repeated; removed critics report 0.
  std::vector<double> expand_critic_losses(const std::vector<double>& l) const {
    std::vector<double> out(cfg_.env.n_agents, 0.0);
    if (l.empty()) return out;
    if (bank_.kind() == CriticKind::kSingle) {
      std::fill(out.begin(), out.end(), l.front());
      return out;
    }
    for (std::size_t k = 0; k < critic_agents_.size() && k < l.size(); ++k) {
      out[critic_agents_[k]] = l[k];
    }
    return out;
  }

  TrainConfig cfg_;
  Rng rng_;
  QuadEnv env_;
  GaussianPolicy policy_;
  CriticBank bank_;
  OptimizerState actor_opt_;
  RolloutBuffer buffer_;
  std::vector<std::size_t> critic_agents_;
  std::vector<double> current_values_;
  std::vector<std::vector<double>> episode_rewards_;
  bool episode_open_ = false;
  std::size_t episode_index_ = 0;
  std::size_t update_index_ = 0;
  UpdateStats last_update_;
};

// Runs one episode with a fixed policy (mean action when greedy). Used by
// evaluation; does not touch any trainer state.
inline EpisodeMetrics run_policy_episode(
    const GaussianPolicy& policy, QuadEnv& env, Rng& rng, bool greedy,
    std::size_t episode, TraceWriter* trace = nullptr) {
  env.reset(rng);
  std::vector<std::vector<double>> rewards;
  while (true) {
    const std::vector<double> s = env.state().merged();
    const ActionRecord rec =
        greedy ? policy.mean_action(s) : policy.sample_action(s, rng);
    const StepResult step = env.step(rec.action);
    rewards.push_back(step.rewards);
    if (trace) trace->write(trace_record(episode, step, rec.action, env.dim_a0()));
    if (step.done) break;
  }
  Matrix r(static_cast<Eigen::Index>(rewards.size()),
           static_cast<Eigen::Index>(env.n_agents()));
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    for (std::size_t i = 0; i < env.n_agents(); ++i) {
      r(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = rewards[t][i];
    }
  }
  return episode_metrics(r, episode);
}

}  // namespace polymorph

#endif  // POLYMORPH_TRAINER_HPP_
