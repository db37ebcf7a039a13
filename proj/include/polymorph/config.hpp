#ifndef POLYMORPH_CONFIG_HPP_
#define POLYMORPH_CONFIG_HPP_

// Training configuration and its flat JSON form. Every TrainConfig, loss,
// environment and reward field appears at the top level under its own name.

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "polymorph/advantage.hpp"
#include "polymorph/critic_bank.hpp"
#include "polymorph/errors.hpp"
#include "polymorph/quad_env.hpp"

namespace polymorph {

struct TrainConfig {
  std::size_t episodes = 1000;
  std::size_t ep_length = 500;
  std::size_t batch_size = 2048;
  std::size_t epochs_per_update = 10;
  std::size_t minibatch_size = 256;
  std::uint64_t seed = 0;
  CriticKind architecture = CriticKind::kMulti;
  std::size_t eval_interval = 100;
  std::size_t trace_interval = 100;  // 0 disables traces
  std::vector<std::size_t> actor_hidden = {64, 64};
  std::vector<std::size_t> critic_hidden = {64, 64};
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  double log_std_floor = -5.0;
  LossConfig loss;
  EnvConfig env;

  void validate() const {
    if (episodes < 1) throw ConfigError("episodes: must be >= 1");
    if (ep_length < 1) throw ConfigError("ep_length: must be >= 1");
    if (minibatch_size < 1) throw ConfigError("minibatch_size: must be >= 1");
    if (batch_size < minibatch_size) {
      throw ConfigError("batch_size: must be >= minibatch_size");
    }
    if (epochs_per_update < 1) throw ConfigError("epochs_per_update: must be >= 1");
    if (!(lr_actor > 0.0)) throw ConfigError("lr_actor: must be positive");
    if (!(lr_critic > 0.0)) throw ConfigError("lr_critic: must be positive");
    for (std::size_t h : actor_hidden) {
      if (h == 0) throw ConfigError("actor_hidden: widths must be positive");
    }
    for (std::size_t h : critic_hidden) {
      if (h == 0) throw ConfigError("critic_hidden: widths must be positive");
    }
    loss.validate();
    env.validate();
  }
};

// Settings sized for a laptop core: short episodes and small nets.
inline TrainConfig desk_scale_config(std::size_t n_agents, CriticKind arch,
                                     std::uint64_t seed,
                                     std::size_t episodes) {
  TrainConfig c;
  c.episodes = episodes;
  c.seed = seed;
  c.architecture = arch;
  c.ep_length = 200;
  c.batch_size = 2048;
  c.epochs_per_update = 4;
  c.minibatch_size = 256;
  c.actor_hidden = {32, 32};
  c.critic_hidden = {32, 32};
  c.lr_actor = 1e-3;
  c.lr_critic = 1e-3;
  c.loss.normalize_advantages = true;
  c.eval_interval = 0;
  c.trace_interval = 0;
  c.env.n_agents = n_agents;
  c.env.ep_length = c.ep_length;
  return c;
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out,
                std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    const nlohmann::json& v = j.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(std::string(key) + ": must be a non-negative integer");
    }
  }
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type in config");
  }
}

inline void read_enum(const nlohmann::json& j, const char* key,
                      std::set<std::string>& seen, auto&& parse) {
  if (!j.contains(key)) return;
  seen.insert(key);
  if (!j.at(key).is_string()) {
    throw ConfigError(std::string(key) + ": expected a string");
  }
  parse(j.at(key).get<std::string>());
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
  const EnvConfig& e = c.env;
  const RewardConfig& r = e.reward;
  return {
      {"episodes", c.episodes},
      {"ep_length", c.ep_length},
      {"batch_size", c.batch_size},
      {"epochs_per_update", c.epochs_per_update},
      {"minibatch_size", c.minibatch_size},
      {"seed", c.seed},
      {"architecture", std::string(to_string(c.architecture))},
      {"eval_interval", c.eval_interval},
      {"trace_interval", c.trace_interval},
      {"actor_hidden", c.actor_hidden},
      {"critic_hidden", c.critic_hidden},
      {"lr_actor", c.lr_actor},
      {"lr_critic", c.lr_critic},
      {"log_std_floor", c.log_std_floor},
      {"gamma", c.loss.gamma},
      {"clip_epsilon", c.loss.clip_epsilon},
      {"entropy_coef", c.loss.entropy_coef},
      {"value_coef", c.loss.value_coef},
      {"normalize_advantages", c.loss.normalize_advantages},
      {"n_agents", e.n_agents},
      {"control", std::string(to_string(e.control))},
      {"task", std::string(to_string(e.task))},
      {"dt", e.dt},
      {"arena_half_extent", e.arena_half_extent},
      {"spawn_half_extent", e.spawn_half_extent},
      {"gravity", e.gravity},
      {"mass", e.mass},
      {"arm_length", e.arm_length},
      {"collision_radius", e.collision_radius},
      {"inertia", e.inertia},
      {"max_acceleration", e.max_acceleration},
      {"action_scale", e.action_scale},
      {"gravity_compensation", e.gravity_compensation},
      {"max_rotor_thrust", e.max_rotor_thrust},
      {"rotor_drag_coef", e.rotor_drag_coef},
      {"position_obs_scale", e.position_obs_scale},
      {"velocity_obs_scale", e.velocity_obs_scale},
      {"end_on_all_reached", e.end_on_all_reached},
      {"placement_retries", e.placement_retries},
      {"progress_gain", r.progress_gain},
      {"action_cost", r.action_cost},
      {"reach_bonus", r.reach_bonus},
      {"collision_penalty", r.collision_penalty},
      {"reach_radius", r.reach_radius},
      {"upright_gain", r.upright_gain},
      {"spin_cost", r.spin_cost},
  };
}

// Applies the keys present in `j` on top of `base`. Unknown keys and bad
// values are reported by field name.
inline TrainConfig config_from_json(const nlohmann::json& j,
                                    TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig c = std::move(base);
  EnvConfig& e = c.env;
  RewardConfig& r = e.reward;
  std::set<std::string> seen;
  using detail::read_field;
  read_field(j, "episodes", c.episodes, seen);
  read_field(j, "ep_length", c.ep_length, seen);
  read_field(j, "batch_size", c.batch_size, seen);
  read_field(j, "epochs_per_update", c.epochs_per_update, seen);
  read_field(j, "minibatch_size", c.minibatch_size, seen);
  read_field(j, "seed", c.seed, seen);
  detail::read_enum(j, "architecture", seen, [&](const std::string& s) {
    c.architecture = critic_kind_from_string(s);
  });
  read_field(j, "eval_interval", c.eval_interval, seen);
  read_field(j, "trace_interval", c.trace_interval, seen);
  read_field(j, "actor_hidden", c.actor_hidden, seen);
  read_field(j, "critic_hidden", c.critic_hidden, seen);
  read_field(j, "lr_actor", c.lr_actor, seen);
  read_field(j, "lr_critic", c.lr_critic, seen);
  read_field(j, "log_std_floor", c.log_std_floor, seen);
  read_field(j, "gamma", c.loss.gamma, seen);
  read_field(j, "clip_epsilon", c.loss.clip_epsilon, seen);
  read_field(j, "entropy_coef", c.loss.entropy_coef, seen);
  read_field(j, "value_coef", c.loss.value_coef, seen);
  read_field(j, "normalize_advantages", c.loss.normalize_advantages, seen);
  read_field(j, "n_agents", e.n_agents, seen);
  detail::read_enum(j, "control", seen, [&](const std::string& s) {
    e.control = control_model_from_string(s);
  });
  detail::read_enum(j, "task", seen,
                    [&](const std::string& s) { e.task = task_from_string(s); });
  read_field(j, "dt", e.dt, seen);
  read_field(j, "arena_half_extent", e.arena_half_extent, seen);
  read_field(j, "spawn_half_extent", e.spawn_half_extent, seen);
  read_field(j, "gravity", e.gravity, seen);
  read_field(j, "mass", e.mass, seen);
  read_field(j, "arm_length", e.arm_length, seen);
  read_field(j, "collision_radius", e.collision_radius, seen);
  read_field(j, "inertia", e.inertia, seen);
  read_field(j, "max_acceleration", e.max_acceleration, seen);
  read_field(j, "action_scale", e.action_scale, seen);
  read_field(j, "gravity_compensation", e.gravity_compensation, seen);
  read_field(j, "max_rotor_thrust", e.max_rotor_thrust, seen);
  read_field(j, "rotor_drag_coef", e.rotor_drag_coef, seen);
  read_field(j, "position_obs_scale", e.position_obs_scale, seen);
  read_field(j, "velocity_obs_scale", e.velocity_obs_scale, seen);
  read_field(j, "end_on_all_reached", e.end_on_all_reached, seen);
  read_field(j, "placement_retries", e.placement_retries, seen);
  read_field(j, "progress_gain", r.progress_gain, seen);
  read_field(j, "action_cost", r.action_cost, seen);
  read_field(j, "reach_bonus", r.reach_bonus, seen);
  read_field(j, "collision_penalty", r.collision_penalty, seen);
  read_field(j, "reach_radius", r.reach_radius, seen);
  read_field(j, "upright_gain", r.upright_gain, seen);
  read_field(j, "spin_cost", r.spin_cost, seen);
  for (const auto& [key, value] : j.items()) {
    if (!seen.count(key)) throw ConfigError(key + ": unknown config field");
  }
  e.ep_length = c.ep_length;
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& path,
                               TrainConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace polymorph

#endif  // POLYMORPH_CONFIG_HPP_
