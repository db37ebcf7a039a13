#ifndef POLYMORPH_QUAD_ENV_HPP_
#define POLYMORPH_QUAD_ENV_HPP_

// Multi-quadcopter environment.
//
// Two control models share one world:
//   direction: point mass, the command is an acceleration vector
//              (semi-implicit Euler: v += (a_cmd + g) dt; p += v dt).
//   motor:     rigid body with four rotors in "+" layout, diagonal inertia.
//
// Rotor layout (body frame, z up): rotor 0 at +x, 1 at +y, 2 at -x, 3 at -y.
// Rotors 0 and 2 spin one way, 1 and 3 the other, so with positive thrust
// differentials:
//   roll  torque  tau_x = L (T1 - T3)
//   pitch torque  tau_y = L (T2 - T0)
//   yaw   torque  tau_z = k_d (T0 - T1 + T2 - T3)
//
// The merged observation is {s_1 | ... | s_n}; each slice holds the relative
// target position, velocity, body up-vector and the relative position of the
// nearest live drone (12 reals). Dead agents keep their slot, zero-filled.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

enum class ControlModel { kDirection, kMotor };
enum class Task { kTargetNav, kBalance };

inline std::string_view to_string(ControlModel c) {
  return c == ControlModel::kDirection ? "direction" : "motor";
}
inline std::string_view to_string(Task t) {
  return t == Task::kTargetNav ? "target_nav" : "balance";
}
inline ControlModel control_model_from_string(std::string_view s) {
  if (s == "direction") return ControlModel::kDirection;
  if (s == "motor") return ControlModel::kMotor;
  throw ConfigError("control: expected direction or motor, got '" +
                    std::string(s) + "'");
}
inline Task task_from_string(std::string_view s) {
  if (s == "target_nav") return Task::kTargetNav;
  if (s == "balance") return Task::kBalance;
  throw ConfigError("task: expected target_nav or balance, got '" +
                    std::string(s) + "'");
}

struct RewardConfig {
  double progress_gain = 1.0;      // k_p
  double action_cost = 0.001;      // k_c
  double reach_bonus = 10.0;       // B
  double collision_penalty = 10.0; // P, subtracted
  double reach_radius = 0.5;       // r_reach, m
  double upright_gain = 1.0;       // k_u
  double spin_cost = 0.1;          // k_omega
};

struct EnvConfig {
  std::size_t n_agents = 2;
  ControlModel control = ControlModel::kDirection;
  Task task = Task::kTargetNav;
  double dt = 0.01;
  double arena_half_extent = 10.0;
  double spawn_half_extent = 8.0;
  std::size_t ep_length = 500;
  double gravity = 9.81;
  double mass = 1.0;
  double arm_length = 0.2;
  double collision_radius = 0.3;
  std::array<double, 3> inertia = {0.01, 0.01, 0.02};
  double max_acceleration = 20.0;  // a_max, direction model
  double action_scale = 10.0;      // policy units -> m/s^2, direction model
  bool gravity_compensation = false;
  double max_rotor_thrust = 4.905; // T_max per rotor, N
  double rotor_drag_coef = 0.05;
  double position_obs_scale = 10.0;
  double velocity_obs_scale = 5.0;
  bool end_on_all_reached = false;
  std::size_t placement_retries = 10000;
  RewardConfig reward;

  std::size_t action_dim_per_agent() const {
    return control == ControlModel::kDirection ? 3 : 4;
  }

  void validate() const {
    if (n_agents < 1) throw ConfigError("n_agents: must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("dt: must be positive");
    if (!(arena_half_extent > 0.0)) throw ConfigError("arena_half_extent: must be positive");
    if (!(spawn_half_extent > 0.0 && spawn_half_extent <= arena_half_extent)) {
      throw ConfigError("spawn_half_extent: must be in (0, arena_half_extent]");
    }
    if (ep_length < 1) throw ConfigError("ep_length: must be >= 1");
    if (!(mass > 0.0)) throw ConfigError("mass: must be positive");
    if (!(collision_radius > 0.0)) throw ConfigError("collision_radius: must be positive");
    if (!(arm_length > 0.0)) throw ConfigError("arm_length: must be positive");
    for (double i : inertia) {
      if (!(i > 0.0)) throw ConfigError("inertia: entries must be positive");
    }
    if (!(max_acceleration > 0.0)) throw ConfigError("max_acceleration: must be positive");
    if (!(max_rotor_thrust > 0.0)) throw ConfigError("max_rotor_thrust: must be positive");
    if (!(position_obs_scale > 0.0 && velocity_obs_scale > 0.0)) {
      throw ConfigError("position_obs_scale/velocity_obs_scale: must be positive");
    }
  }
};

struct DroneBody {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 angular_velocity = Vec3::Zero();  // body frame, rad/s
  double mass = 1.0;
  double arm_length = 0.2;
  double collision_radius = 0.3;
  bool alive = true;

  Vec3 up() const { return orientation * Vec3::UnitZ(); }
  // Angle between body z and world z, in [0, pi].
  double tilt() const {
    return std::acos(std::clamp(up().z(), -1.0, 1.0));
  }
};

inline constexpr std::size_t kAgentStateDim = 12;

struct SwarmState {
  std::vector<DroneBody> drones;
  std::vector<Vec3> targets;
  std::vector<bool> reached;
  std::size_t step_index = 0;
  double position_scale = 10.0;
  double velocity_scale = 5.0;

  std::size_t n_agents() const { return drones.size(); }

  std::size_t n_alive() const {
    return static_cast<std::size_t>(
        std::count_if(drones.begin(), drones.end(),
                      [](const DroneBody& d) { return d.alive; }));
  }

  double target_distance(std::size_t i) const {
    return (targets[i] - drones[i].position).norm();
  }

  // Index of the nearest other live drone.
  std::optional<std::size_t> nearest_other(std::size_t i) const {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < drones.size(); ++j) {
      if (j == i || !drones[j].alive) continue;
      const double d = (drones[j].position - drones[i].position).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  }

  std::vector<double> merged() const {
    std::vector<double> s(drones.size() * kAgentStateDim, 0.0);
    for (std::size_t i = 0; i < drones.size(); ++i) {
      const DroneBody& d = drones[i];
      if (!d.alive) continue;
      double* slot = s.data() + i * kAgentStateDim;
      const Vec3 rel = (targets[i] - d.position) / position_scale;
      const Vec3 vel = d.velocity / velocity_scale;
      const Vec3 up = d.up();
      Vec3 other = Vec3::Zero();
      if (auto j = nearest_other(i)) {
        other = (drones[*j].position - d.position) / position_scale;
      }
      for (int k = 0; k < 3; ++k) {
        slot[k] = rel[k];
        slot[3 + k] = vel[k];
        slot[6 + k] = up[k];
        slot[9 + k] = other[k];
      }
    }
    return s;
  }
};

struct StepResult {
  SwarmState next_state;
  std::vector<double> rewards;
  bool done = false;
  bool terminal = false;   // true termination (collision, all dead, all reached)
  bool truncated = false;  // step budget reached
  std::vector<bool> per_agent_done;
  std::vector<std::pair<std::size_t, std::size_t>> collisions;
  std::vector<double> distances;
};

// Pairs (i, j), i < j, of live drones whose spheres overlap.
inline std::vector<std::pair<std::size_t, std::size_t>> check_collisions(
    const SwarmState& state) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const auto& d = state.drones;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i].alive) continue;
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (!d[j].alive) continue;
      const double reach = d[i].collision_radius + d[j].collision_radius;
      if ((d[i].position - d[j].position).norm() < reach) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

// --- integrators ------------------------------------------------------------

// Clamps a commanded acceleration to |a| <= a_max.
inline Vec3 clamp_norm(const Vec3& a, double limit) {
  const double n = a.norm();
  return n > limit ? Vec3(a * (limit / n)) : a;
}

inline void integrate_direction(DroneBody& d, const Vec3& a_cmd, double dt,
                                double gravity) {
  d.velocity += (a_cmd + Vec3(0.0, 0.0, -gravity)) * dt;
  d.position += d.velocity * dt;
}

inline void integrate_motor(DroneBody& d, const std::array<double, 4>& thrust,
                            double dt, double gravity,
                            const std::array<double, 3>& inertia,
                            double drag_coef) {
  const double total = thrust[0] + thrust[1] + thrust[2] + thrust[3];
  const Vec3 force = d.orientation * Vec3(0.0, 0.0, total);
  d.velocity += (force / d.mass + Vec3(0.0, 0.0, -gravity)) * dt;
  d.position += d.velocity * dt;

  const Vec3 torque(d.arm_length * (thrust[1] - thrust[3]),
                    d.arm_length * (thrust[2] - thrust[0]),
                    drag_coef * (thrust[0] - thrust[1] + thrust[2] - thrust[3]));
  const Vec3 I(inertia[0], inertia[1], inertia[2]);
  const Vec3& w = d.angular_velocity;
  const Vec3 gyro = w.cross(I.cwiseProduct(w));
  d.angular_velocity += (torque - gyro).cwiseQuotient(I) * dt;

  const Vec3 rot = d.angular_velocity * dt;
  const double angle = rot.norm();
  if (angle > 0.0) {
    const Quat dq(Eigen::AngleAxisd(angle, rot / angle));
    d.orientation = d.orientation * dq;
  }
  d.orientation.normalize();
}

// --- environment --------------------------------------------------------------

class QuadEnv {
 public:
  explicit QuadEnv(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  const SwarmState& state() const { return state_; }
  SwarmState& mutable_state() { return state_; }
  std::size_t n_agents() const { return cfg_.n_agents; }
  std::size_t merged_dim() const { return cfg_.n_agents * kAgentStateDim; }
  std::size_t dim_a0() const { return cfg_.action_dim_per_agent(); }

  const SwarmState& reset(Rng& rng) {
    SwarmState s;
    s.position_scale = cfg_.position_obs_scale;
    s.velocity_scale = cfg_.velocity_obs_scale;
    s.drones.resize(cfg_.n_agents);
    s.targets.resize(cfg_.n_agents);
    s.reached.assign(cfg_.n_agents, false);
    for (DroneBody& d : s.drones) {
      d.mass = cfg_.mass;
      d.arm_length = cfg_.arm_length;
      d.collision_radius = cfg_.collision_radius;
    }
    std::vector<Vec3> placed;
    for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
      s.drones[i].position = place(placed, rng);
      placed.push_back(s.drones[i].position);
      s.targets[i] = place(placed, rng);
      placed.push_back(s.targets[i]);
    }
    for (std::size_t i = 0; i < retired_.size(); ++i) {
      if (retired_[i]) s.drones[i].alive = false;
    }
    state_ = std::move(s);
    return state_;
  }

  // Permanently removes agent i: it is terminated now and stays dead across
  // resets. Its slot remains in the merged layout, zero-filled.
  void retire_agent(std::size_t i) {
    if (i >= cfg_.n_agents) throw ShapeError("agent index out of range");
    if (retired_.empty()) retired_.assign(cfg_.n_agents, false);
    if (retired_[i]) throw StateError("agent " + std::to_string(i) + " is already retired");
    retired_[i] = true;
    if (i < state_.drones.size() && state_.drones[i].alive) terminate_agent(i);
  }

  bool retired(std::size_t i) const {
    return i < retired_.size() && retired_[i];
  }

  // Minimum distance kept between any two spawned drones/targets.
  double clearance() const { return 2.0 * (2.0 * cfg_.collision_radius); }

  // Maps one long policy action onto the configured control model and steps.
  // Actions are clamped here, at the environment boundary.
  StepResult step(std::span<const double> action) {
    const std::size_t d0 = dim_a0();
    if (action.size() != cfg_.n_agents * d0) {
      throw EnvironmentFault("action vector has " + std::to_string(action.size()) +
                             " entries, expected " +
                             std::to_string(cfg_.n_agents * d0));
    }
    check_finite(action);
    if (cfg_.control == ControlModel::kDirection) {
      std::vector<Vec3> cmds(cfg_.n_agents);
      for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
        Vec3 a(action[3 * i], action[3 * i + 1], action[3 * i + 2]);
        a *= cfg_.action_scale;
        if (cfg_.gravity_compensation) a.z() += cfg_.gravity;
        cmds[i] = a;
      }
      return step_direction(cmds, action);
    }
    std::vector<std::array<double, 4>> thrusts(cfg_.n_agents);
    for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        // [-1, 1] -> [0, T_max]; zero maps to half thrust.
        thrusts[i][k] = 0.5 * (action[4 * i + k] + 1.0) * cfg_.max_rotor_thrust;
      }
    }
    return step_motor(thrusts, action);
  }

  StepResult step_direction(const std::vector<Vec3>& a_cmd,
                            std::span<const double> raw_action = {}) {
    if (a_cmd.size() != cfg_.n_agents) throw EnvironmentFault("need one command per agent");
    for (const Vec3& a : a_cmd) {
      if (!a.allFinite()) throw EnvironmentFault("non-finite direction command");
    }
    const SwarmState prev = state_;
    for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
      DroneBody& d = state_.drones[i];
      if (!d.alive) continue;
      integrate_direction(d, clamp_norm(a_cmd[i], cfg_.max_acceleration),
                          cfg_.dt, cfg_.gravity);
    }
    return finish_step(prev, action_norms(raw_action, a_cmd));
  }

  StepResult step_motor(const std::vector<std::array<double, 4>>& thrusts,
                        std::span<const double> raw_action = {}) {
    if (thrusts.size() != cfg_.n_agents) throw EnvironmentFault("need one thrust set per agent");
    const SwarmState prev = state_;
    std::vector<double> norms(cfg_.n_agents, 0.0);
    for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
      std::array<double, 4> t = thrusts[i];
      for (double& v : t) {
        if (!std::isfinite(v)) throw EnvironmentFault("non-finite rotor thrust");
        v = std::clamp(v, 0.0, cfg_.max_rotor_thrust);
      }
      DroneBody& d = state_.drones[i];
      if (!d.alive) continue;
      integrate_motor(d, t, cfg_.dt, cfg_.gravity, cfg_.inertia,
                      cfg_.rotor_drag_coef);
      norms[i] = raw_norm(raw_action, i, 4,
                          Eigen::Vector4d(t[0], t[1], t[2], t[3]).norm());
    }
    return finish_step(prev, norms);
  }

  void terminate_agent(std::size_t i) {
    if (i >= state_.drones.size()) throw ShapeError("agent index out of range");
    DroneBody& d = state_.drones[i];
    if (!d.alive) {
      throw StateError("agent " + std::to_string(i) + " is already terminated");
    }
    d.alive = false;
    d.velocity.setZero();
    d.angular_velocity.setZero();
  }

  // Revives a terminated slot at a fresh random position (layout unchanged).
  void spawn_agent(std::size_t i, Rng& rng) {
    if (i >= state_.drones.size()) throw ShapeError("agent index out of range");
    DroneBody& d = state_.drones[i];
    if (d.alive) throw StateError("agent " + std::to_string(i) + " is alive");
    if (retired(i)) throw StateError("agent " + std::to_string(i) + " is retired");
    std::vector<Vec3> placed(state_.targets.begin(), state_.targets.end());
    for (const DroneBody& o : state_.drones) {
      if (o.alive) placed.push_back(o.position);
    }
    d = DroneBody{};
    d.mass = cfg_.mass;
    d.arm_length = cfg_.arm_length;
    d.collision_radius = cfg_.collision_radius;
    d.position = place(placed, rng);
    d.alive = true;
    state_.reached[i] = false;
  }

 private:
  static void check_finite(std::span<const double> a) {
    for (double v : a) {
      if (!std::isfinite(v)) throw EnvironmentFault("non-finite action");
    }
  }

  static double raw_norm(std::span<const double> raw, std::size_t i,
                         std::size_t width, double fallback) {
    if (raw.size() < (i + 1) * width) return fallback;
    double s = 0.0;
    for (std::size_t k = 0; k < width; ++k) s += raw[i * width + k] * raw[i * width + k];
    return std::sqrt(s);
  }

  std::vector<double> action_norms(std::span<const double> raw,
                                   const std::vector<Vec3>& cmds) const {
    std::vector<double> out(cmds.size());
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      out[i] = raw_norm(raw, i, 3, cmds[i].norm());
    }
    return out;
  }

  Vec3 place(const std::vector<Vec3>& others, Rng& rng) const {
    std::uniform_real_distribution<double> u(-cfg_.spawn_half_extent,
                                             cfg_.spawn_half_extent);
    const double clear = clearance();
    for (std::size_t attempt = 0; attempt < cfg_.placement_retries; ++attempt) {
      const double x = u(rng);
      const double y = u(rng);
      const double z = u(rng);
      const Vec3 p(x, y, z);
      bool ok = true;
      for (const Vec3& o : others) {
        if ((o - p).norm() < clear) {
          ok = false;
          break;
        }
      }
      if (ok) return p;
    }
    throw ConfigError("spawn_half_extent: cannot place " +
                      std::to_string(cfg_.n_agents) +
                      " drones and targets with the required clearance");
  }

  bool outside_arena(const DroneBody& d) const {
    return (d.position.array().abs() > cfg_.arena_half_extent).any();
  }

  StepResult finish_step(const SwarmState& prev,
                         const std::vector<double>& action_norm) {
    ++state_.step_index;
    const RewardConfig& rc = cfg_.reward;
    const std::size_t n = cfg_.n_agents;

    StepResult res;
    res.rewards.assign(n, 0.0);
    res.per_agent_done.assign(n, false);
    res.distances.assign(n, 0.0);
    res.collisions = check_collisions(state_);

    for (std::size_t i = 0; i < n; ++i) {
      const DroneBody& d = state_.drones[i];
      res.distances[i] = state_.target_distance(i);
      if (!prev.drones[i].alive) {
        res.per_agent_done[i] = true;
        continue;
      }
      double r = 0.0;
      if (cfg_.task == Task::kTargetNav) {
        r += rc.progress_gain * (prev.target_distance(i) - res.distances[i]);
        r -= rc.action_cost * action_norm[i];
        if (!state_.reached[i] && res.distances[i] < rc.reach_radius) {
          state_.reached[i] = true;
          r += rc.reach_bonus;
        }
      } else {
        r += rc.upright_gain * (1.0 - d.tilt() / std::numbers::pi);
        r -= rc.spin_cost * d.angular_velocity.norm();
      }
      res.rewards[i] = r;
    }

    for (const auto& [i, j] : res.collisions) {
      res.rewards[i] -= rc.collision_penalty;
      res.rewards[j] -= rc.collision_penalty;
    }

    for (std::size_t i = 0; i < n; ++i) {
      DroneBody& d = state_.drones[i];
      if (d.alive && outside_arena(d)) {
        res.rewards[i] -= rc.collision_penalty;
        d.alive = false;
        d.velocity.setZero();
        d.angular_velocity.setZero();
        res.per_agent_done[i] = true;
      }
    }

    const bool collided = !res.collisions.empty();
    const bool all_dead = state_.n_alive() == 0;
    const bool all_reached =
        cfg_.end_on_all_reached &&
        std::all_of(state_.reached.begin(), state_.reached.end(),
                    [](bool b) { return b; });
    res.terminal = collided || all_dead || all_reached;
    res.truncated = !res.terminal && state_.step_index >= cfg_.ep_length;
    res.done = res.terminal || res.truncated;
    if (res.terminal) res.per_agent_done.assign(n, true);
    res.next_state = state_;
    return res;
  }

  EnvConfig cfg_;
  SwarmState state_;
  std::vector<bool> retired_;
};

}  // namespace polymorph

#endif  // POLYMORPH_QUAD_ENV_HPP_
