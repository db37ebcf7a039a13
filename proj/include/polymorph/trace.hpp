#ifndef POLYMORPH_TRACE_HPP_
#define POLYMORPH_TRACE_HPP_

// JSON-lines trajectory traces, one object per environment step:
//   {"episode", "step", "drones": [{"position", "velocity",
//    "orientation" (w,x,y,z), "alive"}], "actions": [[...] per agent],
//    "rewards": [...], "collisions": [[i, j], ...]}

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "polymorph/errors.hpp"
#include "polymorph/policy.hpp"
#include "polymorph/quad_env.hpp"

namespace polymorph {

inline nlohmann::json trace_record(std::size_t episode, const StepResult& step,
                                   std::span<const double> action,
                                   std::size_t dim_a0) {
  nlohmann::json drones = nlohmann::json::array();
  for (const DroneBody& d : step.next_state.drones) {
    const Quat& q = d.orientation;
    drones.push_back(
        {{"position", {d.position.x(), d.position.y(), d.position.z()}},
         {"velocity", {d.velocity.x(), d.velocity.y(), d.velocity.z()}},
         {"orientation", {q.w(), q.x(), q.y(), q.z()}},
         {"alive", d.alive}});
  }
  nlohmann::json collisions = nlohmann::json::array();
  for (const auto& [i, j] : step.collisions) collisions.push_back({i, j});
  return {{"episode", episode},
          {"step", step.next_state.step_index},
          {"drones", drones},
          {"actions", split_action(action, step.next_state.n_agents(), dim_a0)},
          {"rewards", step.rewards},
          {"collisions", collisions}};
}

class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& path) : os_(path) {
    if (!os_) throw ConfigError("cannot write " + path.string());
  }
  void write(const nlohmann::json& record) { os_ << record.dump() << '\n'; }

 private:
  std::ofstream os_;
};

}  // namespace polymorph

#endif  // POLYMORPH_TRACE_HPP_
