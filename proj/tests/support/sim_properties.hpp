#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "random_scenarios.hpp"
#include "uatm/detour/detour.hpp"
#include "uatm/sim/sim.hpp"

namespace uatm::testing {

/// One random run: random scenario, a random detour when one applies, then
/// steps to the horizon at random speeds. Returns an empty string when
/// conservation, waypoint legality and plan adherence held throughout.
inline std::string check_sim_run(std::mt19937& rng) {
  using namespace uatm::sim;
  ScenarioDoc s = random_scenario(rng);
  SimState st = initial_state(s);
  if (auto order = random_order(rng, s)) {
    auto outcome = detour::run_detour(s, *order);
    if (!outcome.satisfiable()) return "detour unexpectedly UNSAT";
    schedule_plans(st, detour::frame_step_plans(s, outcome));
  }
  const std::size_t located = s.agents.size();
  auto describe = [&](const std::string& what) {
    return what + " at step " + std::to_string(st.current_step) + " in\n" + domain::to_json(s).dump();
  };
  while (st.current_step < s.world.horizon) {
    st = advance_step(st, std::uniform_int_distribution<Value>(1, 30)(rng));
    if (st.agents.size() + st.arrived.size() != located) return describe("conservation broken");
    for (const auto& [id, a] : st.agents) {
      if (st.arrived.contains(id)) return describe("arrived agent still in flight");
      Value n = s.world.waypoint_count(a.corridor);
      if (a.waypoint < 1 || a.waypoint > n) return describe("illegal waypoint for agent " + std::to_string(id));
      const auto& route = plan_at(st, id, st.current_step);
      if (std::find(route.begin(), route.end(), a.corridor) == route.end()) {
        return describe("agent " + std::to_string(id) + " left its plan");
      }
    }
  }
  return {};
}

}  // namespace uatm::testing
