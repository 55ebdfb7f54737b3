#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "uatm/detour/detour.hpp"
#include "uatm/domain/scenario.hpp"

namespace uatm::sim {

using domain::AgentState;
using domain::Edge;
using domain::ScenarioDoc;
using domain::Value;

inline constexpr double kDefaultCongestionThreshold = 0.8;

/// Listed in their within-step order.
enum class EventKind { moved, transitioned, arrived, congestion_alert, detour_applied };

std::string_view to_string(EventKind kind);

struct SimEvent {
  Value step = 0;
  EventKind kind = EventKind::moved;
  Value agent = 0;  // 0 for corridor-level events
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
};

/// {"type":"sim","step":..,"kind":..,"agent":..,"payload":{..}}
nlohmann::ordered_json to_json(const SimEvent& e);

struct SimState {
  ScenarioDoc scenario;  // as loaded
  Value current_step = 1;
  std::map<Value, AgentState> agents;  // in flight
  detour::PlanTable plans;             // every known route, scheduled ones included
  std::set<Value> arrived;
  std::vector<SimEvent> event_log;
  std::optional<double> congestion_threshold = kDefaultCongestionThreshold;

  friend bool operator==(const SimState&, const SimState&);
};

class SimError : public Error {
 public:
  using Error::Error;
};

SimState initial_state(const ScenarioDoc& s);

/// Route an agent follows at `step`: the latest route scheduled at or before it.
const std::vector<Edge>& plan_at(const SimState& state, Value agent, Value step);

/// Installs routes from a detour outcome for steps after the current one.
void schedule_plans(SimState& state, const detour::PlanTable& plans);

/// Moves every in-flight agent `speed` waypoints along its route for the next
/// step (scenario speed when unset). Pure; the new step's events are appended
/// to the returned state's log.
SimState advance_step(const SimState& state, std::optional<Value> speed = std::nullopt);
/// Events `advance_step` produced for its step.
std::vector<SimEvent> events_at(const SimState& state, Value step);

struct Occupancy {
  std::size_t count = 0;
  double fraction = 0;
};

/// Agents on the directed corridor; each orientation is counted on its own.
Occupancy occupancy(const SimState& state, Edge corridor);
/// One alert per occupied orientation at or above `threshold`, by corridor.
std::vector<SimEvent> detect_congestion(const SimState& state, double threshold = kDefaultCongestionThreshold);

/// The state as a scenario document at the current step (arrived agents
/// drop out of `agents` but stay on the roster).
ScenarioDoc snapshot(const SimState& state);

}  // namespace uatm::sim
