#include "uatm/sim/sim.hpp"

#include <algorithm>
#include <cmath>

namespace uatm::sim {

using nlohmann::ordered_json;

namespace {

ordered_json edge_json(const Edge& e) { return ordered_json::array({e.from, e.to}); }

ordered_json route_json(const std::vector<Edge>& route) {
  ordered_json out = ordered_json::array();
  for (const auto& e : route) out.push_back(edge_json(e));
  return out;
}

int rank(EventKind k) { return static_cast<int>(k); }

std::pair<Value, Value> corridor_key(const SimEvent& e) {
  if (!e.payload.contains("corridor")) return {0, 0};
  return {e.payload["corridor"][0].get<Value>(), e.payload["corridor"][1].get<Value>()};
}

void sort_events(std::vector<SimEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const SimEvent& a, const SimEvent& b) {
    if (rank(a.kind) != rank(b.kind)) return rank(a.kind) < rank(b.kind);
    if (a.agent != b.agent) return a.agent < b.agent;
    return corridor_key(a) < corridor_key(b);
  });
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::moved: return "moved";
    case EventKind::transitioned: return "transitioned";
    case EventKind::arrived: return "arrived";
    case EventKind::congestion_alert: return "congestion_alert";
    case EventKind::detour_applied: return "detour_applied";
  }
  return "?";
}

ordered_json to_json(const SimEvent& e) {
  ordered_json out;
  out["type"] = "sim";
  out["step"] = e.step;
  out["kind"] = std::string(to_string(e.kind));
  out["agent"] = e.agent;
  out["payload"] = e.payload;
  return out;
}

bool operator==(const SimState& a, const SimState& b) {
  if (a.current_step != b.current_step || a.arrived != b.arrived || a.plans != b.plans) return false;
  if (a.congestion_threshold != b.congestion_threshold || a.agents.size() != b.agents.size()) return false;
  for (auto ia = a.agents.begin(), ib = b.agents.begin(); ia != a.agents.end(); ++ia, ++ib) {
    const auto& x = ia->second;
    const auto& y = ib->second;
    if (ia->first != ib->first || x.step != y.step || x.corridor != y.corridor || x.waypoint != y.waypoint) return false;
  }
  if (a.event_log.size() != b.event_log.size()) return false;
  for (std::size_t i = 0; i < a.event_log.size(); ++i) {
    if (to_json(a.event_log[i]) != to_json(b.event_log[i])) return false;
  }
  return domain::to_json(a.scenario) == domain::to_json(b.scenario);
}

SimState initial_state(const ScenarioDoc& s) {
  SimState st;
  st.scenario = s;
  st.current_step = s.step;
  for (const auto& a : s.agents) {
    st.agents[a.state.agent] = a.state;
    st.plans[a.state.agent][s.step] = a.plan.edges;
  }
  return st;
}

const std::vector<Edge>& plan_at(const SimState& state, Value agent, Value step) {
  auto it = state.plans.find(agent);
  if (it == state.plans.end() || it->second.empty()) throw SimError("agent " + std::to_string(agent) + " has no plan");
  auto at = it->second.upper_bound(step);
  if (at == it->second.begin()) throw SimError("agent " + std::to_string(agent) + " has no plan at step " + std::to_string(step));
  return std::prev(at)->second;
}

void schedule_plans(SimState& state, const detour::PlanTable& plans) {
  for (const auto& [agent, steps] : plans) {
    if (!state.agents.contains(agent)) continue;
    for (const auto& [step, route] : steps) {
      if (step <= state.current_step) continue;
      domain::check_path(route);
      state.plans[agent][step] = route;
    }
  }
}

SimState advance_step(const SimState& state, std::optional<Value> speed) {
  const auto& w = state.scenario.world;
  if (state.current_step >= w.horizon) {
    throw SimError("cannot step past the horizon (step " + std::to_string(state.current_step) + " of " +
                   std::to_string(w.horizon) + ")");
  }
  Value v = speed.value_or(state.scenario.speed);
  if (v < 1) throw SimError("speed must be at least 1");

  SimState next = state;
  Value t = state.current_step + 1;
  next.current_step = t;
  std::vector<SimEvent> events;

  for (auto it = next.agents.begin(); it != next.agents.end();) {
    Value id = it->first;
    AgentState& a = it->second;
    const auto& before = plan_at(state, id, state.current_step);
    const auto& route = plan_at(state, id, t);
    if (route != before) {
      events.push_back({t, EventKind::detour_applied, id, {{"from", route_json(before)}, {"to", route_json(route)}}});
    }
    // Carried-forward plans are recorded so every step has an explicit route.
    next.plans[id][t] = route;

    auto pos = std::find(route.begin(), route.end(), a.corridor);
    if (pos == route.end()) {
      throw SimError("agent " + std::to_string(id) + " is on " + domain::to_string(a.corridor) +
                     " which its plan at step " + std::to_string(t) + " does not contain");
    }
    Edge start = a.corridor;
    Value start_wp = a.waypoint;
    Value remaining = v;
    bool landed = false;
    std::vector<SimEvent> mine;
    while (true) {
      Value n = w.waypoint_count(a.corridor);
      if (a.waypoint + remaining <= n) {
        a.waypoint += remaining;
        break;
      }
      remaining = a.waypoint + remaining - n;
      ++pos;
      if (pos == route.end()) {
        landed = true;
        break;
      }
      Edge from = a.corridor;
      a.corridor = *pos;
      a.waypoint = 0;
      mine.push_back({t, EventKind::transitioned, id,
                      {{"from", edge_json(from)}, {"to", edge_json(a.corridor)}, {"waypoint", std::min(remaining, w.waypoint_count(a.corridor))}}});
    }
    if (landed) {
      events.push_back({t, EventKind::arrived, id, {{"vertiport", a.corridor.to}, {"corridor", edge_json(a.corridor)}}});
      next.arrived.insert(id);
      it = next.agents.erase(it);
      continue;
    }
    a.step = t;
    if (mine.empty()) {
      events.push_back({t, EventKind::moved, id,
                        {{"corridor", edge_json(start)}, {"from", start_wp}, {"to", a.waypoint}}});
    } else {
      mine.back().payload["waypoint"] = a.waypoint;
      for (auto& e : mine) events.push_back(std::move(e));
    }
    ++it;
  }

  if (next.congestion_threshold) {
    for (auto& e : detect_congestion(next, *next.congestion_threshold)) events.push_back(std::move(e));
  }
  sort_events(events);
  for (auto& e : events) next.event_log.push_back(std::move(e));
  return next;
}

std::vector<SimEvent> events_at(const SimState& state, Value step) {
  std::vector<SimEvent> out;
  for (const auto& e : state.event_log) {
    if (e.step == step) out.push_back(e);
  }
  return out;
}

Occupancy occupancy(const SimState& state, Edge corridor) {
  Value n = state.scenario.world.waypoint_count(corridor);
  Occupancy o;
  for (const auto& [id, a] : state.agents) o.count += a.corridor == corridor;
  o.fraction = static_cast<double>(o.count) / static_cast<double>(n);
  return o;
}

std::vector<SimEvent> detect_congestion(const SimState& state, double threshold) {
  if (!(threshold > 0 && threshold <= 1)) throw SimError("congestion threshold must be in (0, 1]");
  std::vector<SimEvent> out;
  std::set<Edge> seen;
  for (const auto& [id, a] : state.agents) seen.insert(a.corridor);
  for (const Edge& e : seen) {
    Occupancy o = occupancy(state, e);
    if (o.fraction + 1e-12 < threshold) continue;
    out.push_back({state.current_step, EventKind::congestion_alert, 0,
                   {{"corridor", edge_json(e)},
                    {"count", o.count},
                    {"fraction", std::round(o.fraction * 1e6) / 1e6},
                    {"threshold", threshold},
                    {"suggestion", "close_corridor"}}});
  }
  return out;
}

ScenarioDoc snapshot(const SimState& state) {
  ScenarioDoc doc = state.scenario;
  doc.step = state.current_step;
  doc.agents.clear();
  for (const auto& [id, a] : state.agents) {
    domain::LocatedAgent la;
    la.state = a;
    la.state.step = state.current_step;
    la.plan.agent = id;
    la.plan.step = state.current_step;
    la.plan.edges = plan_at(state, id, state.current_step);
    doc.agents.push_back(std::move(la));
  }
  return doc;
}

}  // namespace uatm::sim
