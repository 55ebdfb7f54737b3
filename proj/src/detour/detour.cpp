#include "uatm/detour/detour.hpp"

#include <algorithm>

namespace uatm::detour {

using reasoner::Program;
using domain::check_path;

namespace {

std::string num(Value v) { return std::to_string(v); }

// Replaces each $KEY in `text`. Keys are matched longest first.
std::string fill(std::string text, std::vector<std::pair<std::string, std::string>> vars) {
  std::sort(vars.begin(), vars.end(), [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  for (const auto& [key, value] : vars) {
    std::string pat = "$" + key;
    for (auto pos = text.find(pat); pos != std::string::npos; pos = text.find(pat, pos + value.size())) {
      text.replace(pos, pat.size(), value);
    }
  }
  return text;
}

const char* kSourceTarget = R"(
source(A, U) :- agent(A), plan(A, $S0, U, V), not plan(A, $S0, _, U).
target(A, V) :- agent(A), plan(A, $S0, U, V), not plan(A, $S0, V, _).
)";

const char* kFrame = R"(
plan(A, T+1, U, V) :- plan(A, T, U, V), step(T+1), not detour_request(A, T+1).
plan(A, T+1, U1, V1) :- plan(A, T, U, V), step(T+1), new_plan(T+1, U1, V1), detour_request(A, T+1).
)";

const char* kCoverage = R"(
covered_agent(A, TM) :- loc(A, T, U, V, WP), covered_wp(U, V, TM, WP).
covered_by_uatm$U(A) :- covered_agent(A, $U).
)";

const char* kLiteralUncovered = R"(
uncovered_by_uatm$U(A) :- not covered_agent(A, $U), loc(A, T, $P1, $P2, _), plan(A, T, $C1, $C2), target(A, $V).
covered(A, T, TM) :- loc(A, T, U, V, WP), uncovered_by_uatm$U(A), covered_wp(U, V, TM, WP).
)";

const char* kLiteralCoveredRequest = R"(
detour_request(A, T+1) :- covered_by_uatm$U(A), plan(A, T, U, V), plan(A, T, $C1, $C2), target(A, $V), edge_range($C1, $C2, P), not loc(A, T, $C1, $C2, P), not step(T-1).
)";

const char* kLiteralRelayRequest = R"(
detour_request(A, T+1) :- covered(A, T, TM), plan(A, T, U, V), plan(A, T, $C1, $C2), target(A, $V), edge_range($C1, $C2, P), not loc(A, T, $C1, $C2, P), not step(T-1).
)";

const char* kLiteralCheck = R"(
change_route(A, T) :- new_plan(T, U, V), plan(A, T, U, V), detour_request(A, T).
:- not change_route(A, T), new_plan(T, U, V), detour_request(A, T).
)";

// Eligibility: the closed corridor lies ahead of the agent's current corridor
// on its plan, the agent is not already on it, and it sits on the new route.
const char* kGeneralHeading = R"(
ahead(A, T, U, V) :- loc(A, T, U, V, _), plan(A, T, U, V).
ahead(A, T, V, W) :- ahead(A, T, U, V), plan(A, T, V, W).
on_route(A, T) :- loc(A, T, U, V, _), alt_route(T+1, U, V).
heading(A, T) :- ahead(A, T, $C1, $C2), not loc(A, T, $C1, $C2, _), target(A, $V), on_route(A, T).
)";

const char* kGeneralUncovered = R"(
uncovered_by_uatm$U(A) :- not covered_agent(A, $U), heading(A, T).
covered(A, T, TM) :- loc(A, T, U, V, WP), uncovered_by_uatm$U(A), covered_wp(U, V, TM, WP).
)";

const char* kGeneralCoveredRequest = R"(
detour_request(A, T+1) :- covered_by_uatm$U(A), heading(A, T), T = $S0.
)";

const char* kGeneralRelayRequest = R"(
detour_request(A, T+1) :- covered(A, T, TM), heading(A, T), T = $S0.
)";

// A change counts only when the step's plan is exactly the ordered route.
const char* kGeneralCheck = R"(
route_gap(A, T) :- detour_request(A, T), alt_route(T, U, V), not plan(A, T, U, V).
route_gap(A, T) :- detour_request(A, T), plan(A, T, U, V), not alt_route(T, U, V).
change_route(A, T) :- new_plan(T, U, V), plan(A, T, U, V), detour_request(A, T), not route_gap(A, T).
:- not change_route(A, T), new_plan(T, U, V), detour_request(A, T).
)";

std::string relation(const char* pred, Value uatm) { return std::string(pred) + num(uatm); }

}  // namespace

std::vector<Edge> order_path(std::vector<Edge> edges) {
  if (edges.empty()) return edges;
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<Edge> out;
  // The start is the only `from` that is nobody's `to`.
  std::vector<Edge> starts;
  for (const auto& e : edges) {
    bool entered = std::any_of(edges.begin(), edges.end(), [&](const Edge& f) { return f.to == e.from; });
    if (!entered) starts.push_back(e);
  }
  if (starts.size() != 1) throw domain::PlanError("plan edges do not form a single simple path");
  out.push_back(starts.front());
  while (out.size() < edges.size()) {
    auto next = std::find_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.from == out.back().to; });
    if (next == edges.end()) break;
    out.push_back(*next);
  }
  if (out.size() != edges.size()) throw domain::PlanError("plan edges do not form a single simple path");
  check_path(out);
  return out;
}

DetourOrder make_order(const ScenarioDoc& s, Edge closed, const std::vector<Value>& via,
                       std::optional<Value> activation_step, std::optional<Value> requesting_vertiport) {
  DetourOrder order;
  order.closed = closed;
  order.alt_route = domain::path_edges(via);
  order.activation_step = activation_step.value_or(s.step + 1);
  order.requesting_vertiport = requesting_vertiport.value_or(closed.to);
  auto responsible = s.world.responsible_uatms(order.requesting_vertiport);
  if (responsible.empty()) {
    throw OrderError("vertiport " + num(order.requesting_vertiport) + " has no responsible UATM");
  }
  order.issuing_uatm = responsible.front();
  validate_order(s, order);
  return order;
}

void validate_order(const ScenarioDoc& s, const DetourOrder& order) {
  const auto& w = s.world;
  if (!w.has_corridor(order.closed)) throw OrderError("closed corridor " + to_string(order.closed) + " is not declared");
  try {
    check_path(order.alt_route);
  } catch (const domain::PlanError& e) {
    throw OrderError(std::string("alternative route: ") + e.what());
  }
  for (const auto& e : order.alt_route) {
    if (!w.has_corridor(e)) throw OrderError("alternative route uses undeclared corridor " + to_string(e));
    if (e == order.closed || e == order.closed.reversed()) {
      throw OrderError("alternative route uses the closed corridor " + to_string(order.closed));
    }
  }
  if (order.activation_step != s.step + 1) {
    throw OrderError("activation step must be " + num(s.step + 1) + " (one step after the snapshot), got " +
                     num(order.activation_step));
  }
  if (order.activation_step > w.horizon) {
    throw OrderError("activation step " + num(order.activation_step) + " is beyond the horizon " + num(w.horizon));
  }
  if (!w.has_vertiport(order.requesting_vertiport)) {
    throw OrderError("requesting vertiport " + num(order.requesting_vertiport) + " is not declared");
  }
  if (!w.has_uatm(order.issuing_uatm)) throw OrderError("issuing UATM " + num(order.issuing_uatm) + " is not declared");
}

std::set<Value> covered_agents(const ScenarioDoc& s, Value uatm) {
  if (!s.world.has_uatm(uatm)) throw OrderError("unknown UATM " + num(uatm));
  Program p = domain::to_program(s);
  p.append(reasoner::parse_program(fill(kCoverage, {{"U", num(uatm)}})));
  std::set<Value> out;
  for (const auto& t : reasoner::query(reasoner::solve(p), relation("covered_by_uatm", uatm), 1)) out.insert(t[0]);
  return out;
}

std::set<Value> uncovered_heading_agents(const ScenarioDoc& s, Value uatm, Edge staging, Edge closed, Value target) {
  const auto& w = s.world;
  if (!w.has_uatm(uatm)) throw OrderError("unknown UATM " + num(uatm));
  if (!w.has_corridor(staging)) throw OrderError("unknown corridor " + to_string(staging));
  if (!w.has_corridor(closed)) throw OrderError("unknown corridor " + to_string(closed));
  Program p = domain::to_program(s);
  std::string rules = std::string(kSourceTarget) +
                      "covered_agent(A, TM) :- loc(A, T, U, V, WP), covered_wp(U, V, TM, WP).\n" + kLiteralUncovered;
  p.append(reasoner::parse_program(fill(rules, {{"S0", num(s.step)},
                                                {"U", num(uatm)},
                                                {"P1", num(staging.from)},
                                                {"P2", num(staging.to)},
                                                {"C1", num(closed.from)},
                                                {"C2", num(closed.to)},
                                                {"V", num(target)}})));
  std::set<Value> out;
  for (const auto& t : reasoner::query(reasoner::solve(p), relation("uncovered_by_uatm", uatm), 1)) out.insert(t[0]);
  return out;
}

Program build_detour_program(const ScenarioDoc& s, const DetourOrder& order, const BuildOptions& options) {
  validate_order(s, order);
  Program p = domain::to_program(s);
  Value at = order.activation_step;
  for (const auto& e : order.alt_route) p.add_fact(domain::fact("new_plan", {at, e.from, e.to}));

  std::vector<std::pair<std::string, std::string>> vars{{"S0", num(at - 1)},
                                                        {"U", num(order.issuing_uatm)},
                                                        {"C1", num(order.closed.from)},
                                                        {"C2", num(order.closed.to)},
                                                        {"V", num(order.requesting_vertiport)}};
  std::string rules = std::string(kSourceTarget) + kFrame + kCoverage;
  if (options.dialect == Dialect::literal) {
    if (at != 2) throw OrderError("the literal rule set only supports activation step 2");
    // The staging corridor is the route edge that enters the closed corridor.
    auto staging = std::find_if(order.alt_route.begin(), order.alt_route.end(),
                                [&](const Edge& e) { return e.to == order.closed.from; });
    if (staging == order.alt_route.end()) {
      throw OrderError("the literal rule set needs a route edge into vertiport " + num(order.closed.from));
    }
    vars.push_back({"P1", num(staging->from)});
    vars.push_back({"P2", num(staging->to)});
    if (options.relay) rules += kLiteralUncovered;
    rules += kLiteralCoveredRequest;
    if (options.relay) rules += kLiteralRelayRequest;
    rules += kLiteralCheck;
  } else {
    for (const auto& e : order.alt_route) p.add_fact(domain::fact("alt_route", {at, e.from, e.to}));
    rules += kGeneralHeading;
    if (options.relay) rules += kGeneralUncovered;
    rules += kGeneralCoveredRequest;
    if (options.relay) rules += kGeneralRelayRequest;
    rules += kGeneralCheck;
  }
  p.append(reasoner::parse_program(fill(rules, vars)));
  for (const char* show : {"covered_by_uatm", "uncovered_by_uatm"}) p.add_show(relation(show, order.issuing_uatm), 1);
  p.add_show("detour_request", 2);
  p.add_show("change_route", 2);
  return p;
}

DetourOutcome evaluate_detour(const Program& program, const DetourOrder& order) {
  reasoner::Model m = reasoner::solve(program);
  DetourOutcome out;
  out.status = m.status;
  out.violated = m.violated;
  out.activation_step = order.activation_step;
  for (const auto& t : reasoner::query(m, "detour_request", 2)) out.requests.insert({t[0], t[1]});
  for (const auto& t : reasoner::query(m, "change_route", 2)) out.changes.insert({t[0], t[1]});
  for (const auto& t : reasoner::query(m, relation("covered_by_uatm", order.issuing_uatm), 1)) out.covered.insert(t[0]);
  for (const auto& t : reasoner::query(m, relation("uncovered_by_uatm", order.issuing_uatm), 1)) {
    out.uncovered.insert(t[0]);
  }
  for (const auto& r : out.requests) {
    if (!out.changes.contains(r)) out.failed.insert(r.first);
  }
  std::map<Value, std::map<Value, std::vector<Edge>>> raw;
  for (const auto& t : reasoner::query(m, "plan", 4)) raw[t[0]][t[1]].push_back({t[2], t[3]});
  for (auto& [agent, steps] : raw) {
    for (auto& [step, edges] : steps) {
      // On the UNSAT path a plan may be a partial route; keep it unordered.
      try {
        out.plans[agent][step] = order_path(edges);
      } catch (const domain::PlanError&) {
        out.plans[agent][step] = edges;
      }
    }
  }
  return out;
}

DetourOutcome run_detour(const ScenarioDoc& s, const DetourOrder& order, const BuildOptions& options) {
  return evaluate_detour(build_detour_program(s, order, options), order);
}

PlanTable frame_step_plans(const ScenarioDoc& s, const DetourOutcome& outcome) {
  if (!outcome.satisfiable()) throw OrderError("cannot frame plans of an unsatisfiable detour outcome");
  PlanTable out;
  for (const auto& a : s.agents) {
    auto it = outcome.plans.find(a.state.agent);
    if (it == outcome.plans.end()) continue;
    for (const auto& [step, route] : it->second) {
      if (step >= s.step) out[a.state.agent][step] = route;
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const DetourOutcome& o) {
  using oj = nlohmann::ordered_json;
  auto pairs = [](const std::set<std::pair<Value, Value>>& s) {
    oj a = oj::array();
    for (auto [x, y] : s) a.push_back({{"agent", x}, {"step", y}});
    return a;
  };
  oj out;
  out["status"] = std::string(reasoner::to_string(o.status));
  out["activation_step"] = o.activation_step;
  out["requests"] = pairs(o.requests);
  out["changes"] = pairs(o.changes);
  out["covered"] = o.covered;
  out["uncovered"] = o.uncovered;
  out["violated"] = o.violated;
  out["failed"] = o.failed;
  oj plans = oj::object();
  for (const auto& [agent, steps] : o.plans) {
    oj per = oj::object();
    for (const auto& [step, route] : steps) {
      oj edges = oj::array();
      for (const auto& e : route) edges.push_back({e.from, e.to});
      per[std::to_string(step)] = edges;
    }
    plans[std::to_string(agent)] = per;
  }
  out["plans"] = plans;
  return out;
}

}  // namespace uatm::detour
