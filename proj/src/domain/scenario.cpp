#include "uatm/domain/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace uatm::domain {

using nlohmann::json;
using reasoner::Atom;
using reasoner::Term;

std::string to_string(const Edge& e) {
  return "(" + std::to_string(e.from) + "," + std::to_string(e.to) + ")";
}

SchemaError::SchemaError(std::string path, const std::string& message)
    : Error("schema error at " + (path.empty() ? std::string("/") : path) + ": " + message),
      path_(std::move(path)) {}

InvariantError::InvariantError(std::string entity, const std::string& rule)
    : Error(entity + ": " + rule), entity_(std::move(entity)) {}

bool WorldModel::has_vertiport(Value v) const {
  return std::binary_search(vertiports.begin(), vertiports.end(), v);
}

bool WorldModel::has_uatm(Value u) const { return std::binary_search(uatms.begin(), uatms.end(), u); }

const Corridor* WorldModel::corridor(Edge e) const {
  for (const auto& c : corridors) {
    if (c.edge() == e || c.edge() == e.reversed()) return &c;
  }
  return nullptr;
}

Value WorldModel::waypoint_count(Edge e) const {
  const Corridor* c = corridor(e);
  if (!c) throw InvariantError("corridor " + to_string(e), "not declared");
  return c->waypoints;
}

std::vector<std::pair<Value, Value>> WorldModel::segments(Edge e, Value uatm) const {
  const Corridor* c = corridor(e);
  std::vector<std::pair<Value, Value>> out;
  if (!c) return out;
  bool mirrored = c->edge() != e;
  for (const auto& s : coverage) {
    if (s.uatm != uatm || s.corridor != c->edge()) continue;
    if (mirrored) {
      out.emplace_back(c->waypoints + 1 - s.hi, c->waypoints + 1 - s.lo);
    } else {
      out.emplace_back(s.lo, s.hi);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool WorldModel::covers(Value uatm, Edge e, Value waypoint) const {
  for (auto [lo, hi] : segments(e, uatm)) {
    if (lo <= waypoint && waypoint <= hi) return true;
  }
  return false;
}

std::vector<Value> WorldModel::covering_uatms(Edge e, Value waypoint) const {
  std::vector<Value> out;
  for (Value u : uatms) {
    if (covers(u, e, waypoint)) out.push_back(u);
  }
  return out;
}

std::vector<Value> WorldModel::responsible_uatms(Value vertiport) const {
  std::vector<Value> out;
  for (auto [u, v] : vertiport_cover) {
    if (v == vertiport) out.push_back(u);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const LocatedAgent* ScenarioDoc::find_agent(Value id) const {
  auto it = std::lower_bound(agents.begin(), agents.end(), id,
                             [](const LocatedAgent& a, Value v) { return a.state.agent < v; });
  return it != agents.end() && it->state.agent == id ? &*it : nullptr;
}

// ---------------------------------------------------------------- paths

void check_path(const std::vector<Edge>& edges) {
  if (edges.empty()) throw PlanError("plan is empty");
  std::set<Value> seen{edges.front().from};
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (e.from == e.to) throw PlanError("plan edge " + to_string(e) + " is a self loop");
    if (i > 0 && edges[i - 1].to != e.from) {
      throw PlanError("plan is not a path: " + to_string(edges[i - 1]) + " is followed by " + to_string(e));
    }
    if (!seen.insert(e.to).second) {
      throw PlanError("plan revisits vertiport " + std::to_string(e.to));
    }
  }
}

Value source_of(const FlightPlan& plan) {
  check_path(plan.edges);
  return plan.edges.front().from;
}

Value target_of(const FlightPlan& plan) {
  check_path(plan.edges);
  return plan.edges.back().to;
}

std::vector<Value> path_vertices(const std::vector<Edge>& edges) {
  std::vector<Value> out;
  if (edges.empty()) return out;
  out.push_back(edges.front().from);
  for (const auto& e : edges) out.push_back(e.to);
  return out;
}

std::vector<Edge> path_edges(const std::vector<Value>& vertices) {
  std::vector<Edge> out;
  for (std::size_t i = 1; i < vertices.size(); ++i) out.push_back({vertices[i - 1], vertices[i]});
  return out;
}

// ---------------------------------------------------------------- loading

namespace {

class Reader {
 public:
  static Value integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
    return j.get<Value>();
  }

  static const json& array(const json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path, "expected an array");
    return j;
  }

  static const json& object(const json& j, const std::string& path, std::initializer_list<const char*> required,
                            std::initializer_list<const char*> optional = {}) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    for (const char* k : required) {
      if (!j.contains(k)) throw SchemaError(path + "/" + k, "missing required key");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto known = [&](std::initializer_list<const char*> keys) {
        return std::any_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; });
      };
      if (!known(required) && !known(optional)) throw SchemaError(path + "/" + it.key(), "unknown key");
    }
    return j;
  }

  static std::vector<Value> integers(const json& j, const std::string& path) {
    std::vector<Value> out;
    for (std::size_t i = 0; i < array(j, path).size(); ++i) out.push_back(integer(j[i], path + "/" + std::to_string(i)));
    return out;
  }

  static Edge edge_pair(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) throw SchemaError(path, "expected [from, to]");
    return {integer(j[0], path + "/0"), integer(j[1], path + "/1")};
  }
};

std::string at(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

}  // namespace

ScenarioDoc load_scenario(std::string_view document) {
  json root;
  try {
    root = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("not valid JSON: ") + e.what());
  }
  Reader::object(root, "", {"vertiports", "uatms", "horizon", "corridors", "vertiport_cover", "coverage", "agents"},
                 {"name", "description", "agent_roster", "speed", "faults", "step"});

  ScenarioDoc doc;
  if (root.contains("name")) {
    if (!root["name"].is_string()) throw SchemaError("/name", "expected a string");
    doc.name = root["name"].get<std::string>();
  }
  if (root.contains("description")) {
    if (!root["description"].is_string()) throw SchemaError("/description", "expected a string");
    doc.description = root["description"].get<std::string>();
  }

  WorldModel& w = doc.world;
  w.vertiports = Reader::integers(root["vertiports"], "/vertiports");
  w.uatms = Reader::integers(root["uatms"], "/uatms");
  w.horizon = Reader::integer(root["horizon"], "/horizon");

  const json& cs = Reader::array(root["corridors"], "/corridors");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    auto p = at("/corridors", i);
    Reader::object(cs[i], p, {"from", "to", "waypoints"});
    w.corridors.push_back({Reader::integer(cs[i]["from"], p + "/from"), Reader::integer(cs[i]["to"], p + "/to"),
                           Reader::integer(cs[i]["waypoints"], p + "/waypoints")});
  }

  const json& vc = Reader::array(root["vertiport_cover"], "/vertiport_cover");
  for (std::size_t i = 0; i < vc.size(); ++i) {
    auto p = at("/vertiport_cover", i);
    Reader::object(vc[i], p, {"uatm", "vertiport"});
    w.vertiport_cover.emplace_back(Reader::integer(vc[i]["uatm"], p + "/uatm"),
                                   Reader::integer(vc[i]["vertiport"], p + "/vertiport"));
  }

  const json& cov = Reader::array(root["coverage"], "/coverage");
  for (std::size_t i = 0; i < cov.size(); ++i) {
    auto p = at("/coverage", i);
    Reader::object(cov[i], p, {"from", "to", "uatm", "lo", "hi"});
    CoverageSegment s;
    s.corridor = {Reader::integer(cov[i]["from"], p + "/from"), Reader::integer(cov[i]["to"], p + "/to")};
    s.uatm = Reader::integer(cov[i]["uatm"], p + "/uatm");
    s.lo = Reader::integer(cov[i]["lo"], p + "/lo");
    s.hi = Reader::integer(cov[i]["hi"], p + "/hi");
    w.coverage.push_back(s);
  }

  if (root.contains("step")) doc.step = Reader::integer(root["step"], "/step");
  if (root.contains("speed")) doc.speed = Reader::integer(root["speed"], "/speed");
  if (root.contains("faults")) doc.faults = Reader::array(root["faults"], "/faults");

  const json& as = Reader::array(root["agents"], "/agents");
  for (std::size_t i = 0; i < as.size(); ++i) {
    auto p = at("/agents", i);
    Reader::object(as[i], p, {"id", "corridor", "waypoint", "plan"});
    LocatedAgent a;
    a.state.agent = Reader::integer(as[i]["id"], p + "/id");
    a.state.step = doc.step;
    Reader::object(as[i]["corridor"], p + "/corridor", {"from", "to"});
    a.state.corridor = {Reader::integer(as[i]["corridor"]["from"], p + "/corridor/from"),
                        Reader::integer(as[i]["corridor"]["to"], p + "/corridor/to")};
    a.state.waypoint = Reader::integer(as[i]["waypoint"], p + "/waypoint");
    a.plan.agent = a.state.agent;
    a.plan.step = doc.step;
    const json& plan = Reader::array(as[i]["plan"], p + "/plan");
    for (std::size_t k = 0; k < plan.size(); ++k) a.plan.edges.push_back(Reader::edge_pair(plan[k], at(p + "/plan", k)));
    doc.agents.push_back(std::move(a));
  }

  if (root.contains("agent_roster")) {
    doc.roster = Reader::integers(root["agent_roster"], "/agent_roster");
  } else {
    for (const auto& a : doc.agents) doc.roster.push_back(a.state.agent);
  }

  std::sort(w.vertiports.begin(), w.vertiports.end());
  std::sort(w.uatms.begin(), w.uatms.end());
  std::sort(doc.roster.begin(), doc.roster.end());
  std::sort(doc.agents.begin(), doc.agents.end(),
            [](const LocatedAgent& a, const LocatedAgent& b) { return a.state.agent < b.state.agent; });
  validate(doc);
  return doc;
}

ScenarioDoc load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenario " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return load_scenario(text.str());
}

void validate(const ScenarioDoc& doc) {
  const WorldModel& w = doc.world;
  auto unique = [](const std::vector<Value>& v, const std::string& what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] == v[i - 1]) throw InvariantError(what + " " + std::to_string(v[i]), "declared twice");
    }
  };
  unique(w.vertiports, "vertiport");
  unique(w.uatms, "uatm");
  unique(doc.roster, "agent");
  if (w.horizon < 1) throw InvariantError("world", "horizon must be at least 1");
  if (doc.step < 1 || doc.step > w.horizon) {
    throw InvariantError("scenario", "snapshot step " + std::to_string(doc.step) + " outside 1.." + std::to_string(w.horizon));
  }
  if (doc.speed < 1) throw InvariantError("scenario", "speed must be at least 1");

  for (std::size_t i = 0; i < w.corridors.size(); ++i) {
    const Corridor& c = w.corridors[i];
    std::string name = "corridor " + to_string(c.edge());
    if (c.from == c.to) throw InvariantError(name, "endpoints must differ");
    if (!w.has_vertiport(c.from) || !w.has_vertiport(c.to)) throw InvariantError(name, "endpoint is not a declared vertiport");
    if (c.waypoints < 1) throw InvariantError(name, "needs at least one waypoint");
    for (std::size_t j = 0; j < i; ++j) {
      if (w.corridors[j].edge() == c.edge() || w.corridors[j].edge() == c.edge().reversed()) {
        throw InvariantError(name, "declared twice");
      }
    }
  }
  for (auto [u, v] : w.vertiport_cover) {
    std::string name = "vertiport_cover (" + std::to_string(u) + "," + std::to_string(v) + ")";
    if (!w.has_uatm(u)) throw InvariantError(name, "uatm not declared");
    if (!w.has_vertiport(v)) throw InvariantError(name, "vertiport not declared");
  }
  for (const auto& s : w.coverage) {
    std::string name = "coverage of uatm " + std::to_string(s.uatm) + " on " + to_string(s.corridor);
    const Corridor* c = w.corridor(s.corridor);
    if (!c || c->edge() != s.corridor) throw InvariantError(name, "corridor not declared in this orientation");
    if (!w.has_uatm(s.uatm)) throw InvariantError(name, "uatm not declared");
    if (s.lo < 1 || s.lo > s.hi || s.hi > c->waypoints) {
      throw InvariantError(name, "segment " + std::to_string(s.lo) + ".." + std::to_string(s.hi) + " outside 1.." +
                                     std::to_string(c->waypoints));
    }
  }

  for (std::size_t i = 0; i < doc.agents.size(); ++i) {
    const auto& a = doc.agents[i];
    std::string name = "agent " + std::to_string(a.state.agent);
    if (i > 0 && doc.agents[i - 1].state.agent == a.state.agent) throw InvariantError(name, "located twice");
    if (!std::binary_search(doc.roster.begin(), doc.roster.end(), a.state.agent)) {
      throw InvariantError(name, "missing from agent_roster");
    }
    const Corridor* c = w.corridor(a.state.corridor);
    if (!c) throw InvariantError(name, "corridor " + to_string(a.state.corridor) + " not declared");
    if (a.state.waypoint < 1 || a.state.waypoint > c->waypoints) {
      throw InvariantError(name, "waypoint " + std::to_string(a.state.waypoint) + " outside 1.." +
                                     std::to_string(c->waypoints) + " of corridor " + to_string(a.state.corridor));
    }
    try {
      check_path(a.plan.edges);
    } catch (const PlanError& e) {
      throw InvariantError(name, e.what());
    }
    for (const auto& e : a.plan.edges) {
      if (!w.has_corridor(e)) throw InvariantError(name, "plan edge " + to_string(e) + " is not a corridor");
    }
    if (std::find(a.plan.edges.begin(), a.plan.edges.end(), a.state.corridor) == a.plan.edges.end()) {
      throw InvariantError(name, "plan does not contain its corridor " + to_string(a.state.corridor));
    }
  }
}

nlohmann::ordered_json to_json(const ScenarioDoc& doc) {
  using oj = nlohmann::ordered_json;
  const WorldModel& w = doc.world;
  oj out;
  if (!doc.name.empty()) out["name"] = doc.name;
  if (!doc.description.empty()) out["description"] = doc.description;
  out["vertiports"] = w.vertiports;
  out["uatms"] = w.uatms;
  out["horizon"] = w.horizon;
  out["step"] = doc.step;
  out["speed"] = doc.speed;
  out["corridors"] = oj::array();
  for (const auto& c : w.corridors) out["corridors"].push_back({{"from", c.from}, {"to", c.to}, {"waypoints", c.waypoints}});
  out["vertiport_cover"] = oj::array();
  for (auto [u, v] : w.vertiport_cover) out["vertiport_cover"].push_back({{"uatm", u}, {"vertiport", v}});
  out["coverage"] = oj::array();
  for (const auto& s : w.coverage) {
    out["coverage"].push_back(
        {{"from", s.corridor.from}, {"to", s.corridor.to}, {"uatm", s.uatm}, {"lo", s.lo}, {"hi", s.hi}});
  }
  out["agent_roster"] = doc.roster;
  out["agents"] = oj::array();
  for (const auto& a : doc.agents) {
    oj plan = oj::array();
    for (const auto& e : a.plan.edges) plan.push_back({e.from, e.to});
    out["agents"].push_back({{"id", a.state.agent},
                             {"corridor", {{"from", a.state.corridor.from}, {"to", a.state.corridor.to}}},
                             {"waypoint", a.state.waypoint},
                             {"plan", plan}});
  }
  out["faults"] = oj::parse(doc.faults.dump());
  return out;
}

// ---------------------------------------------------------------- facts

Atom fact(std::string predicate, std::initializer_list<Value> args) {
  Atom a{std::move(predicate), {}};
  for (Value v : args) a.args.push_back(Term::constant(v));
  return a;
}

std::vector<Atom> to_facts(const ScenarioDoc& doc) {
  const WorldModel& w = doc.world;
  std::vector<Atom> out;
  for (Value a : doc.roster) out.push_back(fact("agent", {a}));
  for (Value u : w.uatms) out.push_back(fact("uatm", {u}));
  for (Value v : w.vertiports) out.push_back(fact("vp", {v}));
  for (auto [u, v] : w.vertiport_cover) out.push_back(fact("cover", {u, v}));

  std::set<Edge> orientations;
  for (const auto& c : w.corridors) {
    out.push_back(fact("edge", {c.from, c.to}));
    orientations.insert(c.edge());
  }
  for (const auto& a : doc.agents) {
    orientations.insert(a.state.corridor);
    orientations.insert(a.plan.edges.begin(), a.plan.edges.end());
  }
  for (const Edge& e : orientations) {
    Value n = w.waypoint_count(e);
    for (Value p = 1; p <= n; ++p) out.push_back(fact("edge_range", {e.from, e.to, p}));
    for (Value u : w.uatms) {
      for (auto [lo, hi] : w.segments(e, u)) {
        for (Value p = lo; p <= hi; ++p) out.push_back(fact("covered_wp", {e.from, e.to, u, p}));
      }
    }
  }

  for (const auto& a : doc.agents) {
    const auto& s = a.state;
    out.push_back(fact("loc", {s.agent, s.step, s.corridor.from, s.corridor.to, s.waypoint}));
    for (const auto& e : a.plan.edges) out.push_back(fact("plan", {s.agent, a.plan.step, e.from, e.to}));
  }
  for (Value t = 1; t <= w.horizon; ++t) out.push_back(fact("step", {t}));

  auto key = [](const Atom& a) {
    std::vector<Value> args;
    for (const auto& t : a.args) args.push_back(t.value);
    return std::make_pair(std::cref(a.predicate), args);
  };
  std::sort(out.begin(), out.end(), [&](const Atom& x, const Atom& y) { return key(x) < key(y); });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

reasoner::Program to_program(const ScenarioDoc& doc) {
  reasoner::Program p;
  for (auto& a : to_facts(doc)) p.add_fact(std::move(a));
  return p;
}

}  // namespace uatm::domain
