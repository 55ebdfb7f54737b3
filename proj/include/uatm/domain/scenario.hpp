#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uatm/error.hpp"
#include "uatm/reasoner/program.hpp"

namespace uatm::domain {

using Value = reasoner::Value;

/// A directed corridor orientation (from, to).
struct Edge {
  Value from = 0;
  Value to = 0;

  Edge reversed() const { return {to, from}; }
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

std::string to_string(const Edge& e);  // "(1,2)"

struct Corridor {
  Value from = 0;
  Value to = 0;
  Value waypoints = 0;  // numbered 1..waypoints from `from` to `to`

  Edge edge() const { return {from, to}; }
};

struct CoverageSegment {
  Edge corridor;  // declared orientation
  Value uatm = 0;
  Value lo = 0;
  Value hi = 0;
};

struct AgentState {
  Value agent = 0;
  Value step = 0;
  Edge corridor;  // traversal direction
  Value waypoint = 0;
};

struct FlightPlan {
  Value agent = 0;
  Value step = 0;
  std::vector<Edge> edges;
};

struct WorldModel {
  std::vector<Value> vertiports;  // sorted
  std::vector<Value> uatms;       // sorted
  std::vector<Corridor> corridors;
  std::vector<std::pair<Value, Value>> vertiport_cover;  // (uatm, vertiport)
  std::vector<CoverageSegment> coverage;
  Value horizon = 1;

  bool has_vertiport(Value v) const;
  bool has_uatm(Value u) const;
  /// The corridor behind either orientation of `e`.
  const Corridor* corridor(Edge e) const;
  bool has_corridor(Edge e) const { return corridor(e) != nullptr; }
  /// Waypoint count of the corridor behind `e`; throws for unknown corridors.
  Value waypoint_count(Edge e) const;
  /// Coverage of `uatm` for `e` in traversal direction, mirrored for the
  /// reverse orientation. Segments may overlap; the result is sorted.
  std::vector<std::pair<Value, Value>> segments(Edge e, Value uatm) const;
  bool covers(Value uatm, Edge e, Value waypoint) const;
  /// UATMs whose coverage contains the position, ascending.
  std::vector<Value> covering_uatms(Edge e, Value waypoint) const;
  /// UATMs responsible for a vertiport via vertiport_cover, ascending.
  std::vector<Value> responsible_uatms(Value vertiport) const;
};

struct LocatedAgent {
  AgentState state;
  FlightPlan plan;  // plan at the snapshot step
};

struct ScenarioDoc {
  std::string name;
  std::string description;
  WorldModel world;
  std::vector<Value> roster;          // all agent ids, sorted; located ones included
  std::vector<LocatedAgent> agents;   // sorted by id
  Value step = 1;                     // snapshot step of the locations and plans
  Value speed = 1;                    // waypoints per step
  nlohmann::json faults = nlohmann::json::array();  // passed through to the protocol

  const LocatedAgent* find_agent(Value id) const;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class InvariantError : public Error {
 public:
  InvariantError(std::string entity, const std::string& rule);
  const std::string& entity() const { return entity_; }

 private:
  std::string entity_;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

ScenarioDoc load_scenario(std::string_view document);
ScenarioDoc load_scenario_file(const std::string& path);
/// Re-checks every invariant; load_scenario calls this.
void validate(const ScenarioDoc& doc);
/// Serializes with the loader's schema; load_scenario(dump(doc)) == doc.
nlohmann::ordered_json to_json(const ScenarioDoc& doc);

/// Ground fact base of the scenario, sorted and without duplicates.
/// covered_wp is expanded per waypoint. Only the declared orientation of a
/// corridor gets edge/2; a reverse orientation gets edge_range and
/// covered_wp when some agent's location or plan uses it.
std::vector<reasoner::Atom> to_facts(const ScenarioDoc& doc);
reasoner::Program to_program(const ScenarioDoc& doc);
reasoner::Atom fact(std::string predicate, std::initializer_list<Value> args);

/// Source and target of a simple path.
Value source_of(const FlightPlan& plan);
Value target_of(const FlightPlan& plan);
/// Throws PlanError unless `edges` is a non-empty connected simple path.
void check_path(const std::vector<Edge>& edges);
/// Vertex sequence of a connected path: [(1,2),(2,7)] -> 1,2,7.
std::vector<Value> path_vertices(const std::vector<Edge>& edges);
std::vector<Edge> path_edges(const std::vector<Value>& vertices);

}  // namespace uatm::domain
