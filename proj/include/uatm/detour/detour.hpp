#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "uatm/domain/scenario.hpp"
#include "uatm/reasoner/model.hpp"

namespace uatm::detour {

using domain::Edge;
using domain::ScenarioDoc;
using domain::Value;

struct DetourOrder {
  Edge closed;
  std::vector<Edge> alt_route;
  Value activation_step = 2;
  Value requesting_vertiport = 0;  // also the target agents must be heading to
  Value issuing_uatm = 0;
};

class OrderError : public Error {
 public:
  using Error::Error;
};

/// Fills in the defaults used by the CLI and the gateway: activation one step
/// after the snapshot, requesting vertiport = closed.to, issuing UATM = the
/// lowest UATM responsible for that vertiport.
DetourOrder make_order(const ScenarioDoc& s, Edge closed, const std::vector<Value>& via,
                       std::optional<Value> activation_step = std::nullopt,
                       std::optional<Value> requesting_vertiport = std::nullopt);
/// Throws OrderError when the order does not fit the scenario.
void validate_order(const ScenarioDoc& s, const DetourOrder& order);

enum class Dialect {
  /// Time-generic rules: eligibility follows the plan from the current
  /// corridor, requests fire only at activation_step - 1, and a route change
  /// counts only if the new plan is exactly the ordered route.
  general,
  /// The bundled rule text with the order's constants substituted. Only
  /// defined for activation step 2.
  literal,
};

struct BuildOptions {
  Dialect dialect = Dialect::general;
  bool relay = true;  // false: covered agents only, no rules for the relayed ones
};

using PlanTable = std::map<Value, std::map<Value, std::vector<Edge>>>;  // agent -> step -> route

struct DetourOutcome {
  std::set<std::pair<Value, Value>> requests;  // (agent, step)
  std::set<std::pair<Value, Value>> changes;
  std::set<Value> covered;
  std::set<Value> uncovered;
  reasoner::Status status = reasoner::Status::satisfiable;
  std::vector<std::string> violated;
  std::set<Value> failed;  // requested agents without a route change
  PlanTable plans;         // from the snapshot step to the horizon
  Value activation_step = 0;

  bool satisfiable() const { return status == reasoner::Status::satisfiable; }
};

std::set<Value> covered_agents(const ScenarioDoc& s, Value uatm);
std::set<Value> uncovered_heading_agents(const ScenarioDoc& s, Value uatm, Edge staging, Edge closed, Value target);

reasoner::Program build_detour_program(const ScenarioDoc& s, const DetourOrder& order,
                                       const BuildOptions& options = {});
DetourOutcome run_detour(const ScenarioDoc& s, const DetourOrder& order, const BuildOptions& options = {});
/// Evaluates an already built (possibly edited) detour program.
DetourOutcome evaluate_detour(const reasoner::Program& program, const DetourOrder& order);

/// Per-agent routes from the snapshot step on. Throws on an UNSAT outcome.
PlanTable frame_step_plans(const ScenarioDoc& s, const DetourOutcome& outcome);

/// Orders a set of edges forming one simple path; throws PlanError otherwise.
std::vector<Edge> order_path(std::vector<Edge> edges);

nlohmann::ordered_json to_json(const DetourOutcome& outcome);

}  // namespace uatm::detour
