#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "uatm/detour/detour.hpp"
#include "uatm/domain/scenario.hpp"

namespace uatm::net {

using domain::Edge;
using domain::ScenarioDoc;
using domain::Value;
using Seq = std::uint64_t;

struct Endpoint {
  enum class Kind { manager, uatm, agent };
  Kind kind = Kind::uatm;
  Value id = 0;

  static Endpoint manager(Value v) { return {Kind::manager, v}; }
  static Endpoint uatm(Value u) { return {Kind::uatm, u}; }
  static Endpoint agent(Value a) { return {Kind::agent, a}; }

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

std::string to_string(const Endpoint& e);  // "manager:3", "uatm:1", "agent:5"
Endpoint parse_endpoint(const std::string& text);

enum class MsgKind { DetourRequest, LocateQuery, LocateResponse, RouteUpdate, RouteAck, ManagerReport };
std::string_view to_string(MsgKind k);
MsgKind parse_kind(const std::string& text);

struct Envelope {
  Seq seq = 0;
  Endpoint from;
  Endpoint to;
  MsgKind kind = MsgKind::DetourRequest;
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
  int issued_round = 0;
};

enum class Phase { Reasoning, Locating, Delivering, AwaitingAcks, Reporting, Done, Failed };
std::string_view to_string(Phase p);

struct ProtocolState {
  int id = 0;
  detour::DetourOrder request;
  Phase phase = Phase::Reasoning;
  detour::DetourOutcome outcome;
  std::set<Value> pending_acks;
  std::map<Value, std::optional<Value>> relay_map;  // agent -> relay UATM, nullopt when direct
  std::set<Value> acked;
  std::set<Value> unreachable;
  int deadline_round = 0;
  // locating: agent -> peers still to answer, and peers that said yes
  std::map<Value, std::set<Value>> locate_waiting;
  std::map<Value, std::set<Value>> locate_yes;
  std::map<Value, Seq> update_seq;  // agent -> RouteUpdate seq
  std::map<Value, std::vector<Edge>> delivered;  // routes agents accepted
  bool report_failed = false;
  bool finished() const { return phase == Phase::Done || phase == Phase::Failed; }
};

/// A message the bus drops instead of delivering. `drop_seq` matches one
/// envelope; the other fields, when set, must all match.
struct Fault {
  std::optional<Seq> seq;
  std::optional<MsgKind> kind;
  std::optional<Endpoint> from;
  std::optional<Endpoint> to;
  std::optional<Value> agent;

  bool matches(const Envelope& e) const;
};

/// Reads `[{"drop_seq": 7}, {"drop_match": {"kind": "RouteAck", "from": "agent:3"}}]`.
std::vector<Fault> parse_faults(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Fault& f);

class UnreachableAgentError : public Error {
 public:
  using Error::Error;
};

/// The asker itself when it covers the agent, otherwise the lowest-id UATM
/// whose coverage contains the agent's position.
Value locate_responsible_uatm(const ScenarioDoc& s, Value agent, Value asker);

struct NetConfig {
  int deadline_rounds = 5;
  Seq first_seq = 1;
  int first_round = 0;
  std::vector<Fault> faults;
  /// Test hook: edits the detour program before it is evaluated.
  std::function<void(reasoner::Program&)> tamper;
};

/// In-memory bus processed in synchronous rounds: everything sent in round r
/// is handled in round r + 1, in seq order.
class Network {
 public:
  explicit Network(NetConfig config = {});

  /// Queues the manager's DetourRequest; throws on invalid orders or when the
  /// vertiport has no responsible UATM. Returns the protocol id.
  int submit_manager_request(const ScenarioDoc& snapshot, Value vertiport, Edge closed,
                             const std::vector<Edge>& alt_route);

  /// Sends an arbitrary envelope in the current round (tests and tooling).
  Seq inject(Endpoint from, Endpoint to, MsgKind kind, nlohmann::ordered_json payload);

  /// Advances one round. Returns false when nothing remains to do.
  bool step_round();
  /// Steps until every protocol finished and the bus is empty.
  void run_until_quiet(int max_rounds = 1000);

  void add_fault(Fault f) { config_.faults.push_back(std::move(f)); }
  const std::vector<Fault>& faults() const { return config_.faults; }

  const ProtocolState& protocol(int id) const;
  const std::map<int, ProtocolState>& protocols() const { return protocols_; }
  bool busy() const;
  int round() const { return round_; }
  Seq next_seq() const { return next_seq_; }

  /// Every envelope sent so far (dropped ones included) in seq order.
  const std::vector<Envelope>& sent() const { return sent_; }
  /// One JSON object per envelope and protocol event, in emission order.
  const std::vector<nlohmann::ordered_json>& trace() const { return trace_; }
  /// Trace lines from index `from` on; lets callers pick up new output.
  std::vector<nlohmann::ordered_json> trace_since(std::size_t from) const;

 private:
  Seq send(Endpoint from, Endpoint to, MsgKind kind, nlohmann::ordered_json payload);
  void note(const ProtocolState* p, const std::string& event, nlohmann::ordered_json detail = nlohmann::ordered_json::object());
  void set_phase(ProtocolState& p, Phase phase);

  void deliver(const Envelope& e);
  void on_detour_request(const Envelope& e);
  void on_locate_query(const Envelope& e);
  void on_locate_response(const Envelope& e);
  void on_route_update(const Envelope& e);
  void on_route_ack(const Envelope& e);
  void on_manager_report(const Envelope& e);

  void finish_locating(ProtocolState& p);
  void dispatch_route_updates(ProtocolState& p);
  void send_report(ProtocolState& p, bool failed);
  void check_deadlines();
  ProtocolState* find_protocol(const Envelope& e);

  NetConfig config_;
  int round_ = 0;
  Seq next_seq_ = 1;
  int next_protocol_ = 1;
  std::vector<Envelope> queue_;
  std::vector<Envelope> sent_;
  std::vector<nlohmann::ordered_json> trace_;
  std::map<int, ProtocolState> protocols_;
  std::map<int, ScenarioDoc> snapshots_;
};

nlohmann::ordered_json to_json(const Envelope& e, bool dropped = false);

}  // namespace uatm::net
