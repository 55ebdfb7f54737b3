#include "uatm/net/protocol.hpp"

#include <algorithm>

namespace uatm::net {

using nlohmann::ordered_json;

namespace {

ordered_json route_json(const std::vector<Edge>& route) {
  ordered_json out = ordered_json::array();
  for (const auto& e : route) out.push_back({e.from, e.to});
  return out;
}

std::vector<Edge> route_from(const ordered_json& j) {
  std::vector<Edge> out;
  for (const auto& e : j) out.push_back({e[0].get<Value>(), e[1].get<Value>()});
  return out;
}

template <class Set>
ordered_json ids(const Set& s) {
  ordered_json a = ordered_json::array();
  for (const auto& v : s) a.push_back(v);
  return a;
}

}  // namespace

std::string to_string(const Endpoint& e) {
  switch (e.kind) {
    case Endpoint::Kind::manager: return "manager:" + std::to_string(e.id);
    case Endpoint::Kind::uatm: return "uatm:" + std::to_string(e.id);
    case Endpoint::Kind::agent: return "agent:" + std::to_string(e.id);
  }
  return "?";
}

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw Error("endpoint '" + text + "' is not kind:id");
  std::string kind = text.substr(0, colon);
  Value id = 0;
  try {
    std::size_t used = 0;
    id = std::stoll(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw Error("");
  } catch (const std::exception&) {
    throw Error("endpoint '" + text + "' has no numeric id");
  }
  if (kind == "manager") return Endpoint::manager(id);
  if (kind == "uatm") return Endpoint::uatm(id);
  if (kind == "agent") return Endpoint::agent(id);
  throw Error("unknown endpoint kind '" + kind + "'");
}

std::string_view to_string(MsgKind k) {
  switch (k) {
    case MsgKind::DetourRequest: return "DetourRequest";
    case MsgKind::LocateQuery: return "LocateQuery";
    case MsgKind::LocateResponse: return "LocateResponse";
    case MsgKind::RouteUpdate: return "RouteUpdate";
    case MsgKind::RouteAck: return "RouteAck";
    case MsgKind::ManagerReport: return "ManagerReport";
  }
  return "?";
}

MsgKind parse_kind(const std::string& text) {
  for (MsgKind k : {MsgKind::DetourRequest, MsgKind::LocateQuery, MsgKind::LocateResponse, MsgKind::RouteUpdate,
                    MsgKind::RouteAck, MsgKind::ManagerReport}) {
    if (to_string(k) == text) return k;
  }
  throw Error("unknown message kind '" + text + "'");
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Reasoning: return "Reasoning";
    case Phase::Locating: return "Locating";
    case Phase::Delivering: return "Delivering";
    case Phase::AwaitingAcks: return "AwaitingAcks";
    case Phase::Reporting: return "Reporting";
    case Phase::Done: return "Done";
    case Phase::Failed: return "Failed";
  }
  return "?";
}

bool Fault::matches(const Envelope& e) const {
  if (seq && *seq != e.seq) return false;
  if (kind && *kind != e.kind) return false;
  if (from && *from != e.from) return false;
  if (to && *to != e.to) return false;
  if (agent && (!e.payload.contains("agent") || e.payload["agent"].get<Value>() != *agent)) return false;
  return seq || kind || from || to || agent;
}

std::vector<Fault> parse_faults(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("faults must be an array");
  std::vector<Fault> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& f = j[i];
    std::string at = "faults[" + std::to_string(i) + "]";
    if (!f.is_object() || f.size() != 1) throw Error(at + ": expected {\"drop_seq\": n} or {\"drop_match\": {...}}");
    Fault fault;
    if (f.contains("drop_seq")) {
      if (!f["drop_seq"].is_number_unsigned()) throw Error(at + ".drop_seq: expected a positive integer");
      fault.seq = f["drop_seq"].get<Seq>();
    } else if (f.contains("drop_match")) {
      const auto& m = f["drop_match"];
      if (!m.is_object() || m.empty()) throw Error(at + ".drop_match: expected a non-empty object");
      for (auto it = m.begin(); it != m.end(); ++it) {
        const std::string& k = it.key();
        if (k == "agent") {
          if (!it->is_number_integer()) throw Error(at + ".drop_match.agent: expected an integer");
          fault.agent = it->get<Value>();
          continue;
        }
        if (!it->is_string()) throw Error(at + ".drop_match." + k + ": expected a string");
        if (k == "kind") {
          fault.kind = parse_kind(it->get<std::string>());
        } else if (k == "from") {
          fault.from = parse_endpoint(it->get<std::string>());
        } else if (k == "to") {
          fault.to = parse_endpoint(it->get<std::string>());
        } else {
          throw Error(at + ".drop_match: unknown key '" + k + "'");
        }
      }
    } else {
      throw Error(at + ": unknown fault type");
    }
    out.push_back(fault);
  }
  return out;
}

ordered_json to_json(const Fault& f) {
  if (f.seq) return {{"drop_seq", *f.seq}};
  ordered_json m = ordered_json::object();
  if (f.kind) m["kind"] = std::string(to_string(*f.kind));
  if (f.from) m["from"] = to_string(*f.from);
  if (f.to) m["to"] = to_string(*f.to);
  if (f.agent) m["agent"] = *f.agent;
  return {{"drop_match", m}};
}

ordered_json to_json(const Envelope& e, bool dropped) {
  ordered_json out;
  out["type"] = "envelope";
  out["seq"] = e.seq;
  out["round"] = e.issued_round;
  out["from"] = to_string(e.from);
  out["to"] = to_string(e.to);
  out["kind"] = std::string(to_string(e.kind));
  out["payload"] = e.payload;
  if (dropped) out["dropped"] = true;
  return out;
}

Value locate_responsible_uatm(const ScenarioDoc& s, Value agent, Value asker) {
  const auto* a = s.find_agent(agent);
  if (!a) throw UnreachableAgentError("agent " + std::to_string(agent) + " is not in flight");
  if (s.world.covers(asker, a->state.corridor, a->state.waypoint)) return asker;
  auto covering = s.world.covering_uatms(a->state.corridor, a->state.waypoint);
  if (covering.empty()) {
    throw UnreachableAgentError("no UATM covers agent " + std::to_string(agent) + " at waypoint " +
                                std::to_string(a->state.waypoint) + " of " + domain::to_string(a->state.corridor));
  }
  return covering.front();
}

// ---------------------------------------------------------------- network

Network::Network(NetConfig config)
    : config_(std::move(config)), round_(config_.first_round), next_seq_(config_.first_seq) {}

Seq Network::send(Endpoint from, Endpoint to, MsgKind kind, ordered_json payload) {
  Envelope e{next_seq_++, from, to, kind, std::move(payload), round_};
  bool dropped = std::any_of(config_.faults.begin(), config_.faults.end(), [&](const Fault& f) { return f.matches(e); });
  trace_.push_back(to_json(e, dropped));
  sent_.push_back(e);
  if (!dropped) queue_.push_back(e);
  return e.seq;
}

Seq Network::inject(Endpoint from, Endpoint to, MsgKind kind, ordered_json payload) {
  return send(from, to, kind, std::move(payload));
}

void Network::note(const ProtocolState* p, const std::string& event, ordered_json detail) {
  ordered_json out;
  out["type"] = "protocol";
  out["round"] = round_;
  out["protocol"] = p ? ordered_json(p->id) : ordered_json(nullptr);
  out["event"] = event;
  for (auto it = detail.begin(); it != detail.end(); ++it) out[it.key()] = *it;
  trace_.push_back(std::move(out));
}

void Network::set_phase(ProtocolState& p, Phase phase) {
  p.phase = phase;
  note(&p, "phase", {{"phase", std::string(to_string(phase))}});
}

std::vector<ordered_json> Network::trace_since(std::size_t from) const {
  if (from >= trace_.size()) return {};
  return {trace_.begin() + static_cast<std::ptrdiff_t>(from), trace_.end()};
}

const ProtocolState& Network::protocol(int id) const {
  auto it = protocols_.find(id);
  if (it == protocols_.end()) throw Error("unknown protocol " + std::to_string(id));
  return it->second;
}

bool Network::busy() const {
  if (!queue_.empty()) return true;
  return std::any_of(protocols_.begin(), protocols_.end(), [](const auto& kv) { return !kv.second.finished(); });
}

int Network::submit_manager_request(const ScenarioDoc& snapshot, Value vertiport, Edge closed,
                                    const std::vector<Edge>& alt_route) {
  auto responsible = snapshot.world.responsible_uatms(vertiport);
  if (responsible.empty()) throw detour::OrderError("vertiport " + std::to_string(vertiport) + " has no responsible UATM");
  detour::DetourOrder order;
  order.closed = closed;
  order.alt_route = alt_route;
  order.activation_step = snapshot.step + 1;
  order.requesting_vertiport = vertiport;
  order.issuing_uatm = responsible.front();
  detour::validate_order(snapshot, order);

  int id = next_protocol_++;
  ProtocolState& p = protocols_[id];
  p.id = id;
  p.request = order;
  p.phase = Phase::Reasoning;
  p.deadline_round = round_ + config_.deadline_rounds;
  snapshots_[id] = snapshot;
  send(Endpoint::manager(vertiport), Endpoint::uatm(order.issuing_uatm), MsgKind::DetourRequest,
       {{"protocol", id},
        {"vertiport", vertiport},
        {"closed", {closed.from, closed.to}},
        {"route", route_json(alt_route)},
        {"activation_step", order.activation_step}});
  return id;
}

bool Network::step_round() {
  if (!busy()) return false;
  ++round_;
  std::vector<Envelope> batch;
  batch.swap(queue_);
  std::sort(batch.begin(), batch.end(), [](const Envelope& a, const Envelope& b) { return a.seq < b.seq; });
  for (const auto& e : batch) deliver(e);
  check_deadlines();
  return true;
}

void Network::run_until_quiet(int max_rounds) {
  for (int i = 0; i < max_rounds && step_round(); ++i) {
  }
  if (busy()) throw Error("protocol did not settle within " + std::to_string(max_rounds) + " rounds");
}

ProtocolState* Network::find_protocol(const Envelope& e) {
  if (!e.payload.contains("protocol") || !e.payload["protocol"].is_number_integer()) return nullptr;
  auto it = protocols_.find(e.payload["protocol"].get<int>());
  return it == protocols_.end() ? nullptr : &it->second;
}

void Network::deliver(const Envelope& e) {
  if (!find_protocol(e)) {
    note(nullptr, "error", {{"message", "envelope for unknown protocol"}, {"seq", e.seq}});
    return;
  }
  switch (e.kind) {
    case MsgKind::DetourRequest: on_detour_request(e); break;
    case MsgKind::LocateQuery: on_locate_query(e); break;
    case MsgKind::LocateResponse: on_locate_response(e); break;
    case MsgKind::RouteUpdate: on_route_update(e); break;
    case MsgKind::RouteAck: on_route_ack(e); break;
    case MsgKind::ManagerReport: on_manager_report(e); break;
  }
}

void Network::on_detour_request(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  if (p.phase != Phase::Reasoning) {
    note(&p, "warning", {{"message", "duplicate detour request ignored"}, {"seq", e.seq}});
    return;
  }
  const ScenarioDoc& snap = snapshots_.at(p.id);
  auto program = detour::build_detour_program(snap, p.request);
  if (config_.tamper) config_.tamper(program);
  p.outcome = detour::evaluate_detour(program, p.request);
  const auto& o = p.outcome;
  ordered_json requests = ordered_json::array(), changes = ordered_json::array();
  for (auto [a, t] : o.requests) requests.push_back({a, t});
  for (auto [a, t] : o.changes) changes.push_back({a, t});
  note(&p, "reasoning",
       {{"status", std::string(reasoner::to_string(o.status))},
        {"covered", ids(o.covered)},
        {"uncovered", ids(o.uncovered)},
        {"requests", requests},
        {"changes", changes},
        {"violated", o.violated}});

  if (!o.satisfiable()) {
    set_phase(p, Phase::Failed);
    send_report(p, true);
    return;
  }
  std::set<Value> affected;
  for (auto [a, t] : o.requests) affected.insert(a);
  // Heading into the closure but outside every coverage area: no request
  // could be derived for them.
  for (Value a : o.uncovered) {
    if (affected.contains(a)) continue;
    p.unreachable.insert(a);
    note(&p, "unreachable", {{"agent", a}});
  }
  Value issuer = p.request.issuing_uatm;
  for (Value a : affected) {
    const auto* la = snap.find_agent(a);
    if (la && snap.world.covers(issuer, la->state.corridor, la->state.waypoint)) {
      p.relay_map[a] = std::nullopt;
    } else {
      p.locate_waiting[a] = {};
    }
  }
  if (affected.empty()) {
    set_phase(p, Phase::Reporting);
    send_report(p, false);
    return;
  }
  if (p.locate_waiting.empty()) {
    set_phase(p, Phase::Delivering);
    dispatch_route_updates(p);
    return;
  }
  set_phase(p, Phase::Locating);
  p.deadline_round = round_ + config_.deadline_rounds;
  for (auto& [agent, waiting] : p.locate_waiting) {
    for (Value u : snap.world.uatms) {
      if (u == issuer) continue;
      waiting.insert(u);
      send(Endpoint::uatm(issuer), Endpoint::uatm(u), MsgKind::LocateQuery, {{"protocol", p.id}, {"agent", agent}});
    }
  }
  // Nobody to ask: every located agent is unreachable.
  if (std::all_of(p.locate_waiting.begin(), p.locate_waiting.end(), [](const auto& kv) { return kv.second.empty(); })) {
    finish_locating(p);
  }
}

void Network::on_locate_query(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  const ScenarioDoc& snap = snapshots_.at(p.id);
  Value agent = e.payload["agent"].get<Value>();
  const auto* la = snap.find_agent(agent);
  bool covered = la && snap.world.covers(e.to.id, la->state.corridor, la->state.waypoint);
  send(e.to, e.from, MsgKind::LocateResponse, {{"protocol", p.id}, {"agent", agent}, {"query", e.seq}, {"covered", covered}});
}

void Network::on_locate_response(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  Value agent = e.payload["agent"].get<Value>();
  auto it = p.locate_waiting.find(agent);
  if (p.phase != Phase::Locating || it == p.locate_waiting.end() || !it->second.contains(e.from.id)) {
    note(&p, "warning", {{"message", "unexpected locate response ignored"}, {"seq", e.seq}});
    return;
  }
  it->second.erase(e.from.id);
  if (e.payload["covered"].get<bool>()) p.locate_yes[agent].insert(e.from.id);
  bool all_in =
      std::all_of(p.locate_waiting.begin(), p.locate_waiting.end(), [](const auto& kv) { return kv.second.empty(); });
  if (all_in) finish_locating(p);
}

void Network::finish_locating(ProtocolState& p) {
  for (const auto& [agent, waiting] : p.locate_waiting) {
    auto yes = p.locate_yes.find(agent);
    if (yes == p.locate_yes.end() || yes->second.empty()) {
      p.unreachable.insert(agent);
      note(&p, "unreachable", {{"agent", agent}});
    } else {
      p.relay_map[agent] = *yes->second.begin();  // lowest id
    }
  }
  p.locate_waiting.clear();
  if (p.relay_map.empty()) {
    set_phase(p, Phase::Reporting);
    send_report(p, false);
    return;
  }
  set_phase(p, Phase::Delivering);
  dispatch_route_updates(p);
}

void Network::dispatch_route_updates(ProtocolState& p) {
  Value issuer = p.request.issuing_uatm;
  for (const auto& [agent, relay] : p.relay_map) {
    ordered_json payload{{"protocol", p.id},
                         {"agent", agent},
                         {"step", p.request.activation_step},
                         {"route", route_json(p.request.alt_route)},
                         {"relay", relay.has_value()}};
    Endpoint to = relay ? Endpoint::uatm(*relay) : Endpoint::agent(agent);
    p.update_seq[agent] = send(Endpoint::uatm(issuer), to, MsgKind::RouteUpdate, std::move(payload));
    p.pending_acks.insert(agent);
  }
  set_phase(p, Phase::AwaitingAcks);
  p.deadline_round = round_ + config_.deadline_rounds;
}

void Network::on_route_update(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  Value agent = e.payload["agent"].get<Value>();
  auto route = route_from(e.payload["route"]);
  ordered_json ack{{"protocol", p.id}, {"agent", agent}, {"update", e.seq}};
  if (e.to.kind == Endpoint::Kind::agent) {
    // Agents always accept.
    p.delivered[agent] = route;
    ack["via"] = nullptr;
    send(e.to, e.from, MsgKind::RouteAck, std::move(ack));
    return;
  }
  const ScenarioDoc& snap = snapshots_.at(p.id);
  const auto* la = snap.find_agent(agent);
  if (!la || !snap.world.covers(e.to.id, la->state.corridor, la->state.waypoint)) {
    note(&p, "error", {{"message", "relay does not cover the agent"}, {"agent", agent}, {"relay", e.to.id}});
    return;
  }
  // The relay reaches the agent over its own link and confirms upstream.
  p.delivered[agent] = route;
  ack["via"] = e.to.id;
  send(e.to, e.from, MsgKind::RouteAck, std::move(ack));
}

void Network::on_route_ack(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  Value agent = e.payload.value("agent", Value{0});
  Seq ref = e.payload.value("update", Seq{0});
  auto it = p.update_seq.find(agent);
  if (it == p.update_seq.end() || it->second != ref) {
    note(&p, "error", {{"message", "ack references unknown update"}, {"seq", e.seq}, {"update", ref}});
    return;
  }
  if (!p.pending_acks.contains(agent)) {
    note(&p, "warning", {{"message", "duplicate ack ignored"}, {"seq", e.seq}, {"agent", agent}});
    return;
  }
  if (p.phase != Phase::AwaitingAcks) {
    note(&p, "warning", {{"message", "late ack ignored"}, {"seq", e.seq}, {"agent", agent}});
    return;
  }
  p.pending_acks.erase(agent);
  p.acked.insert(agent);
  if (p.pending_acks.empty()) {
    set_phase(p, Phase::Reporting);
    send_report(p, false);
  }
}

void Network::send_report(ProtocolState& p, bool failed) {
  p.report_failed = failed;
  p.deadline_round = round_ + config_.deadline_rounds;
  ordered_json direct = ordered_json::array(), relayed = ordered_json::object();
  for (const auto& [agent, relay] : p.relay_map) {
    if (!p.acked.contains(agent)) continue;
    if (relay) {
      relayed[std::to_string(agent)] = *relay;
    } else {
      direct.push_back(agent);
    }
  }
  std::string status = failed ? "failed" : (p.unreachable.empty() ? "done" : "partial");
  send(Endpoint::uatm(p.request.issuing_uatm), Endpoint::manager(p.request.requesting_vertiport), MsgKind::ManagerReport,
       {{"protocol", p.id},
        {"status", status},
        {"rerouted", ids(p.acked)},
        {"direct", direct},
        {"relayed", relayed},
        {"undelivered", ids(p.pending_acks)},
        {"unreachable", ids(p.unreachable)},
        {"violated", p.outcome.violated}});
}

void Network::on_manager_report(const Envelope& e) {
  ProtocolState& p = *find_protocol(e);
  if (p.phase == Phase::Reporting) {
    set_phase(p, Phase::Done);
  } else {
    note(&p, "report_delivered", {{"status", e.payload["status"]}});
  }
}

void Network::check_deadlines() {
  for (auto& [id, p] : protocols_) {
    if (round_ < p.deadline_round) continue;
    if (p.phase == Phase::Reasoning || p.phase == Phase::Reporting) {
      // The request or the report never arrived; the manager gives up.
      note(&p, "timeout", {{"phase", std::string(to_string(p.phase))}});
      set_phase(p, Phase::Failed);
    } else if (p.phase == Phase::Locating) {
      // Silent peers count as not covering.
      note(&p, "timeout", {{"phase", "Locating"}});
      finish_locating(p);
    } else if (p.phase == Phase::AwaitingAcks) {
      note(&p, "timeout", {{"phase", "AwaitingAcks"}, {"pending", ids(p.pending_acks)}});
      set_phase(p, Phase::Failed);
      send_report(p, true);
    }
  }
}

}  // namespace uatm::net
