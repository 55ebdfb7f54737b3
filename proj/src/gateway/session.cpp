#include "uatm/gateway/session.hpp"

#include <sstream>

namespace uatm::gateway {

using nlohmann::ordered_json;

namespace {

Value int_field(const nlohmann::json& j, const char* key) {
  if (!j[key].is_number_integer()) throw CommandError(std::string(key) + ": expected an integer");
  return j[key].get<Value>();
}

void only_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw CommandError("unknown key '" + it.key() + "' for action " + j["action"].get<std::string>());
  }
}

ordered_json edge_json(const Edge& e) { return ordered_json::array({e.from, e.to}); }

ordered_json route_json(const std::vector<Edge>& route) {
  ordered_json out = ordered_json::array();
  for (const auto& e : route) out.push_back(edge_json(e));
  return out;
}

template <class Set>
ordered_json ids(const Set& s) {
  ordered_json a = ordered_json::array();
  for (const auto& v : s) a.push_back(v);
  return a;
}

ordered_json protocol_json(const net::ProtocolState& p) {
  ordered_json relay = ordered_json::object();
  for (const auto& [agent, via] : p.relay_map) relay[std::to_string(agent)] = via ? ordered_json(*via) : ordered_json(nullptr);
  return {{"id", p.id},
          {"phase", std::string(net::to_string(p.phase))},
          {"vertiport", p.request.requesting_vertiport},
          {"issuer", p.request.issuing_uatm},
          {"closed", edge_json(p.request.closed)},
          {"route", route_json(p.request.alt_route)},
          {"activation_step", p.request.activation_step},
          {"covered", ids(p.outcome.covered)},
          {"uncovered", ids(p.outcome.uncovered)},
          {"relay_map", relay},
          {"pending_acks", ids(p.pending_acks)},
          {"acked", ids(p.acked)},
          {"unreachable", ids(p.unreachable)},
          {"violated", p.outcome.violated}};
}

net::NetConfig net_config(const domain::ScenarioDoc& s) {
  net::NetConfig c;
  c.faults = net::parse_faults(s.faults);
  return c;
}

}  // namespace

Command parse_command(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("action") || !j["action"].is_string()) {
    throw CommandError("command must be an object with a string 'action'");
  }
  Command c;
  const std::string action = j["action"];
  if (action == "step") {
    only_keys(j, {"action", "speed"});
    c.action = Command::Action::step;
    if (j.contains("speed")) {
      c.speed = int_field(j, "speed");
      if (*c.speed < 1) throw CommandError("speed: must be at least 1");
    }
  } else if (action == "close_corridor") {
    only_keys(j, {"action", "from", "to", "via", "at_step", "vertiport"});
    c.action = Command::Action::close_corridor;
    if (!j.contains("from") || !j.contains("to") || !j.contains("via")) {
      throw CommandError("close_corridor needs from, to and via");
    }
    c.closed = {int_field(j, "from"), int_field(j, "to")};
    if (!j["via"].is_array() || j["via"].size() < 2) throw CommandError("via: expected at least two vertiports");
    for (const auto& v : j["via"]) {
      if (!v.is_number_integer()) throw CommandError("via: expected integers");
      c.via.push_back(v.get<Value>());
    }
    if (j.contains("at_step")) c.at_step = int_field(j, "at_step");
    if (j.contains("vertiport")) c.vertiport = int_field(j, "vertiport");
  } else if (action == "inject_fault") {
    only_keys(j, {"action", "fault"});
    c.action = Command::Action::inject_fault;
    if (!j.contains("fault")) throw CommandError("inject_fault needs a fault");
    try {
      net::parse_faults(nlohmann::json::array({j["fault"]}));
    } catch (const Error& e) {
      throw CommandError(e.what());
    }
    c.fault = j["fault"];
  } else if (action == "export_trace") {
    only_keys(j, {"action"});
    c.action = Command::Action::export_trace;
  } else {
    throw CommandError("unknown action '" + action + "'");
  }
  return c;
}

ordered_json to_json(const Command& c) {
  ordered_json out;
  switch (c.action) {
    case Command::Action::step:
      out["action"] = "step";
      if (c.speed) out["speed"] = *c.speed;
      break;
    case Command::Action::close_corridor:
      out["action"] = "close_corridor";
      out["from"] = c.closed.from;
      out["to"] = c.closed.to;
      out["via"] = c.via;
      if (c.at_step) out["at_step"] = *c.at_step;
      if (c.vertiport) out["vertiport"] = *c.vertiport;
      break;
    case Command::Action::inject_fault:
      out["action"] = "inject_fault";
      out["fault"] = net::to_json(net::parse_faults(nlohmann::json::array({c.fault})).front());
      break;
    case Command::Action::export_trace:
      out["action"] = "export_trace";
      break;
  }
  return out;
}

// ---------------------------------------------------------------- session

Session::Session(std::string id, std::string scenario_text, SessionOptions options)
    : id_(std::move(id)), scenario_text_(std::move(scenario_text)) {
  auto doc = domain::load_scenario(scenario_text_);
  sim_ = sim::initial_state(doc);
  if (options.congestion_threshold && !(*options.congestion_threshold > 0 && *options.congestion_threshold <= 1)) {
    throw CommandError("congestion threshold must be in (0, 1]");
  }
  sim_.congestion_threshold = options.congestion_threshold;
  net_ = net::Network(net_config(doc));
}

CommandResult Session::execute(const nlohmann::json& command) {
  Command c = parse_command(command);
  std::string entry = to_json(c).dump();

  // Run on copies so a rejected command changes nothing.
  Session work = *this;
  std::vector<std::string> out;
  ordered_json line{{"type", "command"}, {"index", journal_.size()}, {"command", to_json(c)}};
  out.push_back(line.dump());
  work.journal_.push_back(entry);
  work.events_.push_back(out.back());
  std::vector<std::string> more;
  ordered_json result = work.run(c, more);
  for (auto& l : more) {
    work.events_.push_back(l);
    out.push_back(std::move(l));
  }
  *this = std::move(work);
  if (c.action == Command::Action::export_trace) result["trace"] = trace_text();
  return {journal_.size() - 1, std::move(result), std::move(out)};
}

ordered_json Session::run(const Command& c, std::vector<std::string>& out) {
  switch (c.action) {
    case Command::Action::step: {
      if (sim_.current_step >= sim_.scenario.world.horizon) {
        throw CommandError("step " + std::to_string(sim_.current_step) + " is the horizon");
      }
      std::size_t before = sim_.event_log.size();
      sim_ = sim::advance_step(sim_, c.speed);
      for (std::size_t i = before; i < sim_.event_log.size(); ++i) out.push_back(sim::to_json(sim_.event_log[i]).dump());
      return {{"step", sim_.current_step}, {"events", sim_.event_log.size() - before}};
    }
    case Command::Action::close_corridor:
      return close_corridor(c, out);
    case Command::Action::inject_fault:
      net_.add_fault(net::parse_faults(nlohmann::json::array({c.fault})).front());
      return {{"faults", net_.faults().size()}};
    case Command::Action::export_trace:
      return {{"lines", events_.size()}};
  }
  return {};
}

ordered_json Session::close_corridor(const Command& c, std::vector<std::string>& out) {
  const auto& world = sim_.scenario.world;
  if (!world.has_corridor(c.closed)) throw CommandError("unknown corridor " + domain::to_string(c.closed));
  Edge declared = world.corridor(c.closed)->edge();
  if (closed_.contains(declared)) {
    throw CommandError("a protocol for corridor " + domain::to_string(declared) + " already ran; it stays closed");
  }
  domain::ScenarioDoc snap = sim::snapshot(sim_);
  Value next = snap.step + 1;
  if (c.at_step && *c.at_step != next) {
    throw CommandError("at_step must be the next step (" + std::to_string(next) + ")");
  }
  if (next > world.horizon) throw CommandError("no step left before the horizon");
  std::vector<Edge> route;
  try {
    route = domain::path_edges(c.via);
  } catch (const Error& e) {
    throw CommandError(std::string("via: ") + e.what());
  }
  Value vertiport = c.vertiport.value_or(c.closed.to);

  std::size_t mark = net_.trace().size();
  int id = 0;
  try {
    id = net_.submit_manager_request(snap, vertiport, c.closed, route);
  } catch (const detour::OrderError& e) {
    throw CommandError(e.what());
  }
  net_.run_until_quiet();
  for (const auto& line : net_.trace_since(mark)) out.push_back(line.dump());
  closed_.insert(declared);

  const auto& p = net_.protocol(id);
  if (p.outcome.satisfiable() && !p.acked.empty()) {
    // Only routes the agents confirmed take effect.
    detour::PlanTable apply;
    for (const auto& [agent, steps] : detour::frame_step_plans(snap, p.outcome)) {
      if (!p.acked.contains(agent)) continue;
      for (const auto& [step, plan] : steps) {
        if (step >= p.request.activation_step) apply[agent][step] = plan;
      }
    }
    sim::schedule_plans(sim_, apply);
  }
  return protocol_json(p);
}

Session Session::replay(std::string id, std::string scenario_text, const std::string& journal,
                        SessionOptions options) {
  Session s(std::move(id), std::move(scenario_text), options);
  std::istringstream in(journal);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    s.execute(nlohmann::json::parse(line));
  }
  return s;
}

std::string Session::journal_text() const {
  std::string out;
  for (const auto& l : journal_) out += l + "\n";
  return out;
}

std::string Session::trace_text() const {
  std::string out;
  for (const auto& l : events_) out += l + "\n";
  return out;
}

ordered_json Session::state_json() const {
  ordered_json agents = ordered_json::array();
  for (const auto& [id, a] : sim_.agents) {
    agents.push_back({{"id", id},
                      {"corridor", edge_json(a.corridor)},
                      {"waypoint", a.waypoint},
                      {"plan", route_json(sim::plan_at(sim_, id, sim_.current_step))}});
  }
  ordered_json closed = ordered_json::array();
  for (const auto& e : closed_) closed.push_back(edge_json(e));
  ordered_json protocols = ordered_json::array();
  for (const auto& [pid, p] : net_.protocols()) protocols.push_back(protocol_json(p));
  return {{"session", id_},
          {"name", sim_.scenario.name},
          {"step", sim_.current_step},
          {"horizon", sim_.scenario.world.horizon},
          {"agents", agents},
          {"arrived", ids(sim_.arrived)},
          {"closed", closed},
          {"protocols", protocols},
          {"round", net_.round()},
          {"journal_length", journal_.size()},
          {"event_count", events_.size()}};
}

bool same_state(const Session& a, const Session& b) {
  if (a.journal_ != b.journal_ || a.events_ != b.events_ || a.closed_ != b.closed_) return false;
  if (!(a.sim_ == b.sim_)) return false;
  if (a.net_.round() != b.net_.round() || a.net_.next_seq() != b.net_.next_seq()) return false;
  if (a.net_.trace() != b.net_.trace()) return false;
  auto ja = a.state_json(), jb = b.state_json();
  ja.erase("session");
  jb.erase("session");
  return ja == jb;
}

// ---------------------------------------------------------------- hub

std::string SessionHub::create(const std::string& scenario_text) {
  std::lock_guard lock(mutex_);
  std::string id = "s" + std::to_string(next_session_);
  Session s(id, scenario_text);  // may throw; the id is not consumed then
  ++next_session_;
  sessions_.emplace(id, std::make_shared<Entry>(std::move(s)));
  return id;
}

bool SessionHub::contains(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return sessions_.contains(id);
}

std::shared_ptr<SessionHub::Entry> SessionHub::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw CommandError("unknown session '" + id + "'");
  return it->second;
}

CommandResult SessionHub::execute(const std::string& id, const nlohmann::json& command) {
  auto entry = find(id);
  CommandResult r;
  std::vector<Wake> wake;
  {
    std::lock_guard lock(entry->mutex);
    r = entry->session.execute(command);
    for (const auto& [token, w] : entry->subscribers) wake.push_back(w);
  }
  for (auto& w : wake) w();
  return r;
}

int SessionHub::subscribe(const std::string& id, Wake wake) {
  auto entry = find(id);
  int token = 0;
  {
    std::lock_guard lock(mutex_);
    token = next_token_++;
  }
  std::lock_guard lock(entry->mutex);
  entry->subscribers.emplace(token, std::move(wake));
  return token;
}

void SessionHub::unsubscribe(const std::string& id, int token) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  entry->subscribers.erase(token);
}

std::vector<std::string> SessionHub::events_since(const std::string& id, std::size_t from) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  const auto& ev = entry->session.events();
  if (from >= ev.size()) return {};
  return {ev.begin() + static_cast<std::ptrdiff_t>(from), ev.end()};
}

}  // namespace uatm::gateway
