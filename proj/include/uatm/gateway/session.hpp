#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "uatm/net/protocol.hpp"
#include "uatm/sim/sim.hpp"

namespace uatm::gateway {

using domain::Edge;
using domain::Value;

class CommandError : public Error {
 public:
  using Error::Error;
};

struct Command {
  enum class Action { step, close_corridor, inject_fault, export_trace };
  Action action = Action::step;
  std::optional<Value> speed;             // step
  Edge closed;                            // close_corridor
  std::vector<Value> via;                 // close_corridor, vertex list of the alternative route
  std::optional<Value> at_step;           // activation step, defaults to the next step
  std::optional<Value> vertiport;         // requesting vertiport, defaults to closed.to
  nlohmann::json fault;                   // inject_fault, one drop_seq / drop_match object
};

/// Strict: unknown actions and keys are rejected.
Command parse_command(const nlohmann::json& j);
/// The journal form. Key order is fixed, so the same command issued from
/// anywhere journals to the same bytes.
nlohmann::ordered_json to_json(const Command& c);

struct CommandResult {
  std::size_t journal_index = 0;
  nlohmann::ordered_json result;
  std::vector<std::string> events;  // lines this command appended
};

struct SessionOptions {
  std::optional<double> congestion_threshold = sim::kDefaultCongestionThreshold;  // nullopt: no alerts
};

/// One scenario run: simulation state, the protocol bus and the journal.
/// A session is a plain value; locking is the hub's business.
class Session {
 public:
  Session(std::string id, std::string scenario_text, SessionOptions options = {});

  /// Validates, journals, then executes. A rejected command leaves the
  /// session untouched and is not journaled.
  CommandResult execute(const nlohmann::json& command);

  /// Rebuilds a session by running `journal` (one command per line) on the
  /// initial scenario.
  static Session replay(std::string id, std::string scenario_text, const std::string& journal,
                        SessionOptions options = {});

  const std::string& id() const { return id_; }
  const std::string& scenario_text() const { return scenario_text_; }
  const sim::SimState& sim() const { return sim_; }
  const net::Network& network() const { return net_; }
  const std::vector<std::string>& journal() const { return journal_; }
  const std::vector<std::string>& events() const { return events_; }
  const std::set<Edge>& closed() const { return closed_; }

  std::string journal_text() const;
  std::string trace_text() const;
  nlohmann::ordered_json state_json() const;

  /// Same journal, events, simulation state and protocol states.
  friend bool same_state(const Session& a, const Session& b);

 private:
  nlohmann::ordered_json run(const Command& c, std::vector<std::string>& out);
  nlohmann::ordered_json close_corridor(const Command& c, std::vector<std::string>& out);

  std::string id_;
  std::string scenario_text_;
  sim::SimState sim_;
  net::Network net_;
  std::set<Edge> closed_;  // declared orientation of every closed corridor
  std::vector<std::string> journal_;
  std::vector<std::string> events_;
};

/// Thread-safe session registry with per-session subscribers.
class SessionHub {
 public:
  using Wake = std::function<void()>;

  /// Throws the loader's errors for bad documents.
  std::string create(const std::string& scenario_text);
  bool contains(const std::string& id) const;

  /// Runs `fn` with the session locked. Throws CommandError for unknown ids.
  template <class Fn>
  auto with(const std::string& id, Fn&& fn) {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return fn(entry->session);
  }

  /// Executes and then wakes every subscriber of the session.
  CommandResult execute(const std::string& id, const nlohmann::json& command);

  /// `wake` is called (from the executing thread) after every command that
  /// appended events; subscribers pull lines themselves. Returns a token.
  int subscribe(const std::string& id, Wake wake);
  void unsubscribe(const std::string& id, int token);

  /// Event lines from `from` on.
  std::vector<std::string> events_since(const std::string& id, std::size_t from);

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    std::mutex mutex;
    Session session;
    std::map<int, Wake> subscribers;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  int next_session_ = 1;
  int next_token_ = 1;
};

}  // namespace uatm::gateway
