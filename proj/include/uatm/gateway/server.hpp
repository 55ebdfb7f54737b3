#pragma once

#include <memory>
#include <string>

#include "uatm/gateway/session.hpp"

namespace uatm::gateway {

/// HTTP + WebSocket front end over a SessionHub. Everything runs on one I/O
/// thread; commands execute inline and event fan-out is queued per client.
///
///   POST /api/sessions                 scenario document -> {"session": id}
///   GET  /api/sessions/{id}/state      state snapshot
///   POST /api/sessions/{id}/commands   one command -> result and its events
///   GET  /api/sessions/{id}/trace      event lines (JSONL)
///   GET  /api/sessions/{id}/journal    journal lines (JSONL)
///   WS   /api/sessions/{id}/events     backlog, live lines; accepts commands
class Server {
 public:
  /// Port 0 picks a free one; see port().
  Server(SessionHub& hub, const std::string& address = "127.0.0.1", unsigned short port = 0);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  /// Serves on a background thread.
  void start();
  /// Serves on the calling thread until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uatm::gateway
