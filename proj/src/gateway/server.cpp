#include "uatm/gateway/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <thread>

#include "uatm/domain/scenario.hpp"

namespace uatm::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::ordered_json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response reply(const Request& req, http::status status, std::string body,
               const char* type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::server, "uatm-gateway");
  res.set(http::field::content_type, type);
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response error(const Request& req, http::status status, const std::string& message, const std::string& path = {}) {
  ordered_json j{{"error", message}};
  if (!path.empty()) j["path"] = path;
  return reply(req, status, j.dump());
}

// "/api/sessions/s1/state?x" -> {"api", "sessions", "s1", "state"}
std::vector<std::string> segments(beast::string_view target) {
  std::string path(target.substr(0, target.find('?')));
  std::vector<std::string> out;
  std::size_t at = 0;
  while (at < path.size()) {
    std::size_t next = path.find('/', at);
    if (next == std::string::npos) next = path.size();
    if (next > at) out.push_back(path.substr(at, next - at));
    at = next + 1;
  }
  return out;
}

ordered_json parse_lines(const std::vector<std::string>& lines) {
  ordered_json out = ordered_json::array();
  for (const auto& l : lines) out.push_back(ordered_json::parse(l));
  return out;
}

Response handle(SessionHub& hub, const Request& req) {
  if (req.method() == http::verb::options) {
    Response res = reply(req, http::status::no_content, "");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    return res;
  }
  auto seg = segments(req.target());
  if (seg.size() < 2 || seg[0] != "api" || seg[1] != "sessions") return error(req, http::status::not_found, "no such route");

  if (seg.size() == 2) {
    if (req.method() != http::verb::post) return error(req, http::status::method_not_allowed, "use POST");
    try {
      std::string id = hub.create(req.body());
      return reply(req, http::status::created, ordered_json{{"session", id}}.dump());
    } catch (const domain::SchemaError& e) {
      return error(req, http::status::bad_request, e.what(), e.path());
    } catch (const Error& e) {
      return error(req, http::status::bad_request, e.what());
    }
  }
  if (seg.size() != 4) return error(req, http::status::not_found, "no such route");
  const std::string& id = seg[2];
  const std::string& what = seg[3];
  if (!hub.contains(id)) return error(req, http::status::not_found, "unknown session '" + id + "'");

  if (what == "state" && req.method() == http::verb::get) {
    return reply(req, http::status::ok, hub.with(id, [](Session& s) { return s.state_json().dump(); }));
  }
  if (what == "trace" && req.method() == http::verb::get) {
    return reply(req, http::status::ok, hub.with(id, [](Session& s) { return s.trace_text(); }), "application/x-ndjson");
  }
  if (what == "journal" && req.method() == http::verb::get) {
    return reply(req, http::status::ok, hub.with(id, [](Session& s) { return s.journal_text(); }), "application/x-ndjson");
  }
  if (what == "commands" && req.method() == http::verb::post) {
    nlohmann::json cmd;
    try {
      cmd = nlohmann::json::parse(req.body());
    } catch (const nlohmann::json::exception& e) {
      return error(req, http::status::bad_request, std::string("command is not JSON: ") + e.what());
    }
    try {
      auto r = hub.execute(id, cmd);
      ordered_json body{{"journal_index", r.journal_index}, {"result", r.result}, {"events", parse_lines(r.events)}};
      return reply(req, http::status::ok, body.dump());
    } catch (const Error& e) {
      return error(req, http::status::conflict, e.what());
    }
  }
  return error(req, http::status::not_found, "no such route");
}

class EventSocket : public std::enable_shared_from_this<EventSocket> {
 public:
  EventSocket(tcp::socket&& socket, SessionHub& hub, std::string id)
      : ws_(std::move(socket)), hub_(hub), id_(std::move(id)) {}

  ~EventSocket() {
    if (token_ == 0) return;
    try {
      hub_.unsubscribe(id_, token_);
    } catch (const Error&) {
    }
  }

  void start(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<EventSocket> weak = shared_from_this();
    auto exec = ws_.get_executor();
    token_ = hub_.subscribe(id_, [weak, exec] {
      asio::post(exec, [weak] {
        if (auto self = weak.lock()) self->pump();
      });
    });
    pump();
    read();
  }

  void pump() {
    for (auto& line : hub_.events_since(id_, cursor_)) {
      ++cursor_;
      queue(std::move(line));
    }
  }

  void queue(std::string text) {
    outbox_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->outbox_.pop_front();
      if (self->outbox_.empty()) {
        self->writing_ = false;
      } else {
        self->write_next();
      }
    });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_command(text);
      self->read();
    });
  }

  // Events of the command go out first, then its result line.
  void on_command(const std::string& text) {
    ordered_json out{{"type", "result"}};
    try {
      auto r = hub_.execute(id_, nlohmann::json::parse(text));
      pump();
      out["ok"] = true;
      out["journal_index"] = r.journal_index;
      out["result"] = r.result;
    } catch (const nlohmann::json::exception& e) {
      out["ok"] = false;
      out["error"] = std::string("command is not JSON: ") + e.what();
    } catch (const Error& e) {
      out["ok"] = false;
      out["error"] = e.what();
    }
    queue(out.dump());
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionHub& hub_;
  std::string id_;
  int token_ = 0;
  std::size_t cursor_ = 0;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  beast::flat_buffer buffer_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, SessionHub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void run() { read(); }

 private:
  void read() {
    parser_.emplace();
    parser_->body_limit(8 * 1024 * 1024);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    Request req = parser_->release();
    if (websocket::is_upgrade(req)) {
      auto seg = segments(req.target());
      if (seg.size() == 4 && seg[0] == "api" && seg[1] == "sessions" && seg[3] == "events" && hub_.contains(seg[2])) {
        stream_.expires_never();
        std::make_shared<EventSocket>(stream_.release_socket(), hub_, seg[2])->start(std::move(req));
        return;
      }
      send(error(req, http::status::not_found, "no such event stream"));
      return;
    }
    send(handle(hub_, req));
  }

  void send(Response res) {
    auto sp = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (sp->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  SessionHub& hub_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
  Impl(SessionHub& h, const std::string& address, unsigned short port)
      : hub(h), acceptor(ioc, tcp::endpoint(asio::ip::make_address(address), port)) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpConnection>(std::move(socket), hub)->run();
      accept();
    });
  }

  SessionHub& hub;
  asio::io_context ioc{1};
  tcp::acceptor acceptor;
  std::thread thread;
};

Server::Server(SessionHub& hub, const std::string& address, unsigned short port)
    : impl_(std::make_unique<Impl>(hub, address, port)) {
  impl_->accept();
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::run() { impl_->ioc.run(); }

void Server::stop() {
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace uatm::gateway
