#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "random_scenarios.hpp"
#include "uatm/gateway/server.hpp"

using namespace uatm::gateway;
using nlohmann::json;
using uatm::testing::read_data;

namespace {

std::string fig1_text() { return read_data("fig1.scenario"); }

const json kClose = json::parse(R"({"action":"close_corridor","from":2,"to":3,"via":[1,2,7,3]})");
const json kStep = json::parse(R"({"action":"step"})");

std::vector<json> lines_of(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

int count_kind(const std::vector<std::string>& events, const std::string& kind) {
  int n = 0;
  for (const auto& l : events) {
    auto j = json::parse(l);
    n += j["type"] == "envelope" && j["kind"] == kind;
  }
  return n;
}

}  // namespace

TEST_SUITE("session commands") {
  TEST_CASE("create") {
    Session s("a", fig1_text());
    CHECK(s.sim().current_step == 1);
    CHECK(s.sim().agents.size() == 6);
    CHECK(s.journal().empty());
    Session e("b", read_data("scenarios/empty.scenario"));
    CHECK(e.sim().agents.empty());
    try {
      auto doc = json::parse(fig1_text());
      doc["uatms"] = "x";
      Session bad("c", doc.dump());
      FAIL("accepted a malformed document");
    } catch (const uatm::domain::SchemaError& err) {
      CHECK(err.path() == "/uatms");
    }
  }

  TEST_CASE("command parsing is strict and canonical") {
    auto c = parse_command(json::parse(R"({"via":[1,2,7,3],"to":3,"action":"close_corridor","from":2})"));
    CHECK(to_json(c).dump() == R"({"action":"close_corridor","from":2,"to":3,"via":[1,2,7,3]})");
    CHECK_THROWS_AS(parse_command(json::parse(R"({"action":"fly"})")), CommandError);
    CHECK_THROWS_AS(parse_command(json::parse(R"({"action":"step","sped":2})")), CommandError);
    CHECK_THROWS_AS(parse_command(json::parse(R"({"action":"step","speed":0})")), CommandError);
    CHECK_THROWS_AS(parse_command(json::parse(R"({"action":"inject_fault","fault":{"delay":1}})")), CommandError);
    CHECK_THROWS_AS(parse_command(json::parse(R"({"action":"close_corridor","from":2,"to":3})")), CommandError);
    CHECK_THROWS_AS(parse_command(json::parse(R"([1])")), CommandError);
  }

  TEST_CASE("close corridor reroutes all six") {
    Session s("a", fig1_text());
    auto r = s.execute(kClose);
    CHECK(r.result["phase"] == "Done");
    CHECK(r.result["acked"].dump() == "[1,2,3,4,5,6]");
    CHECK(r.result["covered"].dump() == "[1,2,4,5]");
    CHECK(r.result["uncovered"].dump() == "[3,6]");
    CHECK(count_kind(r.events, "RouteUpdate") == 6);
    CHECK(count_kind(r.events, "RouteAck") == 6);
    CHECK(count_kind(r.events, "ManagerReport") == 1);
    for (const auto& [agent, steps] : s.sim().plans) {
      for (uatm::domain::Value t = 2; t <= s.sim().scenario.world.horizon; ++t) {
        const auto& plan = uatm::sim::plan_at(s.sim(), agent, t);
        CHECK(std::find(plan.begin(), plan.end(), Edge{2, 3}) == plan.end());
      }
    }
    // the reroute takes effect when stepping: 19 + 2 runs past the 20 waypoints
    s.execute(json::parse(R"({"action":"step","speed":2})"));
    CHECK(s.sim().agents.at(6).corridor == Edge{2, 7});
  }

  TEST_CASE("rejections leave the state unchanged") {
    Session s("a", fig1_text());
    s.execute(kClose);
    Session before = s;
    CHECK_THROWS_AS(s.execute(kClose), CommandError);  // same corridor again
    CHECK_THROWS_AS(s.execute(json::parse(R"({"action":"close_corridor","from":3,"to":2,"via":[1,2,7,3]})")), CommandError);
    CHECK_THROWS_AS(s.execute(json::parse(R"({"action":"close_corridor","from":1,"to":5,"via":[1,2]})")), CommandError);
    CHECK_THROWS_AS(s.execute(json::parse(R"({"action":"close_corridor","from":2,"to":7,"via":[1,2,3],"at_step":3})")),
                    CommandError);
    s.execute(kStep);
    s.execute(kStep);
    Session at_horizon = s;
    CHECK_THROWS_AS(s.execute(kStep), CommandError);
    CHECK(same_state(s, at_horizon));
    CHECK(s.journal().size() == 3);
    CHECK_FALSE(same_state(s, before));
  }

  TEST_CASE("fault injection fails the protocol and keeps the old plan") {
    Session s("a", fig1_text());
    s.execute(json::parse(R"({"action":"inject_fault","fault":{"drop_match":{"kind":"RouteAck","agent":3}}})"));
    auto r = s.execute(kClose);
    CHECK(r.result["phase"] == "Failed");
    CHECK(r.result["pending_acks"].dump() == "[3]");
    const auto& plan = uatm::sim::plan_at(s.sim(), 3, 2);
    CHECK(std::find(plan.begin(), plan.end(), Edge{2, 3}) != plan.end());
    const auto& moved = uatm::sim::plan_at(s.sim(), 1, 2);
    CHECK(std::find(moved.begin(), moved.end(), Edge{2, 3}) == moved.end());
  }

  TEST_CASE("faults from the scenario document") {
    auto doc = json::parse(fig1_text());
    doc["faults"] = json::parse(R"([{"drop_match":{"kind":"RouteAck","agent":6}}])");
    Session s("a", doc.dump());
    auto r = s.execute(kClose);
    CHECK(r.result["phase"] == "Failed");
    CHECK(r.result["pending_acks"].dump() == "[6]");
  }

  TEST_CASE("export_trace includes every line once, in order") {
    Session s("a", fig1_text());
    s.execute(kClose);
    s.execute(kStep);
    auto r = s.execute(json::parse(R"({"action":"export_trace"})"));
    auto lines = lines_of(r.result["trace"]);
    CHECK(lines.size() == s.events().size());
    int commands = 0, sim = 0;
    std::set<std::uint64_t> seqs;
    for (const auto& l : lines) {
      if (l["type"] == "command") CHECK(l["index"] == commands++);
      if (l["type"] == "sim") ++sim;
      if (l["type"] == "envelope") CHECK(seqs.insert(l["seq"].get<std::uint64_t>()).second);
    }
    CHECK(commands == 3);
    CHECK(sim == static_cast<int>(s.sim().event_log.size()));
    CHECK(seqs.size() == s.network().sent().size());
  }

  TEST_CASE("golden trace") {
    Session s("golden", fig1_text());
    s.execute(kClose);
    s.execute(kStep);
    s.execute(kStep);
    auto r = s.execute(json::parse(R"({"action":"export_trace"})"));
    CHECK(r.result["trace"].get<std::string>() == read_data("golden/fig1_close_corridor.jsonl"));
  }
}

TEST_SUITE("journal replay") {
  TEST_CASE("fig1 replay") {
    Session s("a", fig1_text());
    s.execute(json::parse(R"({"action":"inject_fault","fault":{"drop_seq":40}})"));
    s.execute(kClose);
    s.execute(json::parse(R"({"action":"step","speed":4})"));
    Session r = Session::replay("b", s.scenario_text(), s.journal_text());
    CHECK(same_state(s, r));
    CHECK(r.journal_text() == s.journal_text());
    CHECK(r.trace_text() == s.trace_text());
  }

  TEST_CASE("random command sequences") {
    std::mt19937 rng(53);
    for (int i = 0; i < 40; ++i) {
      auto doc = uatm::testing::random_scenario(rng);
      Session s("a", uatm::domain::to_json(doc).dump());
      for (int k = 0; k < 6; ++k) {
        json cmd;
        int pick = std::uniform_int_distribution<int>(0, 3)(rng);
        if (pick == 0) {
          auto order = uatm::testing::random_order(rng, uatm::sim::snapshot(s.sim()));
          if (!order) continue;
          std::vector<uatm::domain::Value> via = uatm::domain::path_vertices(order->alt_route);
          cmd = {{"action", "close_corridor"}, {"from", order->closed.from}, {"to", order->closed.to}, {"via", via}};
        } else if (pick == 1) {
          cmd = {{"action", "inject_fault"},
                 {"fault", {{"drop_seq", std::uniform_int_distribution<int>(1, 30)(rng)}}}};
        } else {
          cmd = {{"action", "step"}, {"speed", std::uniform_int_distribution<int>(1, 8)(rng)}};
        }
        try {
          s.execute(cmd);
        } catch (const uatm::Error&) {
        }
        Session r = Session::replay("b", s.scenario_text(), s.journal_text());
        REQUIRE(same_state(s, r));
      }
    }
  }

  TEST_CASE("sessions are isolated") {
    SessionHub hub;
    auto a = hub.create(fig1_text());
    auto b = hub.create(fig1_text());
    CHECK(a != b);
    hub.execute(a, kClose);
    hub.with(b, [](Session& s) {
      CHECK(s.journal().empty());
      CHECK(s.network().sent().empty());
    });
    CHECK_THROWS_AS(hub.execute("nope", kStep), CommandError);
  }
}

// ---------------------------------------------------------------- loopback

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct Reply {
  int status = 0;
  std::string body;
};

Reply call(unsigned short port, http::verb verb, const std::string& target, const std::string& body = {}) {
  asio::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.body() = body;
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

}  // namespace

TEST_SUITE("server") {
  TEST_CASE("http endpoints") {
    SessionHub hub;
    Server server(hub);
    server.start();
    unsigned short port = server.port();

    auto created = call(port, http::verb::post, "/api/sessions", fig1_text());
    REQUIRE(created.status == 201);
    std::string id = json::parse(created.body)["session"];

    auto doc = json::parse(fig1_text());
    doc["horizon"] = "3";
    auto bad = call(port, http::verb::post, "/api/sessions", doc.dump());
    CHECK(bad.status == 400);
    CHECK(json::parse(bad.body)["path"] == "/horizon");

    auto state = json::parse(call(port, http::verb::get, "/api/sessions/" + id + "/state").body);
    CHECK(state["step"] == 1);
    CHECK(state["agents"].size() == 6);

    auto done = call(port, http::verb::post, "/api/sessions/" + id + "/commands", kClose.dump());
    REQUIRE(done.status == 200);
    auto body = json::parse(done.body);
    CHECK(body["result"]["phase"] == "Done");
    CHECK(body["journal_index"] == 0);

    auto again = call(port, http::verb::post, "/api/sessions/" + id + "/commands", kClose.dump());
    CHECK(again.status == 409);
    CHECK(call(port, http::verb::post, "/api/sessions/" + id + "/commands", "{nope").status == 400);
    CHECK(call(port, http::verb::get, "/api/sessions/zz/state").status == 404);
    CHECK(call(port, http::verb::get, "/api/other").status == 404);

    auto trace = call(port, http::verb::get, "/api/sessions/" + id + "/trace");
    CHECK(trace.status == 200);
    CHECK(trace.body == hub.with(id, [](Session& s) { return s.trace_text(); }));
    auto journal = call(port, http::verb::get, "/api/sessions/" + id + "/journal");
    CHECK(journal.body == kClose.dump() + "\n");
    server.stop();
  }

  TEST_CASE("event stream: backlog, live lines and commands") {
    SessionHub hub;
    Server server(hub);
    server.start();
    std::string id = hub.create(fig1_text());
    hub.execute(id, kClose);
    std::size_t backlog = hub.events_since(id, 0).size();

    asio::io_context ioc;
    websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), server.port()));
    ws.handshake("127.0.0.1", "/api/sessions/" + id + "/events");
    auto next = [&] {
      beast::flat_buffer buffer;
      ws.read(buffer);
      return beast::buffers_to_string(buffer.data());
    };
    std::vector<std::string> got;
    for (std::size_t i = 0; i < backlog; ++i) got.push_back(next());

    // live: a command through HTTP shows up on the socket
    auto stepped = call(server.port(), http::verb::post, "/api/sessions/" + id + "/commands", kStep.dump());
    REQUIRE(stepped.status == 200);
    std::size_t step_lines = json::parse(stepped.body)["events"].size();
    for (std::size_t i = 0; i < step_lines; ++i) got.push_back(next());

    // a command over the socket: its events, then a result line
    ws.write(asio::buffer(kStep.dump()));
    std::string line;
    while (true) {
      line = next();
      if (json::parse(line)["type"] == "result") break;
      got.push_back(line);
    }
    auto result = json::parse(line);
    CHECK(result["ok"] == true);
    CHECK(result["result"]["step"] == 3);

    ws.write(asio::buffer(kStep.dump()));
    auto refused = json::parse(next());
    CHECK(refused["ok"] == false);

    std::string stream_text;
    for (const auto& l : got) stream_text += l + "\n";
    CHECK(stream_text == hub.with(id, [](Session& s) { return s.trace_text(); }));

    ws.close(websocket::close_code::normal);
    server.stop();
  }

  TEST_CASE("unknown event stream is refused") {
    SessionHub hub;
    Server server(hub);
    server.start();
    asio::io_context ioc;
    websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), server.port()));
    CHECK_THROWS(ws.handshake("127.0.0.1", "/api/sessions/none/events"));
    server.stop();
  }
}
