// uatm: command line front end for the reasoner, detour planner, simulator
// and gateway.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "uatm/detour/detour.hpp"
#include "uatm/gateway/server.hpp"
#include "uatm/reasoner/model.hpp"

namespace {

using namespace uatm;
using domain::Edge;
using domain::Value;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

Edge edge_of(const std::vector<Value>& v, const std::string& what) {
  if (v.size() != 2) throw Error(what + " expects A,B");
  return {v[0], v[1]};
}

std::string join(const std::set<Value>& s) {
  std::string out;
  for (Value v : s) out += (out.empty() ? "" : " ") + std::to_string(v);
  return out;
}

// Declared corridor entering `vertex`, lowest origin first.
Edge staging_for(const domain::ScenarioDoc& s, Value vertex) {
  for (const auto& c : s.world.corridors) {
    if (c.to == vertex) return c.edge();
  }
  for (const auto& c : s.world.corridors) {
    if (c.from == vertex) return c.edge().reversed();
  }
  throw Error("no corridor enters vertiport " + std::to_string(vertex));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UATM detour reasoning, simulation and gateway"};
  app.require_subcommand(1);

  // solve
  std::vector<std::string> solve_files;
  std::string solve_scenario;
  bool show_all = false, solve_json = false;
  auto* solve = app.add_subcommand("solve", "Evaluate a logic program and print its answer set");
  solve->add_option("file", solve_files, "Program files, concatenated in order")->required()->check(CLI::ExistingFile);
  solve->add_option("--scenario", solve_scenario, "Prepend the scenario's fact base")->check(CLI::ExistingFile);
  solve->add_flag("--show-all", show_all, "Print every atom, ignoring #show");
  solve->add_flag("--json", solve_json, "Print {status, atoms, violated}");

  // covered / uncovered / detour
  std::string scenario_file;
  Value uatm_id = 0, target = 0;
  std::vector<Value> closed, via, staging;
  std::optional<Value> at_step, vertiport;
  bool detour_json = false;
  std::string dialect = "general";

  auto* covered = app.add_subcommand("covered", "Agents inside a UATM's coverage");
  covered->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  covered->add_option("--uatm", uatm_id)->required();

  auto* uncovered = app.add_subcommand("uncovered", "Agents heading to a closed corridor outside a UATM's coverage");
  uncovered->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  uncovered->add_option("--uatm", uatm_id)->required();
  uncovered->add_option("--closed", closed, "A,B")->required()->delimiter(',');
  uncovered->add_option("--target", target)->required();
  uncovered->add_option("--staging", staging, "A,B; defaults to the corridor entering A")->delimiter(',');

  auto* detour = app.add_subcommand("detour", "Reason about a corridor closure");
  detour->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  detour->add_option("--closed", closed, "A,B")->required()->delimiter(',');
  detour->add_option("--via", via, "Vertiports of the alternative route")->required()->delimiter(',');
  detour->add_option("--at-step", at_step, "Activation step; defaults to the next step");
  detour->add_option("--vertiport", vertiport, "Requesting vertiport; defaults to B");
  detour->add_option("--dialect", dialect)->check(CLI::IsMember({"general", "literal"}));
  detour->add_flag("--json", detour_json);

  // run
  std::optional<Value> steps, speed;
  std::optional<double> threshold;
  bool no_congestion = false;
  std::string trace_out = "-", journal_out;
  auto* run = app.add_subcommand("run", "Step the simulation and write the event trace");
  run->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  run->add_option("--steps", steps, "Defaults to the remaining steps to the horizon");
  run->add_option("--speed", speed, "Waypoints per step; defaults to the scenario's speed");
  run->add_option("--congestion-threshold", threshold, "Occupancy fraction in (0, 1] that raises an alert");
  run->add_flag("--no-congestion", no_congestion, "Disable congestion alerts");
  run->add_option("--close", closed, "Close corridor A,B before stepping")->delimiter(',');
  run->add_option("--via", via, "Alternative route for --close")->delimiter(',');
  run->add_option("--trace", trace_out, "Output file, - for stdout");
  run->add_option("--journal", journal_out, "Also write the command journal");

  // session
  std::string commands_file;
  auto* session = app.add_subcommand("session", "Replay a command journal on a scenario");
  session->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  session->add_option("--commands", commands_file, "One JSON command per line")->required()->check(CLI::ExistingFile);
  session->add_option("--trace", trace_out, "Output file, - for stdout");
  session->add_option("--journal", journal_out);

  // serve
  unsigned short port = 8080;
  std::string address = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "HTTP and event-stream gateway");
  serve->add_option("--port", port);
  serve->add_option("--address", address);
  serve->add_option("--scenario", scenario_file, "Preload a session")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      std::string text;
      if (!solve_scenario.empty()) text = reasoner::to_string(domain::to_program(domain::load_scenario_file(solve_scenario)));
      for (const auto& f : solve_files) text += slurp(f) + "\n";
      auto model = reasoner::solve(reasoner::parse_program(text));
      if (solve_json) {
        std::cout << reasoner::to_json(model, show_all).dump(2) << "\n";
      } else {
        std::cout << reasoner::format_answer(model, show_all) << "\n";
        if (model.status == reasoner::Status::unsatisfiable) {
          std::cout << "UNSATISFIABLE\n";
          for (const auto& v : model.violated) std::cout << "violated: " << v << "\n";
        }
      }
      return model.status == reasoner::Status::satisfiable ? 0 : 2;
    }

    if (*covered) {
      std::cout << join(detour::covered_agents(domain::load_scenario_file(scenario_file), uatm_id)) << "\n";
      return 0;
    }

    if (*uncovered) {
      auto s = domain::load_scenario_file(scenario_file);
      Edge c = edge_of(closed, "--closed");
      Edge st = staging.empty() ? staging_for(s, c.from) : edge_of(staging, "--staging");
      std::cout << join(detour::uncovered_heading_agents(s, uatm_id, st, c, target)) << "\n";
      return 0;
    }

    if (*detour) {
      auto s = domain::load_scenario_file(scenario_file);
      auto order = detour::make_order(s, edge_of(closed, "--closed"), via, at_step, vertiport);
      detour::BuildOptions options;
      options.dialect = dialect == "literal" ? detour::Dialect::literal : detour::Dialect::general;
      auto out = detour::run_detour(s, order, options);
      if (detour_json) {
        std::cout << detour::to_json(out).dump(2) << "\n";
      } else {
        std::cout << "status: " << reasoner::to_string(out.status) << "\n";
        std::cout << "covered: " << join(out.covered) << "\n";
        std::cout << "uncovered: " << join(out.uncovered) << "\n";
        std::string req, chg;
        for (auto [a, t] : out.requests) req += (req.empty() ? "" : " ") + ("detour_request(" + std::to_string(a) + "," + std::to_string(t) + ")");
        for (auto [a, t] : out.changes) chg += (chg.empty() ? "" : " ") + ("change_route(" + std::to_string(a) + "," + std::to_string(t) + ")");
        std::cout << "requests: " << req << "\n";
        std::cout << "changes: " << chg << "\n";
        for (const auto& v : out.violated) std::cout << "violated: " << v << "\n";
      }
      return out.satisfiable() ? 0 : 2;
    }

    if (*run) {
      gateway::SessionOptions options;
      if (threshold) options.congestion_threshold = *threshold;
      if (no_congestion) options.congestion_threshold.reset();
      gateway::Session s("run", slurp(scenario_file), options);
      if (!closed.empty()) {
        Edge c = edge_of(closed, "--close");
        if (via.empty()) throw Error("--close needs --via");
        s.execute({{"action", "close_corridor"}, {"from", c.from}, {"to", c.to}, {"via", via}});
      }
      Value n = steps.value_or(s.sim().scenario.world.horizon - s.sim().current_step);
      for (Value i = 0; i < n; ++i) {
        nlohmann::json cmd{{"action", "step"}};
        if (speed) cmd["speed"] = *speed;
        s.execute(cmd);
      }
      spit(trace_out, s.trace_text());
      if (!journal_out.empty()) spit(journal_out, s.journal_text());
      return 0;
    }

    if (*session) {
      auto s = gateway::Session::replay("replay", slurp(scenario_file), slurp(commands_file));
      spit(trace_out, s.trace_text());
      if (!journal_out.empty()) spit(journal_out, s.journal_text());
      return 0;
    }

    if (*serve) {
      gateway::SessionHub hub;
      if (!scenario_file.empty()) std::cerr << "session " << hub.create(slurp(scenario_file)) << " loaded\n";
      gateway::Server server(hub, address, port);
      std::cerr << "listening on http://" << address << ":" << server.port() << "\n";
      static gateway::Server* running = &server;
      std::signal(SIGINT, [](int) { running->stop(); });
      std::signal(SIGTERM, [](int) { running->stop(); });
      server.run();
      return 0;
    }
  } catch (const domain::SchemaError& e) {
    std::cerr << "error: " << e.what() << " (at " << e.path() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
