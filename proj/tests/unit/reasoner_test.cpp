#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "naive_oracle.hpp"
#include "random_programs.hpp"
#include "uatm/reasoner/model.hpp"

using namespace uatm::reasoner;
using uatm::testing::naive_solve;
using uatm::testing::bundled_program;

namespace {

std::vector<Tuple> tuples(std::initializer_list<Tuple> t) { return t; }

std::set<std::string> engine_atoms(const Model& m) {
  std::set<std::string> out;
  for (const auto& a : m.atoms) out.insert(to_string(a));
  return out;
}

std::set<std::string> oracle_atoms(const uatm::testing::OracleResult& r) {
  std::set<std::string> out;
  for (const auto& a : r.atoms) out.insert(uatm::testing::to_string(a));
  return out;
}

std::optional<AtomId> find_atom(const GroundProgram& g, const std::string& text) {
  Atom a = parse_atom(text);
  auto pred = g.atoms.find_predicate(a.predicate, a.arity());
  if (!pred) return std::nullopt;
  std::vector<Value> args;
  for (const auto& t : a.args) args.push_back(t.value);
  return g.atoms.find(*pred, args);
}

}  // namespace

TEST_SUITE("parse_program") {
  TEST_CASE("single ground fact") {
    Program p = parse_program("edge(1, 2).");
    REQUIRE(p.facts.size() == 1);
    CHECK(p.rules.empty());
    CHECK(p.facts[0] == Atom{"edge", {Term::constant(1), Term::constant(2)}});
    CHECK(p.facts[0].is_ground());
  }

  TEST_CASE("empty input") {
    Program p = parse_program("");
    CHECK(p.empty());
    CHECK(parse_program("  % only a comment\n%* block *%\n").empty());
  }

  TEST_CASE("unsafe negated variable") {
    try {
      parse_program("p(X) :- not q(X).");
      FAIL("expected UnsafeRuleError");
    } catch (const UnsafeRuleError& e) {
      CHECK(e.variable() == "X");
    }
  }

  TEST_CASE("other safety violations") {
    CHECK_THROWS_AS(parse_program("p(X)."), UnsafeRuleError);
    CHECK_THROWS_AS(parse_program("p(X) :- q(Y)."), UnsafeRuleError);
    CHECK_THROWS_AS(parse_program("p(Y) :- q(X), Y < 3."), UnsafeRuleError);
    CHECK_THROWS_AS(parse_program("p(_) :- q(X)."), UnsafeRuleError);
    CHECK_NOTHROW(parse_program("p(X) :- q(X, _), not r(X, _)."));
    CHECK_NOTHROW(parse_program("p(T) :- s(T+1)."));
  }

  TEST_CASE("syntax errors carry a position") {
    try {
      parse_program("edge(1, 2).\nedge(1 2).");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 8);
    }
    CHECK_THROWS_AS(parse_program("p(1)"), ParseError);
    CHECK_THROWS_AS(parse_program("p(3..1)."), ParseError);
    CHECK_THROWS_AS(parse_program(":- ."), ParseError);
  }

  TEST_CASE("unsupported constructs are rejected by name") {
    auto construct = [](const char* text) {
      try {
        parse_program(text);
      } catch (const UnsupportedConstructError& e) {
        return e.construct();
      }
      return std::string("<accepted>");
    };
    CHECK(construct("{ p(1) }.") == "choice rule");
    CHECK(construct("p(1) | q(1).").find("disjunction") == 0);
    CHECK(construct("p(1) ; q(1).").find("disjunction") == 0);
    CHECK(construct("#const n = 3.") == "directive #const");
    CHECK(construct("p(N) :- #count { X : q(X) } = N.") == "aggregate #count");
    CHECK(construct("p(a).") == "symbolic constant 'a'");
    CHECK(construct("p(f(1)).") == "function term 'f'");
    CHECK(construct("p(X*2) :- q(X).") == "arithmetic operator '*'");
    CHECK(construct("p(X+Y) :- q(X), q(Y).") == "arithmetic over multiple variables");
    CHECK(construct("p(1+2).") == "constant arithmetic");
    CHECK(construct("p(X) :- q(X), r(1..3).") == "interval in rule body");
    CHECK(construct("-p(1).") == "classical negation");
    CHECK(construct(":~ p(X). [X]") == "weak constraint");
    CHECK(construct("p(\"s\").") == "string constant \"s\"");
  }

  TEST_CASE("bundled fragment parses") {
    Program p = parse_program(bundled_program("detour_all"));
    CHECK(p.shows.size() == 4);
    CHECK(std::count_if(p.rules.begin(), p.rules.end(), [](const Rule& r) { return r.is_constraint(); }) == 1);
    std::vector<std::string> texts;
    for (const auto& r : p.rules) texts.push_back(to_string(r));
    CHECK(std::find(texts.begin(), texts.end(),
                    "plan(A,T+1,U,V) :- plan(A,T,U,V), step(T+1), not detour_request(A,T+1).") != texts.end());
  }

  TEST_CASE("round trip on bundled programs") {
    for (const char* name : {"covered_by_uatm1", "detour_covered", "uncovered_by_uatm1", "detour_all"}) {
      Program once = parse_program(bundled_program(name));
      Program twice = parse_program(to_string(once));
      CHECK_MESSAGE(once == twice, name);
    }
  }

  TEST_CASE("round trip property on random programs") {
    std::mt19937 rng(7);
    for (int i = 0; i < 300; ++i) {
      Program p = uatm::testing::random_program(rng, i % 2 == 0);
      Program back = parse_program(to_string(p));
      REQUIRE(back == p);
      CHECK(to_string(back) == to_string(p));
    }
  }
}

TEST_SUITE("ground") {
  TEST_CASE("interval fact expands") {
    GroundProgram g = ground(parse_program("step(1..3)."));
    CHECK(g.atoms.size() == 3);
    for (const char* s : {"step(1)", "step(2)", "step(3)"}) {
      auto id = find_atom(g, s);
      REQUIRE(id);
      CHECK(g.is_fact[*id]);
    }
  }

  TEST_CASE("guarded coverage rule yields fifteen waypoints") {
    GroundProgram g = ground(parse_program(
        "edge_range(1, 2, 1..20).\n"
        "covered_wp(1, 2, 1, P) :- 1 <= P, P < 16, edge_range(1, 2, P)."));
    auto pred = g.atoms.find_predicate("covered_wp", 4);
    REQUIRE(pred);
    const auto& ids = g.atoms.atoms_of(*pred);
    CHECK(ids.size() == 15);
    std::vector<Value> ps;
    for (AtomId id : ids) ps.push_back(g.atoms.args(id)[3]);
    std::sort(ps.begin(), ps.end());
    for (Value p = 1; p <= 15; ++p) CHECK(ps[static_cast<std::size_t>(p - 1)] == p);
  }

  TEST_CASE("empty join yields no instances") {
    GroundProgram g = ground(parse_program("a(1).\np(X) :- a(X), b(X)."));
    CHECK(g.rules.empty());
    CHECK(g.atoms.size() == 1);
  }

  TEST_CASE("capacity exceeded names the rule") {
    try {
      ground(parse_program("d(1..30).\npair(X, Y) :- d(X), d(Y)."), 500);
      FAIL("expected CapacityExceededError");
    } catch (const CapacityExceededError& e) {
      CHECK(e.rule() == "pair(X,Y) :- d(X), d(Y).");
    }
    CHECK_THROWS_AS(ground(parse_program("n(1..2000)."), 1000), CapacityExceededError);
    CHECK_NOTHROW(ground(parse_program("n(1..2000).")));
  }

  TEST_CASE("arithmetic binds through positive atoms") {
    GroundProgram g = ground(parse_program("s(1..3).\nprev(T) :- s(T+1)."));
    CHECK(find_atom(g, "prev(0)"));
    CHECK(find_atom(g, "prev(2)"));
    CHECK_FALSE(find_atom(g, "prev(3)"));
  }

  TEST_CASE("negated fact kills an instance, impossible negation is dropped") {
    GroundProgram g = ground(parse_program("a(1). a(2). b(1).\np(X) :- a(X), not b(X).\nq(X) :- a(X), not c(X)."));
    REQUIRE(g.rules.size() == 3);
    for (const auto& r : g.rules) CHECK(r.neg.empty());
  }

  TEST_CASE("anonymous variable under negation expands to all matches") {
    GroundProgram g = ground(parse_program(
        "e(1,2). e(2,3).\n"
        "r(X,Y) :- e(X,Y).\n"
        "src(X) :- e(X,_), not r(_,X)."));
    std::size_t with_neg = 0;
    for (const auto& r : g.rules) {
      if (g.atoms.signature(g.atoms.predicate(*r.head)).name != "src") continue;
      if (g.atoms.args(*r.head)[0] == 2) {
        CHECK(r.neg.size() == 1);
        ++with_neg;
      }
    }
    CHECK(with_neg == 1);
    Model m = evaluate(g);
    CHECK(query(m, "src", 1) == tuples({{1}}));
  }
}

TEST_SUITE("stratify") {
  TEST_CASE("coverage query orders covered_agent before covered_by_uatm1") {
    GroundProgram g = ground(parse_program(bundled_program("covered_by_uatm1")));
    Stratification s = stratify(g);
    auto agent = find_atom(g, "covered_agent(1,1)");
    auto by = find_atom(g, "covered_by_uatm1(1)");
    REQUIRE(agent);
    REQUIRE(by);
    CHECK(s.level[*agent] < s.level[*by]);
  }

  TEST_CASE("facts only gives one stratum") {
    GroundProgram g = ground(parse_program("a(1). b(2..4). c."));
    Stratification s = stratify(g);
    CHECK(s.strata.size() == 1);
    CHECK(s.strata[0].atoms.size() == 5);
  }

  // Independent check: longest-path levels by plain relaxation over the
  // ground rules, compared with the stratifier's assignment.
  TEST_CASE("detour program layers plan after detour_request per time step") {
    GroundProgram g = ground(parse_program(bundled_program("detour_all")));
    Stratification s = stratify(g);

    std::vector<std::size_t> level(g.atoms.size(), 0);
    bool changed = true;
    std::size_t passes = 0;
    while (changed) {
      REQUIRE(++passes < 10'000);
      changed = false;
      for (const auto& r : g.rules) {
        for (AtomId b : r.pos) {
          if (level[*r.head] < level[b] + 1) {
            level[*r.head] = level[b] + 1;
            changed = true;
          }
        }
        for (AtomId b : r.neg) {
          if (level[*r.head] < level[b] + 1) {
            level[*r.head] = level[b] + 1;
            changed = true;
          }
        }
      }
    }
    CHECK(level == s.level);

    for (const auto& r : g.rules) {
      for (AtomId b : r.pos) CHECK(s.level[b] <= s.level[*r.head]);
      for (AtomId b : r.neg) CHECK(s.level[b] < s.level[*r.head]);
    }
    for (int a = 1; a <= 6; ++a) {
      auto req = find_atom(g, "detour_request(" + std::to_string(a) + ",2)");
      REQUIRE(req);
      for (const char* edge : {"1,2", "2,3"}) {
        auto carried = find_atom(g, "plan(" + std::to_string(a) + ",2," + edge + ")");
        REQUIRE(carried);
        CHECK(s.level[*carried] > s.level[*req]);
      }
    }
  }

  TEST_CASE("detour program has a negative cycle at the predicate level") {
    // plan -> detour_request (positive) and detour_request -> plan (negated):
    // only the ground, time-layered view removes the cycle.
    Program p = parse_program(bundled_program("detour_all"));
    std::map<std::string, std::set<std::pair<std::string, bool>>> deps;
    for (const auto& r : p.rules) {
      if (!r.head) continue;
      for (const auto& l : r.body) {
        if (l.kind == Literal::Kind::comparison) continue;
        deps[l.atom.predicate].insert({r.head->predicate, l.kind == Literal::Kind::negative});
      }
    }
    CHECK(deps["detour_request"].contains({"plan", true}));
    CHECK(deps["plan"].contains({"detour_request", false}));
    CHECK_NOTHROW(stratify(ground(p)));
  }

  TEST_CASE("even negative loop is rejected with the cycle") {
    GroundProgram g = ground(parse_program("a(1).\np(X) :- a(X), not q(X).\nq(X) :- a(X), not p(X)."));
    try {
      stratify(g);
      FAIL("expected NonStratifiableError");
    } catch (const NonStratifiableError& e) {
      REQUIRE(e.cycle().size() == 3);
      CHECK(e.cycle().front() == e.cycle().back());
      std::string msg = e.what();
      CHECK(msg.find("-not->") != std::string::npos);
    }
  }

  TEST_CASE("positive recursion stays in one stratum") {
    GroundProgram g = ground(parse_program(
        "e(1,2). e(2,3). e(3,1).\nr(X,Y) :- e(X,Y).\nr(X,Z) :- r(X,Y), e(Y,Z).\nu(X) :- e(X,_), not r(X,X)."));
    Stratification s = stratify(g);
    auto r11 = find_atom(g, "r(1,1)");
    auto r12 = find_atom(g, "r(1,2)");
    REQUIRE(r11);
    REQUIRE(r12);
    Model m = evaluate(g, s);
    CHECK(query(m, "r", 2).size() == 9);
    CHECK(query(m, "u", 1).empty());
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("coverage query reproduces the published answer") {
    Model m = solve(parse_program(bundled_program("covered_by_uatm1")));
    CHECK(m.satisfiable());
    CHECK(format_answer(m) ==
          "covered_by_uatm1(1) covered_by_uatm1(2) covered_by_uatm1(4) covered_by_uatm1(5) "
          "loc(1,1,1,2,3) loc(2,1,1,2,7) loc(3,1,1,2,17) loc(4,1,1,2,12) loc(5,1,1,2,15) "
          "loc(6,1,1,2,19)");
    CHECK(query(m, "covered_by_uatm1", 1) == tuples({{1}, {2}, {4}, {5}}));
  }

  TEST_CASE("covered-agent detour program") {
    Model m = solve(parse_program(bundled_program("detour_covered")));
    CHECK(m.satisfiable());
    CHECK(query(m, "detour_request", 2) == tuples({{1, 2}, {2, 2}, {4, 2}, {5, 2}}));
    CHECK(query(m, "change_route", 2) == tuples({{1, 2}, {2, 2}, {4, 2}, {5, 2}}));
  }

  TEST_CASE("uncovered heading agents") {
    Model m = solve(parse_program(bundled_program("uncovered_by_uatm1")));
    CHECK(query(m, "uncovered_by_uatm1", 1) == tuples({{3}, {6}}));
  }

  TEST_CASE("full detour program") {
    Model m = solve(parse_program(bundled_program("detour_all")));
    CHECK(m.satisfiable());
    CHECK(m.violated.empty());
    std::vector<Tuple> all_six{{1, 2}, {2, 2}, {3, 2}, {4, 2}, {5, 2}, {6, 2}};
    CHECK(query(m, "change_route", 2) == all_six);
    CHECK(query(m, "detour_request", 2) == all_six);
    CHECK(query(m, "covered_by_uatm1", 1) == tuples({{1}, {2}, {4}, {5}}));
    CHECK(query(m, "uncovered_by_uatm1", 1) == tuples({{3}, {6}}));
  }

  TEST_CASE("blocked route change is reported as UNSAT with the ground constraint") {
    // A detour request for step 4 can never be served: step/1 ends at 3, so
    // the plan rule cannot fire and change_route(1,4) stays underivable.
    std::string text = bundled_program("detour_covered") + "new_plan(4, 1, 2).\ndetour_request(1, 4).\n";
    Program p = parse_program(text);
    auto oracle = naive_solve(p);
    REQUIRE(oracle.total);
    REQUIRE(oracle.violated.size() == 1);

    Model m = solve(p);
    CHECK(m.status == Status::unsatisfiable);
    CHECK(std::set<std::string>(m.violated.begin(), m.violated.end()) == oracle.violated);
    CHECK(m.violated.front() == ":- not change_route(1,4), new_plan(4,1,2), detour_request(1,4).");
    // The fixed point is still complete on the UNSAT path.
    CHECK(query(m, "change_route", 2).size() == 4);
  }

  TEST_CASE("semi-naive iterations never shrink the atom set") {
    GroundProgram g = ground(parse_program(bundled_program("detour_all") +
                                           "e(1,2). e(2,3). e(3,4). e(4,1).\nr(X,Y) :- e(X,Y).\nr(X,Z) :- r(X,Y), e(Y,Z)."));
    EvaluationTrace trace;
    evaluate(g, stratify(g), &trace);
    std::size_t last = 0;
    bool saw_multi_iteration = false;
    for (const auto& stratum : trace.iterations) {
      saw_multi_iteration = saw_multi_iteration || stratum.size() > 2;
      for (std::size_t n : stratum) {
        CHECK(n >= last);
        last = n;
      }
    }
    CHECK(saw_multi_iteration);
  }

  TEST_CASE("serialization is deterministic") {
    std::string text = bundled_program("detour_all");
    auto a = to_json(solve(parse_program(text)), true).dump();
    auto b = to_json(solve(parse_program(text)), true).dump();
    CHECK(a == b);
    CHECK(a.rfind(R"({"status":"SATISFIABLE","atoms":[)", 0) == 0);
  }

  TEST_CASE("without show directives every atom is shown") {
    Model m = solve(parse_program("a(1). b(X) :- a(X)."));
    CHECK(format_answer(m) == "a(1) b(1)");
  }
}

TEST_SUITE("query") {
  TEST_CASE("unknown predicate is empty, not an error") {
    Model m = solve(parse_program(bundled_program("covered_by_uatm1")));
    CHECK(query(m, "nothing", 1).empty());
    CHECK(query(m, "covered_by_uatm1", 2).empty());
  }

  TEST_CASE("empty model") {
    Model m = solve(parse_program(""));
    CHECK(m.atoms.empty());
    CHECK(query(m, "p", 0).empty());
    CHECK(m.satisfiable());
  }
}

TEST_SUITE("oracle equivalence") {
  TEST_CASE("bundled programs") {
    for (const char* name : {"covered_by_uatm1", "detour_covered", "uncovered_by_uatm1", "detour_all"}) {
      Program p = parse_program(bundled_program(name));
      auto oracle = naive_solve(p);
      REQUIRE(oracle.total);
      Model m = solve(p);
      CHECK_MESSAGE(engine_atoms(m) == oracle_atoms(oracle), name);
      CHECK(std::set<std::string>(m.violated.begin(), m.violated.end()) == oracle.violated);
    }
  }

  TEST_CASE("random programs") {
    std::mt19937 rng(2024);
    int compared = 0;
    int rejected = 0;
    for (int i = 0; i < 600; ++i) {
      Program p = uatm::testing::random_program(rng, i % 3 != 0);
      GroundProgram g = ground(p);
      REQUIRE(g.atoms.size() <= 5000);
      std::optional<Model> m;
      try {
        m = evaluate(g, stratify(g));
      } catch (const NonStratifiableError&) {
        ++rejected;
        continue;
      }
      auto oracle = naive_solve(p);
      REQUIRE_MESSAGE(oracle.total, to_string(p));
      CHECK_MESSAGE(engine_atoms(*m) == oracle_atoms(oracle), to_string(p));
      CHECK_MESSAGE(std::set<std::string>(m->violated.begin(), m->violated.end()) == oracle.violated,
                    to_string(p));
      ++compared;
    }
    CHECK(compared >= 400);
    MESSAGE("compared " << compared << ", not stratifiable " << rejected);
  }
}
