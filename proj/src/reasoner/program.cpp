#include "uatm/reasoner/program.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace uatm::reasoner {

bool Atom::is_ground() const {
  return std::all_of(args.begin(), args.end(), [](const Term& t) { return t.is_constant(); });
}

bool compare(Value lhs, CompareOp op, Value rhs) {
  switch (op) {
    case CompareOp::lt: return lhs < rhs;
    case CompareOp::le: return lhs <= rhs;
    case CompareOp::gt: return lhs > rhs;
    case CompareOp::ge: return lhs >= rhs;
    case CompareOp::eq: return lhs == rhs;
    case CompareOp::ne: return lhs != rhs;
  }
  return false;
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message)
    : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": " +
            message),
      line_(line),
      column_(column) {}

UnsafeRuleError::UnsafeRuleError(std::string variable, const std::string& rule)
    : Error("unsafe variable " + variable + " in rule: " + rule), variable_(std::move(variable)) {}

UnsupportedConstructError::UnsupportedConstructError(std::string construct, std::size_t line,
                                                     std::size_t column)
    : Error("unsupported construct at " + std::to_string(line) + ":" + std::to_string(column) +
            ": " + construct),
      construct_(std::move(construct)) {}

namespace {

void collect_variables(const Term& t, std::vector<std::string>& out) {
  if (t.has_variable()) out.push_back(t.name);
}

void collect_variables(const Atom& a, std::vector<std::string>& out) {
  for (const auto& t : a.args) collect_variables(t, out);
}

}  // namespace

void check_safety(const Rule& rule) {
  std::set<std::string> bound;
  for (const auto& lit : rule.body) {
    if (lit.kind != Literal::Kind::positive) continue;
    std::vector<std::string> vars;
    collect_variables(lit.atom, vars);
    for (auto& v : vars) {
      if (v != "_") bound.insert(std::move(v));
    }
  }

  auto require = [&](const std::vector<std::string>& vars, bool allow_anonymous) {
    for (const auto& v : vars) {
      if (v == "_") {
        if (allow_anonymous) continue;
        throw UnsafeRuleError(v, to_string(rule));
      }
      if (!bound.contains(v)) throw UnsafeRuleError(v, to_string(rule));
    }
  };

  if (rule.head) {
    std::vector<std::string> vars;
    collect_variables(*rule.head, vars);
    require(vars, false);
  }
  for (const auto& lit : rule.body) {
    std::vector<std::string> vars;
    switch (lit.kind) {
      case Literal::Kind::positive:
        break;
      case Literal::Kind::negative:
        // `_` under negation reads as "no atom matches", which is safe.
        collect_variables(lit.atom, vars);
        require(vars, true);
        break;
      case Literal::Kind::comparison:
        collect_variables(lit.cmp.left, vars);
        collect_variables(lit.cmp.right, vars);
        require(vars, false);
        break;
    }
  }
}

void Program::add_fact(Atom fact) {
  for (const auto& t : fact.args) {
    if (t.has_variable()) throw UnsafeRuleError(t.name, to_string(fact) + ".");
  }
  facts.push_back(std::move(fact));
}

void Program::add_rule(Rule rule) {
  check_safety(rule);
  rules.push_back(std::move(rule));
}

void Program::add_show(std::string predicate, std::size_t arity) {
  shows.push_back(ShowSpec{std::move(predicate), arity});
}

void Program::append(const Program& other) {
  facts.insert(facts.end(), other.facts.begin(), other.facts.end());
  rules.insert(rules.end(), other.rules.begin(), other.rules.end());
  shows.insert(shows.end(), other.shows.begin(), other.shows.end());
}

std::size_t Program::remove_fact(const Atom& fact) {
  auto before = facts.size();
  std::erase(facts, fact);
  return before - facts.size();
}

std::string to_string(CompareOp op) {
  switch (op) {
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    case CompareOp::eq: return "=";
    case CompareOp::ne: return "!=";
  }
  return "?";
}

std::string to_string(const Term& term) {
  switch (term.kind) {
    case Term::Kind::constant:
      return std::to_string(term.value);
    case Term::Kind::variable:
      return term.name;
    case Term::Kind::offset:
      if (term.value < 0) return term.name + "-" + std::to_string(-term.value);
      return term.name + "+" + std::to_string(term.value);
    case Term::Kind::interval:
      return std::to_string(term.value) + ".." + std::to_string(term.hi);
  }
  return "?";
}

std::string to_string(const Atom& atom) {
  std::string out = atom.predicate;
  if (atom.args.empty()) return out;
  out += '(';
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ',';
    out += to_string(atom.args[i]);
  }
  out += ')';
  return out;
}

std::string to_string(const Literal& literal) {
  switch (literal.kind) {
    case Literal::Kind::positive:
      return to_string(literal.atom);
    case Literal::Kind::negative:
      return "not " + to_string(literal.atom);
    case Literal::Kind::comparison:
      return to_string(literal.cmp.left) + " " + to_string(literal.cmp.op) + " " +
             to_string(literal.cmp.right);
  }
  return "?";
}

std::string to_string(const Rule& rule) {
  std::string out;
  if (rule.head) out = to_string(*rule.head);
  if (!rule.body.empty()) {
    out += rule.head ? " :- " : ":- ";
    for (std::size_t i = 0; i < rule.body.size(); ++i) {
      if (i) out += ", ";
      out += to_string(rule.body[i]);
    }
  }
  out += '.';
  return out;
}

std::string to_string(const Program& program) {
  std::ostringstream out;
  for (const auto& f : program.facts) out << to_string(f) << ".\n";
  for (const auto& r : program.rules) out << to_string(r) << '\n';
  for (const auto& s : program.shows) out << "#show " << s.predicate << '/' << s.arity << ".\n";
  return out.str();
}

}  // namespace uatm::reasoner
