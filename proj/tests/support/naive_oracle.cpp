#include "naive_oracle.hpp"

#include <functional>
#include <map>

namespace uatm::testing {
namespace {

using reasoner::Atom;
using reasoner::CompareOp;
using reasoner::Literal;
using reasoner::Program;
using reasoner::Rule;
using reasoner::Term;

using Binding = std::map<std::string, long long>;

struct Store {
  std::set<OracleAtom> all;
  std::map<std::pair<std::string, std::size_t>, std::vector<std::vector<long long>>> by_pred;

  bool add(OracleAtom a) {
    if (all.contains(a)) return false;
    by_pred[{a.predicate, a.args.size()}].push_back(a.args);
    all.insert(std::move(a));
    return true;
  }

  const std::vector<std::vector<long long>>& tuples(const std::string& p, std::size_t n) const {
    static const std::vector<std::vector<long long>> none;
    auto it = by_pred.find({p, n});
    return it == by_pred.end() ? none : it->second;
  }
};

bool holds(long long l, CompareOp op, long long r) {
  switch (op) {
    case CompareOp::lt: return l < r;
    case CompareOp::le: return l <= r;
    case CompareOp::gt: return l > r;
    case CompareOp::ge: return l >= r;
    case CompareOp::eq: return l == r;
    case CompareOp::ne: return l != r;
  }
  return false;
}

long long value_of(const Term& t, const Binding& b) {
  if (t.kind == Term::Kind::variable) return b.at(t.name);
  if (t.kind == Term::Kind::offset) return b.at(t.name) + t.value;
  return t.value;
}

// Gives each positive `_` its own name so the binding carries its value.
Rule name_anonymous(Rule r) {
  int k = 0;
  for (auto& lit : r.body) {
    if (lit.kind != Literal::Kind::positive) continue;
    for (auto& t : lit.atom.args) {
      if (t.kind == Term::Kind::variable && t.name == "_") t.name = "_#" + std::to_string(++k);
    }
  }
  return r;
}

void expand_terms(const std::vector<Term>& args, const Binding& b, std::size_t i,
                  std::vector<long long>& acc, std::vector<std::vector<long long>>& out) {
  if (i == args.size()) {
    out.push_back(acc);
    return;
  }
  if (args[i].kind == Term::Kind::interval) {
    for (long long v = args[i].value; v <= args[i].hi; ++v) {
      acc.push_back(v);
      expand_terms(args, b, i + 1, acc, out);
      acc.pop_back();
    }
  } else {
    acc.push_back(value_of(args[i], b));
    expand_terms(args, b, i + 1, acc, out);
    acc.pop_back();
  }
}

// Tries every combination of stored atoms for the positive literals, in
// source order, and calls `fn` for each complete substitution.
void substitutions(const Rule& r, const Store& s, std::size_t i, Binding& b,
                   const std::function<void(const Binding&)>& fn) {
  if (i == r.body.size()) {
    fn(b);
    return;
  }
  const Literal& lit = r.body[i];
  if (lit.kind != Literal::Kind::positive) {
    substitutions(r, s, i + 1, b, fn);
    return;
  }
  for (const auto& tuple : s.tuples(lit.atom.predicate, lit.atom.args.size())) {
    Binding saved = b;
    bool ok = true;
    for (std::size_t a = 0; a < tuple.size() && ok; ++a) {
      const Term& t = lit.atom.args[a];
      if (t.kind == Term::Kind::constant) {
        ok = tuple[a] == t.value;
      } else if (t.kind == Term::Kind::interval) {
        ok = t.value <= tuple[a] && tuple[a] <= t.hi;
      } else {
        long long shift = t.kind == Term::Kind::offset ? t.value : 0;
        auto it = b.find(t.name);
        if (it == b.end()) {
          b[t.name] = tuple[a] - shift;
        } else {
          ok = it->second + shift == tuple[a];
        }
      }
    }
    if (ok) substitutions(r, s, i + 1, b, fn);
    b = std::move(saved);
  }
}

bool negation_holds(const Atom& a, const Binding& b, const Store& j) {
  for (const auto& tuple : j.tuples(a.predicate, a.args.size())) {
    bool match = true;
    for (std::size_t k = 0; k < tuple.size() && match; ++k) {
      const Term& t = a.args[k];
      if (t.kind == Term::Kind::variable && t.name == "_") continue;
      match = tuple[k] == value_of(t, b);
    }
    if (match) return false;
  }
  return true;
}

bool body_side_conditions(const Rule& r, const Binding& b, const Store& negation_context) {
  for (const auto& lit : r.body) {
    if (lit.kind == Literal::Kind::comparison) {
      if (!holds(value_of(lit.cmp.left, b), lit.cmp.op, value_of(lit.cmp.right, b))) return false;
    } else if (lit.kind == Literal::Kind::negative) {
      if (!negation_holds(lit.atom, b, negation_context)) return false;
    }
  }
  return true;
}

Store base_facts(const Program& p) {
  Store s;
  for (const auto& f : p.facts) {
    std::vector<std::vector<long long>> tuples;
    std::vector<long long> acc;
    expand_terms(f.args, {}, 0, acc, tuples);
    for (auto& t : tuples) s.add({f.predicate, std::move(t)});
  }
  return s;
}

// Least model of the program with every `not` read against the fixed set j.
Store gamma(const std::vector<Rule>& rules, const Store& facts, const Store& j) {
  Store s = facts;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& r : rules) {
      if (!r.head) continue;
      std::vector<OracleAtom> found;
      Binding b;
      substitutions(r, s, 0, b, [&](const Binding& full) {
        if (!body_side_conditions(r, full, j)) return;
        std::vector<std::vector<long long>> heads;
        std::vector<long long> acc;
        expand_terms(r.head->args, full, 0, acc, heads);
        for (auto& h : heads) found.push_back({r.head->predicate, std::move(h)});
      });
      for (auto& a : found) changed = s.add(std::move(a)) || changed;
    }
  }
  return s;
}

}  // namespace

std::string to_string(const OracleAtom& atom) {
  std::string out = atom.predicate;
  if (atom.args.empty()) return out;
  out += '(';
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(atom.args[i]);
  }
  return out + ')';
}

OracleResult naive_solve(const Program& program) {
  std::vector<Rule> rules;
  for (const auto& r : program.rules) rules.push_back(name_anonymous(r));
  Store facts = base_facts(program);

  Store under;  // empty
  for (;;) {
    Store over = gamma(rules, facts, under);
    Store next = gamma(rules, facts, over);
    if (next.all == under.all) break;
    under = std::move(next);
  }
  Store over = gamma(rules, facts, under);

  OracleResult result;
  result.total = over.all == under.all;
  result.atoms = under.all;

  for (const auto& r : rules) {
    if (r.head) continue;
    Binding b;
    substitutions(r, under, 0, b, [&](const Binding& full) {
      if (!body_side_conditions(r, full, under)) return;
      Rule ground;
      for (const auto& lit : r.body) {
        Literal l = lit;
        auto subst = [&](Term& t) {
          if (t.has_variable() && t.name != "_") t = Term::constant(value_of(t, full));
        };
        if (l.kind == Literal::Kind::comparison) {
          subst(l.cmp.left);
          subst(l.cmp.right);
        } else {
          for (auto& t : l.atom.args) subst(t);
        }
        ground.body.push_back(std::move(l));
      }
      result.violated.insert(reasoner::to_string(ground));
    });
  }
  return result;
}

}  // namespace uatm::testing
