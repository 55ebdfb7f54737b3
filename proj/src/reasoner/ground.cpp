#include "uatm/reasoner/ground.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

namespace uatm::reasoner {

// ---------------------------------------------------------------------------
// AtomTable

PredicateId AtomTable::intern_predicate(std::string_view name, std::size_t arity) {
  std::string key = std::string(name) + "/" + std::to_string(arity);
  auto [it, inserted] = pred_index_.try_emplace(key, static_cast<PredicateId>(signatures_.size()));
  if (inserted) {
    signatures_.push_back(Signature{std::string(name), arity});
    by_pred_.emplace_back();
  }
  return it->second;
}

std::optional<PredicateId> AtomTable::find_predicate(std::string_view name,
                                                     std::size_t arity) const {
  auto it = pred_index_.find(std::string(name) + "/" + std::to_string(arity));
  if (it == pred_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AtomTable::KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = std::hash<PredicateId>{}(k.pred);
  for (Value v : k.args) h ^= std::hash<Value>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::pair<AtomId, bool> AtomTable::insert(PredicateId pred, std::span<const Value> args) {
  Key key{pred, std::vector<Value>(args.begin(), args.end())};
  auto id = static_cast<AtomId>(preds_.size());
  auto [it, inserted] = index_.try_emplace(std::move(key), id);
  if (!inserted) return {it->second, false};
  preds_.push_back(pred);
  offsets_.push_back(arg_pool_.size());
  arg_pool_.insert(arg_pool_.end(), args.begin(), args.end());
  by_pred_[pred].push_back(id);
  return {id, true};
}

std::optional<AtomId> AtomTable::find(PredicateId pred, std::span<const Value> args) const {
  auto it = index_.find(Key{pred, std::vector<Value>(args.begin(), args.end())});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Value> AtomTable::args(AtomId id) const {
  return {arg_pool_.data() + offsets_[id], signatures_[preds_[id]].arity};
}

std::string AtomTable::to_string(AtomId id) const {
  const auto& sig = signatures_[preds_[id]];
  std::string out = sig.name;
  if (sig.arity == 0) return out;
  out += '(';
  auto a = args(id);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(a[i]);
  }
  out += ')';
  return out;
}

CapacityExceededError::CapacityExceededError(std::size_t capacity, const std::string& rule)
    : Error("grounding capacity of " + std::to_string(capacity) + " exceeded by rule: " + rule),
      rule_(rule) {}

// ---------------------------------------------------------------------------
// Rendering

std::string GroundProgram::render(const GroundRule& rule) const {
  const Rule& src = source_rules[rule.source];
  const auto& names = source_variables[rule.source];
  auto subst = [&](const Term& t) {
    if (!t.has_variable() || t.name == "_") return t;
    auto it = std::find(names.begin(), names.end(), t.name);
    Value v = rule.binding[static_cast<std::size_t>(it - names.begin())];
    return Term::constant(t.kind == Term::Kind::offset ? v + t.value : v);
  };
  auto subst_atom = [&](const Atom& a) {
    Atom out{a.predicate, {}};
    for (const auto& t : a.args) out.args.push_back(subst(t));
    return out;
  };
  Rule out;
  if (rule.head) {
    out.head = Atom{atoms.signature(atoms.predicate(*rule.head)).name, {}};
    for (Value v : atoms.args(*rule.head)) out.head->args.push_back(Term::constant(v));
  }
  for (const auto& lit : src.body) {
    Literal l = lit;
    if (lit.kind == Literal::Kind::comparison) {
      l.cmp.left = subst(lit.cmp.left);
      l.cmp.right = subst(lit.cmp.right);
    } else {
      l.atom = subst_atom(lit.atom);
    }
    out.body.push_back(std::move(l));
  }
  return to_string(out);
}

// ---------------------------------------------------------------------------
// Grounding

namespace {

constexpr int kWildcard = -1;

struct CTerm {
  Term::Kind kind = Term::Kind::constant;
  Value value = 0;
  Value hi = 0;
  int var = kWildcard;

  bool wildcard() const { return kind == Term::Kind::variable && var == kWildcard; }
};

struct CAtom {
  PredicateId pred = 0;
  std::vector<CTerm> args;
};

struct CComparison {
  CTerm left;
  CompareOp op;
  CTerm right;
};

struct CRule {
  std::optional<CAtom> head;
  std::vector<CAtom> pos;
  std::vector<CAtom> neg;
  std::vector<CComparison> cmps;
  std::size_t var_count = 0;
  std::string text;
};

struct Instance {
  std::uint32_t source;
  std::vector<Value> binding;
  std::vector<std::vector<Value>> heads;
};

class Grounder {
 public:
  Grounder(const Program& program, std::size_t capacity) : capacity_(capacity) {
    out_.shows = program.shows;
    for (const auto& fact : program.facts) seed_fact(fact);
    for (const auto& rule : program.rules) compile(rule);
  }

  GroundProgram run() {
    saturate();
    for (std::uint32_t i = 0; i < rules_.size(); ++i) {
      if (!rules_[i].head) ground_constraint(i);
    }
    build();
    return std::move(out_);
  }

 private:
  void seed_fact(const Atom& fact) {
    PredicateId pred = out_.atoms.intern_predicate(fact.predicate, fact.arity());
    std::vector<Value> args(fact.arity());
    expand(fact.args, 0, args, [&](const std::vector<Value>& a) {
      auto [id, inserted] = out_.atoms.insert(pred, a);
      if (inserted) out_.is_fact.push_back(true);
      check_capacity(to_string(fact) + ".");
    });
  }

  template <typename Fn>
  void expand(const std::vector<Term>& terms, std::size_t i, std::vector<Value>& acc, Fn&& fn) {
    if (i == terms.size()) {
      fn(acc);
      return;
    }
    const Term& t = terms[i];
    if (t.kind == Term::Kind::interval) {
      for (Value v = t.value; v <= t.hi; ++v) {
        acc[i] = v;
        expand(terms, i + 1, acc, fn);
      }
    } else {
      acc[i] = t.value;
      expand(terms, i + 1, acc, fn);
    }
  }

  void check_capacity(const std::string& rule_text) const {
    if (out_.atoms.size() > capacity_ || instance_count_ > capacity_) {
      throw CapacityExceededError(capacity_, rule_text);
    }
  }

  void compile(const Rule& rule) {
    Rule renamed = rule;
    std::size_t anon = 0;
    for (auto& lit : renamed.body) {
      if (lit.kind != Literal::Kind::positive) continue;
      for (auto& t : lit.atom.args) {
        if (t.is_anonymous()) t.name = "_#" + std::to_string(++anon);
      }
    }

    std::vector<std::string> names;
    auto var_index = [&](const std::string& name) -> int {
      if (name == "_") return kWildcard;
      auto it = std::find(names.begin(), names.end(), name);
      if (it != names.end()) return static_cast<int>(it - names.begin());
      names.push_back(name);
      return static_cast<int>(names.size() - 1);
    };
    auto cterm = [&](const Term& t) {
      CTerm c{t.kind, t.value, t.hi, kWildcard};
      if (t.has_variable()) c.var = var_index(t.name);
      return c;
    };
    auto catom = [&](const Atom& a) {
      CAtom c{out_.atoms.intern_predicate(a.predicate, a.arity()), {}};
      for (const auto& t : a.args) c.args.push_back(cterm(t));
      return c;
    };

    CRule c;
    c.text = to_string(rule);
    for (const auto& lit : renamed.body) {
      if (lit.kind == Literal::Kind::positive) c.pos.push_back(catom(lit.atom));
    }
    for (const auto& lit : renamed.body) {
      if (lit.kind == Literal::Kind::negative) c.neg.push_back(catom(lit.atom));
      if (lit.kind == Literal::Kind::comparison) {
        c.cmps.push_back(CComparison{cterm(lit.cmp.left), lit.cmp.op, cterm(lit.cmp.right)});
      }
    }
    if (renamed.head) c.head = catom(*renamed.head);
    c.var_count = names.size();

    rules_.push_back(std::move(c));
    out_.source_rules.push_back(std::move(renamed));
    out_.source_variables.push_back(std::move(names));
  }

  struct Range {
    std::size_t begin;
    std::size_t end;
  };

  // Matches positive literal `lit` of `rule` against atoms in `ranges[lit]`,
  // extending the partial binding, and reports every complete binding.
  template <typename Fn>
  void join(const CRule& rule, std::size_t lit, const std::vector<Range>& ranges,
            std::vector<Value>& binding, std::vector<char>& bound, Fn&& on_match) const {
    if (lit == rule.pos.size()) {
      on_match(binding);
      return;
    }
    const CAtom& pattern = rule.pos[lit];
    const auto& candidates = out_.atoms.atoms_of(pattern.pred);
    std::vector<int> newly;
    for (std::size_t k = ranges[lit].begin; k < ranges[lit].end; ++k) {
      auto args = out_.atoms.args(candidates[k]);
      bool ok = true;
      for (std::size_t a = 0; a < pattern.args.size() && ok; ++a) {
        const CTerm& t = pattern.args[a];
        switch (t.kind) {
          case Term::Kind::constant:
            ok = args[a] == t.value;
            break;
          case Term::Kind::interval:
            ok = t.value <= args[a] && args[a] <= t.hi;
            break;
          case Term::Kind::variable:
          case Term::Kind::offset: {
            Value shift = t.kind == Term::Kind::offset ? t.value : 0;
            auto v = static_cast<std::size_t>(t.var);
            if (bound[v]) {
              ok = args[a] == binding[v] + shift;
            } else {
              binding[v] = args[a] - shift;
              bound[v] = 1;
              newly.push_back(t.var);
            }
            break;
          }
        }
      }
      if (ok) join(rule, lit + 1, ranges, binding, bound, on_match);
      for (int v : newly) bound[static_cast<std::size_t>(v)] = 0;
      newly.clear();
    }
  }

  static Value eval(const CTerm& t, const std::vector<Value>& binding) {
    switch (t.kind) {
      case Term::Kind::variable: return binding[static_cast<std::size_t>(t.var)];
      case Term::Kind::offset: return binding[static_cast<std::size_t>(t.var)] + t.value;
      default: return t.value;
    }
  }

  bool comparisons_hold(const CRule& rule, const std::vector<Value>& binding) const {
    return std::all_of(rule.cmps.begin(), rule.cmps.end(), [&](const CComparison& c) {
      return compare(eval(c.left, binding), c.op, eval(c.right, binding));
    });
  }

  std::vector<std::vector<Value>> head_tuples(const CAtom& head,
                                              const std::vector<Value>& binding) const {
    std::vector<std::vector<Value>> out(1);
    for (const auto& t : head.args) {
      if (t.kind == Term::Kind::interval) {
        std::vector<std::vector<Value>> next;
        for (const auto& prefix : out) {
          for (Value v = t.value; v <= t.hi; ++v) {
            next.push_back(prefix);
            next.back().push_back(v);
          }
        }
        out = std::move(next);
      } else {
        for (auto& prefix : out) prefix.push_back(eval(t, binding));
      }
    }
    return out;
  }

  void collect(std::uint32_t r, const std::vector<Range>& ranges) {
    const CRule& rule = rules_[r];
    std::vector<Value> binding(rule.var_count, 0);
    std::vector<char> bound(rule.var_count, 0);
    std::vector<std::vector<Value>> matches;
    join(rule, 0, ranges, binding, bound, [&](const std::vector<Value>& b) {
      if (!comparisons_hold(rule, b)) return;
      matches.push_back(b);
      if (instance_count_ + matches.size() > capacity_) throw CapacityExceededError(capacity_, rule.text);
    });
    for (auto& b : matches) {
      Instance inst{r, std::move(b), {}};
      if (rule.head) {
        inst.heads = head_tuples(*rule.head, inst.binding);
        for (const auto& h : inst.heads) {
          auto [id, inserted] = out_.atoms.insert(rule.head->pred, h);
          if (inserted) out_.is_fact.push_back(false);
        }
      }
      ++instance_count_;
      check_capacity(rule.text);
      instances_.push_back(std::move(inst));
    }
  }

  // Semi-naive saturation of the possibly-derivable atoms: every round only
  // joins combinations that use at least one atom first seen last round.
  void saturate() {
    std::size_t npred = out_.atoms.predicate_count();
    std::vector<std::size_t> old_end(npred, 0);
    std::vector<std::size_t> cur_end(npred, 0);
    bool first = true;
    for (;;) {
      bool delta = false;
      for (PredicateId p = 0; p < npred; ++p) {
        cur_end[p] = out_.atoms.atoms_of(p).size();
        delta = delta || cur_end[p] > old_end[p];
      }
      if (!delta && !first) break;
      for (std::uint32_t r = 0; r < rules_.size(); ++r) {
        const CRule& rule = rules_[r];
        if (!rule.head) continue;
        if (rule.pos.empty()) {
          if (first) collect(r, {});
          continue;
        }
        for (std::size_t i = 0; i < rule.pos.size(); ++i) {
          PredicateId pi = rule.pos[i].pred;
          if (cur_end[pi] == old_end[pi]) continue;
          std::vector<Range> ranges(rule.pos.size());
          for (std::size_t j = 0; j < rule.pos.size(); ++j) {
            PredicateId pj = rule.pos[j].pred;
            if (j < i) ranges[j] = {0, old_end[pj]};
            else if (j == i) ranges[j] = {old_end[pj], cur_end[pj]};
            else ranges[j] = {0, cur_end[pj]};
          }
          collect(r, ranges);
        }
      }
      old_end = cur_end;
      first = false;
    }
  }

  void ground_constraint(std::uint32_t r) {
    const CRule& rule = rules_[r];
    std::vector<Range> ranges;
    for (const auto& p : rule.pos) ranges.push_back({0, out_.atoms.atoms_of(p.pred).size()});
    collect(r, ranges);
  }

  // Resolves negated literals against the saturated atom set. Returns false
  // when the instance can never apply (a negated atom is a fact).
  bool resolve_negatives(const CRule& rule, const std::vector<Value>& binding,
                         std::vector<AtomId>& neg) const {
    for (const auto& lit : rule.neg) {
      bool wildcard = false;
      std::vector<Value> args(lit.args.size());
      for (std::size_t a = 0; a < lit.args.size(); ++a) {
        if (lit.args[a].wildcard()) {
          wildcard = true;
        } else {
          args[a] = eval(lit.args[a], binding);
        }
      }
      if (!wildcard) {
        if (auto id = out_.atoms.find(lit.pred, args)) {
          if (out_.is_fact[*id]) return false;
          neg.push_back(*id);
        }
        continue;
      }
      for (AtomId id : out_.atoms.atoms_of(lit.pred)) {
        auto cand = out_.atoms.args(id);
        bool match = true;
        for (std::size_t a = 0; a < lit.args.size() && match; ++a) {
          if (lit.args[a].wildcard()) continue;
          match = cand[a] == args[a];
        }
        if (!match) continue;
        if (out_.is_fact[id]) return false;
        neg.push_back(id);
      }
    }
    return true;
  }

  void build() {
    std::unordered_set<std::string> seen;
    auto key_of = [](const GroundRule& g) {
      std::string k;
      auto put = [&](std::uint32_t v) { k.append(reinterpret_cast<const char*>(&v), sizeof v); };
      put(g.head ? *g.head + 1 : 0);
      // violated constraints are reported per binding, so keep those apart
      if (!g.head) {
        put(g.source);
        for (auto v : g.binding) k.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
      put(static_cast<std::uint32_t>(g.pos.size()));
      for (auto a : g.pos) put(a);
      for (auto a : g.neg) put(a);
      return k;
    };

    for (auto& inst : instances_) {
      const CRule& rule = rules_[inst.source];
      GroundRule g;
      g.source = inst.source;
      if (!resolve_negatives(rule, inst.binding, g.neg)) continue;
      for (const auto& lit : rule.pos) {
        std::vector<Value> args;
        for (const auto& t : lit.args) args.push_back(eval(t, inst.binding));
        g.pos.push_back(*out_.atoms.find(lit.pred, args));
      }
      std::sort(g.pos.begin(), g.pos.end());
      g.pos.erase(std::unique(g.pos.begin(), g.pos.end()), g.pos.end());
      std::sort(g.neg.begin(), g.neg.end());
      g.neg.erase(std::unique(g.neg.begin(), g.neg.end()), g.neg.end());
      g.binding = std::move(inst.binding);

      if (!rule.head) {
        if (seen.insert(key_of(g)).second) out_.constraints.push_back(std::move(g));
        continue;
      }
      for (const auto& h : inst.heads) {
        AtomId head = *out_.atoms.find(rule.head->pred, h);
        if (out_.is_fact[head]) continue;
        GroundRule copy = g;
        copy.head = head;
        if (seen.insert(key_of(copy)).second) out_.rules.push_back(std::move(copy));
      }
    }
    instances_.clear();
  }

  std::size_t capacity_;
  std::size_t instance_count_ = 0;
  std::vector<CRule> rules_;
  std::vector<Instance> instances_;
  GroundProgram out_;
};

}  // namespace

GroundProgram ground(const Program& program, std::size_t capacity) {
  return Grounder(program, capacity).run();
}

}  // namespace uatm::reasoner
