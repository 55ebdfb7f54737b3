#include "uatm/reasoner/model.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace uatm::reasoner {

bool operator<(const ModelAtom& a, const ModelAtom& b) {
  if (a.predicate != b.predicate) return a.predicate < b.predicate;
  if (a.args.size() != b.args.size()) return a.args.size() < b.args.size();
  return a.args < b.args;
}

std::string to_string(const ModelAtom& atom) {
  std::string out = atom.predicate;
  if (atom.args.empty()) return out;
  out += '(';
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(atom.args[i]);
  }
  out += ')';
  return out;
}

bool Model::contains(const ModelAtom& atom) const {
  return std::binary_search(atoms.begin(), atoms.end(), atom);
}

std::vector<ModelAtom> Model::shown() const {
  if (shows.empty()) return atoms;
  std::vector<ModelAtom> out;
  for (const auto& a : atoms) {
    bool visible = std::any_of(shows.begin(), shows.end(), [&](const ShowSpec& s) {
      return s.predicate == a.predicate && s.arity == a.args.size();
    });
    if (visible) out.push_back(a);
  }
  return out;
}

Model evaluate(const GroundProgram& program) { return evaluate(program, stratify(program)); }

Model evaluate(const GroundProgram& program, const Stratification& strata,
               EvaluationTrace* trace) {
  const auto& atoms = program.atoms;
  std::vector<char> truth(atoms.size(), 0);
  std::size_t true_count = 0;
  for (AtomId a = 0; a < atoms.size(); ++a) {
    if (program.is_fact[a]) {
      truth[a] = 1;
      ++true_count;
    }
  }

  // Each rule waits on the count of its positive body atoms not yet true.
  // Negated atoms live in earlier strata, so they are final by the time the
  // rule's own stratum runs.
  std::vector<std::size_t> waiting(program.rules.size(), 0);
  std::vector<std::vector<std::size_t>> watchers(atoms.size());

  for (std::size_t s = 0; s < strata.strata.size(); ++s) {
    const auto& stratum = strata.strata[s];
    std::vector<AtomId> delta;
    auto derive = [&](AtomId head) {
      if (truth[head]) return;
      truth[head] = 1;
      ++true_count;
      delta.push_back(head);
    };

    // Rules ready on entry fire together, so each later round is one
    // semi-naive step over the previous round's new atoms.
    std::vector<std::size_t> ready;
    for (std::size_t r : stratum.rules) {
      const auto& rule = program.rules[r];
      bool blocked = std::any_of(rule.neg.begin(), rule.neg.end(), [&](AtomId a) { return truth[a]; });
      if (blocked) {
        waiting[r] = std::numeric_limits<std::size_t>::max();
        continue;
      }
      for (AtomId a : rule.pos) {
        if (truth[a]) continue;
        ++waiting[r];
        watchers[a].push_back(r);
      }
      if (waiting[r] == 0) ready.push_back(r);
    }
    for (std::size_t r : ready) derive(*program.rules[r].head);

    std::vector<std::size_t> sizes{true_count};
    while (!delta.empty()) {
      std::vector<AtomId> current;
      current.swap(delta);
      for (AtomId a : current) {
        for (std::size_t r : watchers[a]) {
          if (--waiting[r] == 0) derive(*program.rules[r].head);
        }
      }
      sizes.push_back(true_count);
    }
    if (trace) trace->iterations.push_back(std::move(sizes));
  }

  Model model;
  model.shows = program.shows;
  for (AtomId a = 0; a < atoms.size(); ++a) {
    if (!truth[a]) continue;
    auto args = atoms.args(a);
    model.atoms.push_back(ModelAtom{atoms.signature(atoms.predicate(a)).name,
                                    Tuple(args.begin(), args.end())});
  }
  std::sort(model.atoms.begin(), model.atoms.end());

  std::set<std::string> violated;
  for (const auto& c : program.constraints) {
    bool holds = std::all_of(c.pos.begin(), c.pos.end(), [&](AtomId a) { return truth[a]; }) &&
                 std::none_of(c.neg.begin(), c.neg.end(), [&](AtomId a) { return truth[a]; });
    if (holds) violated.insert(program.render(c));
  }
  model.violated.assign(violated.begin(), violated.end());
  model.status = model.violated.empty() ? Status::satisfiable : Status::unsatisfiable;
  return model;
}

Model solve(const Program& program, const SolveOptions& options) {
  GroundProgram g = ground(program, options.capacity);
  return evaluate(g, stratify(g));
}

std::vector<Tuple> query(const Model& model, std::string_view predicate, std::size_t arity) {
  std::vector<Tuple> out;
  for (const auto& a : model.atoms) {
    if (a.predicate == predicate && a.args.size() == arity) out.push_back(a.args);
  }
  return out;
}

std::string_view to_string(Status status) {
  return status == Status::satisfiable ? "SATISFIABLE" : "UNSATISFIABLE";
}

std::string format_answer(const Model& model, bool show_all) {
  std::string out;
  for (const auto& a : show_all ? model.atoms : model.shown()) {
    if (!out.empty()) out += ' ';
    out += to_string(a);
  }
  return out;
}

nlohmann::ordered_json to_json(const Model& model, bool show_all) {
  nlohmann::ordered_json atoms = nlohmann::ordered_json::array();
  for (const auto& a : show_all ? model.atoms : model.shown()) atoms.push_back(to_string(a));
  return {{"status", to_string(model.status)},
          {"atoms", std::move(atoms)},
          {"violated", model.violated}};
}

}  // namespace uatm::reasoner
