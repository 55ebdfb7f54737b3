#include "uatm/reasoner/stratify.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace uatm::reasoner {
namespace {

std::string join_cycle(const std::vector<std::string>& cycle) {
  std::string out = "program is not stratifiable; negative cycle: ";
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (i) out += i == 1 ? " -not-> " : " -> ";
    out += cycle[i];
  }
  return out;
}

struct Edge {
  AtomId to;
  bool negative;
};

}  // namespace

NonStratifiableError::NonStratifiableError(std::vector<std::string> cycle)
    : Error(join_cycle(cycle)), cycle_(std::move(cycle)) {}

Stratification stratify(const GroundProgram& program) {
  const std::size_t n = program.atoms.size();
  std::vector<std::vector<Edge>> out(n);
  for (const auto& rule : program.rules) {
    for (AtomId b : rule.pos) out[b].push_back({*rule.head, false});
    for (AtomId b : rule.neg) out[b].push_back({*rule.head, true});
  }

  // Iterative Tarjan. SCCs come out dependents-first.
  constexpr std::size_t unvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
  std::vector<char> on_stack(n, 0);
  std::vector<AtomId> stack;
  std::vector<std::vector<AtomId>> components;
  std::size_t counter = 0;

  struct Frame {
    AtomId atom;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (AtomId root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.edge < out[f.atom].size()) {
        AtomId next = out[f.atom][f.edge++].to;
        if (index[next] == unvisited) {
          index[next] = low[next] = counter++;
          stack.push_back(next);
          on_stack[next] = 1;
          call.push_back({next, 0});
        } else if (on_stack[next]) {
          low[f.atom] = std::min(low[f.atom], index[next]);
        }
        continue;
      }
      AtomId done = f.atom;
      call.pop_back();
      if (!call.empty()) low[call.back().atom] = std::min(low[call.back().atom], low[done]);
      if (low[done] == index[done]) {
        std::vector<AtomId> members;
        AtomId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = components.size();
          members.push_back(w);
        } while (w != done);
        components.push_back(std::move(members));
      }
    }
  }

  // Reject negation inside a component, reporting one concrete cycle.
  for (AtomId b = 0; b < n; ++b) {
    for (const auto& e : out[b]) {
      if (!e.negative || comp[e.to] != comp[b]) continue;
      std::vector<AtomId> parent(n, static_cast<AtomId>(n));
      std::deque<AtomId> queue{e.to};
      parent[e.to] = e.to;
      while (!queue.empty() && parent[b] == n) {
        AtomId a = queue.front();
        queue.pop_front();
        for (const auto& next : out[a]) {
          if (comp[next.to] != comp[b] || parent[next.to] != n) continue;
          parent[next.to] = a;
          queue.push_back(next.to);
        }
      }
      std::vector<std::string> cycle{program.atoms.to_string(b)};
      std::vector<AtomId> path;
      for (AtomId a = b; a != e.to; a = parent[a]) path.push_back(a);
      path.push_back(e.to);
      std::reverse(path.begin(), path.end());
      for (AtomId a : path) cycle.push_back(program.atoms.to_string(a));
      throw NonStratifiableError(std::move(cycle));
    }
  }

  Stratification result;
  result.level.assign(n, 0);
  std::vector<std::size_t> comp_level(components.size(), 0);
  for (std::size_t c = components.size(); c-- > 0;) {
    for (AtomId a : components[c]) {
      for (const auto& e : out[a]) {
        if (comp[e.to] == c) continue;
        comp_level[comp[e.to]] = std::max(comp_level[comp[e.to]], comp_level[c] + 1);
      }
    }
  }
  std::size_t depth = 0;
  for (AtomId a = 0; a < n; ++a) {
    result.level[a] = comp_level[comp[a]];
    depth = std::max(depth, result.level[a] + 1);
  }
  if (n == 0) depth = 0;
  result.strata.resize(depth);
  for (AtomId a = 0; a < n; ++a) result.strata[result.level[a]].atoms.push_back(a);
  for (std::size_t r = 0; r < program.rules.size(); ++r) {
    result.strata[result.level[*program.rules[r].head]].rules.push_back(r);
  }
  return result;
}

}  // namespace uatm::reasoner
