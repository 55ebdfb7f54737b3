#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "uatm/reasoner/ground.hpp"
#include "uatm/reasoner/stratify.hpp"

namespace uatm::reasoner {

using Tuple = std::vector<Value>;

struct ModelAtom {
  std::string predicate;
  Tuple args;

  /// Orders by predicate name, then arity, then arguments lexicographically.
  friend bool operator<(const ModelAtom& a, const ModelAtom& b);
  friend bool operator==(const ModelAtom&, const ModelAtom&) = default;
};

std::string to_string(const ModelAtom& atom);

enum class Status { satisfiable, unsatisfiable };

/// The unique model of a stratified program plus the integrity check result.
struct Model {
  std::vector<ModelAtom> atoms;        // sorted, unique
  Status status = Status::satisfiable;
  std::vector<std::string> violated;   // rendered ground constraints, sorted
  std::vector<ShowSpec> shows;

  bool satisfiable() const { return status == Status::satisfiable; }
  bool contains(const ModelAtom& atom) const;
  /// Atoms selected by the show directives (all atoms when there are none).
  std::vector<ModelAtom> shown() const;
};

/// Per-stratum trace: true-atom count after each semi-naive iteration.
struct EvaluationTrace {
  std::vector<std::vector<std::size_t>> iterations;
};

Model evaluate(const GroundProgram& program);
Model evaluate(const GroundProgram& program, const Stratification& strata,
               EvaluationTrace* trace = nullptr);

struct SolveOptions {
  std::size_t capacity = kDefaultCapacity;
};

/// ground, stratify, evaluate.
Model solve(const Program& program, const SolveOptions& options = {});

/// Tuples of predicate/arity in lexicographic order; empty for unknown
/// predicates.
std::vector<Tuple> query(const Model& model, std::string_view predicate, std::size_t arity);

std::string_view to_string(Status status);
/// Shown atoms separated by single spaces.
std::string format_answer(const Model& model, bool show_all = false);
nlohmann::ordered_json to_json(const Model& model, bool show_all = false);

}  // namespace uatm::reasoner
