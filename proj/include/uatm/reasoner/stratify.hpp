#pragma once

#include <cstddef>
#include <vector>

#include "uatm/reasoner/ground.hpp"

namespace uatm::reasoner {

struct Stratum {
  std::vector<AtomId> atoms;
  std::vector<std::size_t> rules;  // indices into GroundProgram::rules, by head
};

/// Strata over ground atoms. An atom's level is the length of the longest
/// dependency chain below it in the condensation of the atom dependency
/// graph, so positive dependencies sit in the same or an earlier stratum and
/// negated ones strictly earlier.
struct Stratification {
  std::vector<Stratum> strata;
  std::vector<std::size_t> level;  // per AtomId
};

class NonStratifiableError : public Error {
 public:
  explicit NonStratifiableError(std::vector<std::string> cycle);
  /// The cycle as rendered atoms; the first step is the negated dependency.
  const std::vector<std::string>& cycle() const { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

Stratification stratify(const GroundProgram& program);

}  // namespace uatm::reasoner
