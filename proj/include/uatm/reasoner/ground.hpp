#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "uatm/reasoner/program.hpp"

namespace uatm::reasoner {

using AtomId = std::uint32_t;
using PredicateId = std::uint32_t;

inline constexpr std::size_t kDefaultCapacity = 1'000'000;

struct Signature {
  std::string name;
  std::size_t arity = 0;

  friend bool operator==(const Signature&, const Signature&) = default;
};

/// Interns ground atoms. Ids are dense and assigned in insertion order.
class AtomTable {
 public:
  PredicateId intern_predicate(std::string_view name, std::size_t arity);
  std::optional<PredicateId> find_predicate(std::string_view name, std::size_t arity) const;

  /// Returns the id and whether the atom was newly inserted.
  std::pair<AtomId, bool> insert(PredicateId pred, std::span<const Value> args);
  std::optional<AtomId> find(PredicateId pred, std::span<const Value> args) const;

  std::size_t size() const { return preds_.size(); }
  std::size_t predicate_count() const { return signatures_.size(); }

  PredicateId predicate(AtomId id) const { return preds_[id]; }
  std::span<const Value> args(AtomId id) const;
  const Signature& signature(PredicateId pred) const { return signatures_[pred]; }
  /// Atoms of `pred` in insertion order.
  const std::vector<AtomId>& atoms_of(PredicateId pred) const { return by_pred_[pred]; }

  std::string to_string(AtomId id) const;

 private:
  struct Key {
    PredicateId pred;
    std::vector<Value> args;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  std::vector<Signature> signatures_;
  std::unordered_map<std::string, PredicateId> pred_index_;
  std::vector<std::vector<AtomId>> by_pred_;

  std::vector<PredicateId> preds_;
  std::vector<std::size_t> offsets_;
  std::vector<Value> arg_pool_;
  std::unordered_map<Key, AtomId, KeyHash> index_;
};

/// One instance of a source rule. `neg` lists every possibly-derivable atom
/// the negated literals could match; the instance applies only if all are false.
struct GroundRule {
  std::optional<AtomId> head;
  std::vector<AtomId> pos;
  std::vector<AtomId> neg;
  std::uint32_t source = 0;      // index into GroundProgram::source_rules
  std::vector<Value> binding;    // values of the source rule's variables
};

struct GroundProgram {
  AtomTable atoms;
  std::vector<bool> is_fact;
  std::vector<GroundRule> rules;
  std::vector<GroundRule> constraints;
  /// Source rules with each positive `_` renamed apart (`_#1`, `_#2`, ...), and the
  /// variable names in binding order, so instances can be rendered.
  std::vector<Rule> source_rules;
  std::vector<std::vector<std::string>> source_variables;
  std::vector<ShowSpec> shows;

  /// Renders a ground instance in source syntax with the binding substituted.
  std::string render(const GroundRule& rule) const;
};

class CapacityExceededError : public Error {
 public:
  CapacityExceededError(std::size_t capacity, const std::string& rule);
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

/// Instantiates every rule over the atoms that can possibly be derived
/// (negation ignored), expanding intervals and eliminating comparisons and
/// arithmetic. Instances whose negated literal matches a fact are dropped.
/// `capacity` bounds both the atom count and the rule-instance count.
GroundProgram ground(const Program& program, std::size_t capacity = kDefaultCapacity);

}  // namespace uatm::reasoner
