#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uatm/error.hpp"

namespace uatm::reasoner {

using Value = std::int64_t;

/// A term of the supported fragment: integer, variable, `Var+c` / `Var-c`,
/// or an integer interval `lo..hi`. The anonymous variable is spelled `_`.
struct Term {
  enum class Kind : std::uint8_t { constant, variable, offset, interval };

  Kind kind = Kind::constant;
  Value value = 0;  // constant value, offset amount, or interval lower bound
  Value hi = 0;     // interval upper bound
  std::string name;  // variable name for variable/offset

  static Term constant(Value v) { return Term{Kind::constant, v, 0, {}}; }
  static Term variable(std::string n) { return Term{Kind::variable, 0, 0, std::move(n)}; }
  static Term offset(std::string n, Value c) { return Term{Kind::offset, c, 0, std::move(n)}; }
  static Term interval(Value lo, Value up) { return Term{Kind::interval, lo, up, {}}; }

  bool is_constant() const { return kind == Kind::constant; }
  bool has_variable() const { return kind == Kind::variable || kind == Kind::offset; }
  bool is_anonymous() const { return has_variable() && name == "_"; }

  friend bool operator==(const Term&, const Term&) = default;
};

struct Atom {
  std::string predicate;
  std::vector<Term> args;

  std::size_t arity() const { return args.size(); }
  /// True when every argument is an integer constant.
  bool is_ground() const;

  friend bool operator==(const Atom&, const Atom&) = default;
};

enum class CompareOp : std::uint8_t { lt, le, gt, ge, eq, ne };

struct Comparison {
  Term left;
  CompareOp op = CompareOp::eq;
  Term right;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

bool compare(Value lhs, CompareOp op, Value rhs);

struct Literal {
  enum class Kind : std::uint8_t { positive, negative, comparison };

  Kind kind = Kind::positive;
  Atom atom;
  Comparison cmp;

  static Literal pos(Atom a) { return Literal{Kind::positive, std::move(a), {}}; }
  static Literal neg(Atom a) { return Literal{Kind::negative, std::move(a), {}}; }
  static Literal comparison(Term l, CompareOp op, Term r) {
    return Literal{Kind::comparison, {}, Comparison{std::move(l), op, std::move(r)}};
  }

  friend bool operator==(const Literal&, const Literal&) = default;
};

/// A normal rule, or an integrity constraint when `head` is empty.
struct Rule {
  std::optional<Atom> head;
  std::vector<Literal> body;

  bool is_constraint() const { return !head.has_value(); }

  friend bool operator==(const Rule&, const Rule&) = default;
};

struct ShowSpec {
  std::string predicate;
  std::size_t arity = 0;

  friend auto operator<=>(const ShowSpec&, const ShowSpec&) = default;
};

/// A parsed logic program. Facts are variable-free atoms (intervals allowed);
/// they are kept apart from rules so grounding can seed from them directly.
struct Program {
  std::vector<Atom> facts;
  std::vector<Rule> rules;
  std::vector<ShowSpec> shows;

  /// Adds a variable-free fact. Throws UnsafeRuleError on variables.
  void add_fact(Atom fact);
  /// Adds a rule after checking safety.
  void add_rule(Rule rule);
  void add_show(std::string predicate, std::size_t arity);
  /// Appends every statement of `other`.
  void append(const Program& other);

  /// Removes every fact equal to `fact`; returns how many were removed.
  std::size_t remove_fact(const Atom& fact);

  bool empty() const { return facts.empty() && rules.empty() && shows.empty(); }

  friend bool operator==(const Program&, const Program&) = default;
};

/// Syntax error with 1-based source position.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UnsafeRuleError : public Error {
 public:
  UnsafeRuleError(std::string variable, const std::string& rule);
  const std::string& variable() const { return variable_; }

 private:
  std::string variable_;
};

class UnsupportedConstructError : public Error {
 public:
  UnsupportedConstructError(std::string construct, std::size_t line, std::size_t column);
  const std::string& construct() const { return construct_; }

 private:
  std::string construct_;
};

/// Throws UnsafeRuleError when a variable of the head, of a negated literal,
/// or of a comparison has no occurrence in a positive body atom.
void check_safety(const Rule& rule);

Program parse_program(std::string_view text);
Atom parse_atom(std::string_view text);

std::string to_string(const Term& term);
std::string to_string(const Atom& atom);
std::string to_string(const Literal& literal);
std::string to_string(const Rule& rule);
std::string to_string(CompareOp op);
/// Serializes facts, then rules, then show directives, one statement per line.
std::string to_string(const Program& program);

}  // namespace uatm::reasoner
