#include <cctype>
#include <charconv>
#include <limits>

#include "uatm/reasoner/program.hpp"

namespace uatm::reasoner {
namespace {

enum class Tok : std::uint8_t {
  end,
  identifier,
  variable,
  number,
  kw_not,
  lparen,
  rparen,
  comma,
  dot,
  dotdot,
  if_,
  plus,
  minus,
  cmp,
  slash,
  directive,
  // Everything below is recognised only to be rejected with a precise message.
  other,
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space_and_comments();
    Token t;
    t.line = line_;
    t.column = column_;
    if (pos_ >= src_.size()) return t;

    char c = src_[pos_];
    if (std::islower(static_cast<unsigned char>(c))) {
      t.text = take_word();
      t.kind = t.text == "not" ? Tok::kw_not : Tok::identifier;
      return t;
    }
    if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
      t.text = take_word();
      t.kind = Tok::variable;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      t.text = std::string(src_.substr(start, pos_ - start));
      t.kind = Tok::number;
      return t;
    }
    if (c == '#') {
      advance();
      t.text = "#" + take_word();
      t.kind = Tok::directive;
      return t;
    }
    if (c == '"') {
      std::size_t start = pos_;
      advance();
      while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') advance();
      if (pos_ < src_.size() && src_[pos_] == '"') advance();
      t.text = std::string(src_.substr(start, pos_ - start));
      t.kind = Tok::other;
      return t;
    }

    auto two = src_.substr(pos_, 2);
    auto emit = [&](Tok kind, std::size_t len) {
      t.kind = kind;
      t.text = std::string(src_.substr(pos_, len));
      for (std::size_t i = 0; i < len; ++i) advance();
      return t;
    };
    if (two == ":-") return emit(Tok::if_, 2);
    if (two == "..") return emit(Tok::dotdot, 2);
    if (two == "<=" || two == ">=" || two == "!=" || two == "==" || two == "<>") {
      return emit(Tok::cmp, 2);
    }
    if (two == ":~" || two == "**") return emit(Tok::other, 2);
    switch (c) {
      case '(': return emit(Tok::lparen, 1);
      case ')': return emit(Tok::rparen, 1);
      case ',': return emit(Tok::comma, 1);
      case '.': return emit(Tok::dot, 1);
      case '+': return emit(Tok::plus, 1);
      case '-': return emit(Tok::minus, 1);
      case '<':
      case '>':
      case '=': return emit(Tok::cmp, 1);
      case '/': return emit(Tok::slash, 1);
      default: return emit(Tok::other, 1);
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string take_word() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      advance();
    }
    return std::string(src_.substr(start, pos_ - start));
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '%') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '*') {
          // block comment %* ... *%
          advance();
          advance();
          while (pos_ < src_.size() && src_.substr(pos_, 2) != "*%") advance();
          if (pos_ < src_.size()) {
            advance();
            advance();
          }
        } else {
          while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        }
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) { shift(); }

  Program program() {
    Program p;
    while (cur_.kind != Tok::end) statement(p);
    return p;
  }

  Atom single_atom() {
    Atom a = atom();
    if (cur_.kind == Tok::dot) shift();
    if (cur_.kind != Tok::end) fail("expected end of input after atom");
    return a;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(cur_.line, cur_.column, msg + (cur_.kind == Tok::end ? " (got end of input)"
                                                                          : " (got '" + cur_.text + "')"));
  }

  [[noreturn]] void unsupported(const std::string& construct) const {
    throw UnsupportedConstructError(construct, cur_.line, cur_.column);
  }

  void shift() { cur_ = lex_.next(); }

  void expect(Tok kind, const char* what) {
    if (cur_.kind != kind) fail(std::string("expected ") + what);
    shift();
  }

  void reject_other() const {
    const auto& t = cur_.text;
    if (t == "{" || t == "}") unsupported("choice rule");
    if (t == "|" || t == ";") unsupported("disjunction or pooling '" + t + "'");
    if (t == ":~") unsupported("weak constraint");
    if (t == "@") unsupported("external function term");
    if (!t.empty() && t[0] == '"') unsupported("string constant " + t);
    if (t == "*" || t == "**" || t == "\\" || t == "&" || t == "^" || t == "?" || t == "~") {
      unsupported("arithmetic operator '" + t + "'");
    }
    if (t == ":") unsupported("conditional literal");
    fail("unexpected character");
  }

  void statement(Program& p) {
    if (cur_.kind == Tok::directive) {
      directive(p);
      return;
    }
    if (cur_.kind == Tok::if_) {
      shift();
      Rule r;
      r.body = body();
      expect(Tok::dot, "'.' after constraint body");
      p.add_rule(std::move(r));
      return;
    }
    if (cur_.kind == Tok::minus) unsupported("classical negation");
    if (cur_.kind == Tok::other) reject_other();
    if (cur_.kind != Tok::identifier) fail("expected a rule head, constraint, or directive");

    Atom head = atom();
    if (cur_.kind == Tok::other) reject_other();
    if (cur_.kind == Tok::dot) {
      shift();
      bool variable_free = true;
      for (const auto& t : head.args) variable_free = variable_free && !t.has_variable();
      if (variable_free) {
        p.add_fact(std::move(head));
      } else {
        p.add_rule(Rule{std::move(head), {}});
      }
      return;
    }
    expect(Tok::if_, "':-' or '.' after rule head");
    Rule r{std::move(head), body()};
    expect(Tok::dot, "'.' after rule body");
    for (const auto& lit : r.body) {
      const Atom* a = lit.kind == Literal::Kind::comparison ? nullptr : &lit.atom;
      if (!a) continue;
      for (const auto& t : a->args) {
        if (t.kind == Term::Kind::interval) {
          throw UnsupportedConstructError("interval in rule body", cur_.line, cur_.column);
        }
      }
    }
    p.add_rule(std::move(r));
  }

  void directive(Program& p) {
    std::string name = cur_.text;
    if (name != "#show") {
      if (name == "#count" || name == "#sum" || name == "#min" || name == "#max" ||
          name == "#sum+") {
        unsupported("aggregate " + name);
      }
      unsupported("directive " + name);
    }
    shift();
    if (cur_.kind != Tok::identifier) {
      if (cur_.kind == Tok::dot) unsupported("#show without signature");
      unsupported("#show with term");
    }
    std::string pred = cur_.text;
    shift();
    expect(Tok::slash, "'/' in #show signature");
    if (cur_.kind != Tok::number) fail("expected arity in #show signature");
    auto arity = static_cast<std::size_t>(number_value(cur_.text));
    shift();
    expect(Tok::dot, "'.' after #show");
    p.add_show(std::move(pred), arity);
  }

  std::vector<Literal> body() {
    std::vector<Literal> lits;
    lits.push_back(literal());
    while (cur_.kind == Tok::comma) {
      shift();
      lits.push_back(literal());
    }
    if (cur_.kind == Tok::other) reject_other();
    return lits;
  }

  Literal literal() {
    if (cur_.kind == Tok::kw_not) {
      shift();
      if (cur_.kind == Tok::kw_not) unsupported("double negation");
      if (cur_.kind == Tok::minus) unsupported("classical negation");
      if (cur_.kind != Tok::identifier) unsupported("negated comparison");
      return Literal::neg(atom());
    }
    if (cur_.kind == Tok::directive) unsupported("aggregate " + cur_.text);
    if (cur_.kind == Tok::other) reject_other();
    if (cur_.kind == Tok::identifier) {
      Atom a = atom();
      if (cur_.kind == Tok::cmp) unsupported("symbolic constant '" + a.predicate + "'");
      return Literal::pos(std::move(a));
    }
    Term left = term();
    if (cur_.kind != Tok::cmp) fail("expected comparison operator");
    CompareOp op = compare_op(cur_.text);
    shift();
    Term right = term();
    if (left.kind == Term::Kind::interval || right.kind == Term::Kind::interval) {
      unsupported("interval in comparison");
    }
    return Literal::comparison(std::move(left), op, std::move(right));
  }

  CompareOp compare_op(const std::string& t) const {
    if (t == "<") return CompareOp::lt;
    if (t == "<=") return CompareOp::le;
    if (t == ">") return CompareOp::gt;
    if (t == ">=") return CompareOp::ge;
    if (t == "=" || t == "==") return CompareOp::eq;
    if (t == "!=" || t == "<>") return CompareOp::ne;
    fail("unknown comparison operator");
  }

  Atom atom() {
    Atom a;
    a.predicate = cur_.text;
    shift();
    if (cur_.kind != Tok::lparen) return a;
    shift();
    if (cur_.kind == Tok::rparen) fail("expected argument");
    a.args.push_back(term());
    while (cur_.kind == Tok::comma) {
      shift();
      a.args.push_back(term());
    }
    if (cur_.kind == Tok::other) reject_other();
    expect(Tok::rparen, "')' or ',' in argument list");
    return a;
  }

  Value number_value(const std::string& digits) const {
    Value v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{}) fail("integer out of range");
    return v;
  }

  Value signed_number() {
    bool negative = false;
    if (cur_.kind == Tok::minus) {
      negative = true;
      shift();
    }
    if (cur_.kind != Tok::number) fail("expected integer");
    Value v = number_value(cur_.text);
    shift();
    return negative ? -v : v;
  }

  Term term() {
    if (cur_.kind == Tok::identifier) {
      std::string name = cur_.text;
      shift();
      if (cur_.kind == Tok::lparen) unsupported("function term '" + name + "'");
      unsupported("symbolic constant '" + name + "'");
    }
    if (cur_.kind == Tok::other) reject_other();
    if (cur_.kind == Tok::lparen) unsupported("tuple or parenthesised term");

    if (cur_.kind == Tok::variable) {
      std::string name = cur_.text;
      shift();
      if (cur_.kind == Tok::plus || cur_.kind == Tok::minus) {
        bool minus = cur_.kind == Tok::minus;
        shift();
        if (cur_.kind == Tok::variable) unsupported("arithmetic over multiple variables");
        if (cur_.kind != Tok::number) fail("expected integer after arithmetic operator");
        Value c = number_value(cur_.text);
        shift();
        reject_trailing_arithmetic();
        if (name == "_") unsupported("arithmetic on anonymous variable");
        return Term::offset(std::move(name), minus ? -c : c);
      }
      reject_trailing_arithmetic();
      if (cur_.kind == Tok::dotdot) unsupported("non-constant interval");
      return Term::variable(std::move(name));
    }

    Value lo = signed_number();
    if (cur_.kind == Tok::dotdot) {
      std::size_t line = cur_.line;
      std::size_t col = cur_.column;
      shift();
      if (cur_.kind == Tok::variable) unsupported("non-constant interval");
      Value up = signed_number();
      if (lo > up) throw ParseError(line, col, "empty interval " + std::to_string(lo) + ".." + std::to_string(up));
      return Term::interval(lo, up);
    }
    if (cur_.kind == Tok::plus || cur_.kind == Tok::minus) {
      shift();
      if (cur_.kind == Tok::variable) unsupported("constant-first arithmetic");
      unsupported("constant arithmetic");
    }
    reject_trailing_arithmetic();
    return Term::constant(lo);
  }

  void reject_trailing_arithmetic() const {
    if (cur_.kind == Tok::plus || cur_.kind == Tok::minus) unsupported("chained arithmetic");
    if (cur_.kind == Tok::slash) unsupported("arithmetic operator '/'");
    if (cur_.kind == Tok::other &&
        (cur_.text == "*" || cur_.text == "**" || cur_.text == "\\")) {
      unsupported("arithmetic operator '" + cur_.text + "'");
    }
  }

  Lexer lex_;
  Token cur_;
};

}  // namespace

Program parse_program(std::string_view text) { return Parser(text).program(); }

Atom parse_atom(std::string_view text) { return Parser(text).single_atom(); }

}  // namespace uatm::reasoner
