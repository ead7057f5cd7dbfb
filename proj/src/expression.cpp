#include "flowlab/expression.hpp"

#include <cctype>
#include <charconv>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowlab {

struct Expression::Node {
  enum class Op { Constant, Variable, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Sin, Cos, Sqrt, Abs };
  Op op = Op::Constant;
  double value = 0.0;
  std::size_t index = 0;
  std::shared_ptr<const Node> lhs, rhs;

  double eval(std::span<const double> vars) const {
    switch (op) {
      case Op::Constant: return value;
      case Op::Variable: return vars[index];
      case Op::Neg: return -lhs->eval(vars);
      case Op::Add: return lhs->eval(vars) + rhs->eval(vars);
      case Op::Sub: return lhs->eval(vars) - rhs->eval(vars);
      case Op::Mul: return lhs->eval(vars) * rhs->eval(vars);
      case Op::Div: return lhs->eval(vars) / rhs->eval(vars);
      case Op::Pow: {
        const double b = lhs->eval(vars);
        const double e = rhs->eval(vars);
        // integer exponents by repeated product: negative bases stay valid
        if (e == std::floor(e) && std::abs(e) <= 16) {
          double r = 1.0;
          const int k = static_cast<int>(std::abs(e));
          for (int i = 0; i < k; ++i) r *= b;
          return e < 0 ? 1.0 / r : r;
        }
        return std::pow(b, e);
      }
      case Op::Exp: return std::exp(lhs->eval(vars));
      case Op::Log: return std::log(lhs->eval(vars));
      case Op::Sin: return std::sin(lhs->eval(vars));
      case Op::Cos: return std::cos(lhs->eval(vars));
      case Op::Sqrt: return std::sqrt(lhs->eval(vars));
      case Op::Abs: return std::abs(lhs->eval(vars));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

NodePtr make(Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>& vars) : text_(text), vars_(vars) {}

  NodePtr parse() {
    auto e = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ExpressionError("expression error at column " + std::to_string(pos_ + 1) + ": " + what +
                              " in \"" + std::string(text_) + "\"",
                          pos_ + 1);
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Op::Add, lhs, term());
      else if (accept('-')) lhs = make(Op::Sub, lhs, term());
      else return lhs;
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Op::Mul, lhs, unary());
      else if (accept('/')) lhs = make(Op::Div, lhs, unary());
      else return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    auto base = primary();
    if (accept('^')) return make(Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = expr();
      expect(')');
      return e;
    }
    if (c == '|') {
      ++pos_;
      auto e = expr();
      expect('|');
      return make(Op::Abs, e);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc()) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - first);
    auto n = std::make_shared<Expression::Node>();
    n->op = Op::Constant;
    n->value = v;
    return n;
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string id(text_.substr(start, pos_ - start));

    static const std::pair<const char*, Op> functions[] = {
        {"exp", Op::Exp}, {"log", Op::Log},   {"sin", Op::Sin},
        {"cos", Op::Cos}, {"sqrt", Op::Sqrt}, {"abs", Op::Abs},
    };
    for (const auto& [fname, op] : functions) {
      if (id == fname) {
        expect('(');
        auto arg = expr();
        expect(')');
        return make(op, arg);
      }
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] == id) {
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::Variable;
        n->index = i;
        return n;
      }
    }
    if (id == "pi") {
      auto n = std::make_shared<Expression::Node>();
      n->value = std::numbers::pi;
      return n;
    }
    pos_ = start;
    fail("unknown name '" + id + "'");
  }

  std::string_view text_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text, const std::vector<std::string>& variables) {
  Parser p(text, variables);
  return Expression(std::string(text), p.parse());
}

double Expression::operator()(std::span<const double> values) const { return root_->eval(values); }

std::vector<std::string> state_variable_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  static const char* aliases[] = {"x", "y", "z"};
  for (int i = 0; i < n && i < 3; ++i) names.emplace_back(aliases[i]);
  return names;
}

void bind_state_variables(std::span<const double> x, std::vector<double>& out) {
  const std::size_t n = x.size();
  out.resize(n + std::min<std::size_t>(n, 3));
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
  for (std::size_t i = 0; i < n && i < 3; ++i) out[n + i] = x[i];
}

}  // namespace flowlab
