#pragma once

// Minimal arithmetic expressions for user-supplied coefficients.
//
// Grammar (whitespace insignificant):
//
//   expr    := term  (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative, binds tighter than unary minus
//   primary := number | name | func '(' expr ')' | '(' expr ')' | '|' expr '|'
//   func    := exp | log | sin | cos | sqrt | abs
//
// Names are the declared variables plus the constant `pi`. No host-language
// evaluation happens anywhere: the text is compiled into an immutable tree.

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowlab {

class ExpressionError : public std::runtime_error {
 public:
  ExpressionError(const std::string& message, std::size_t column)
      : std::runtime_error(message), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

class Expression {
 public:
  struct Node;

  static Expression parse(std::string_view text, const std::vector<std::string>& variables);

  /// Evaluates with `values[i]` bound to the i-th declared variable.
  double operator()(std::span<const double> values) const;

  const std::string& text() const { return text_; }

 private:
  Expression(std::string text, std::shared_ptr<const Node> root)
      : text_(std::move(text)), root_(std::move(root)) {}

  std::string text_;
  std::shared_ptr<const Node> root_;
};

/// Variable names bound to a state in R^n: x1..xn, followed by the aliases
/// x, y, z for the first three coordinates (only as many as n allows).
std::vector<std::string> state_variable_names(int n);

/// Fills `out` with values in the order of state_variable_names(x.size()).
void bind_state_variables(std::span<const double> x, std::vector<double>& out);

}  // namespace flowlab
