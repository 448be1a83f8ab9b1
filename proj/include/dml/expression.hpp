#pragma once

#include <memory>
#include <string>

namespace dml {

/// Arithmetic over a single variable `x` (alias `value`): numbers, + - * /,
/// unary minus, parentheses. Used for derived encoding rules such as
/// "2013 - x".
class Expression {
public:
    struct Node;

    static Expression parse(const std::string& text);

    double operator()(double x) const;
    const std::string& text() const noexcept { return text_; }

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
};

}  // namespace dml
