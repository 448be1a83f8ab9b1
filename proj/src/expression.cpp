#include "dml/expression.hpp"

#include <cctype>
#include <charconv>

#include "dml/errors.hpp"

namespace dml {

struct Expression::Node {
    enum class Op { Const, Var, Neg, Add, Sub, Mul, Div };
    Op op = Op::Const;
    double value = 0.0;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;

    double eval(double x) const {
        switch (op) {
            case Op::Const: return value;
            case Op::Var: return x;
            case Op::Neg: return -lhs->eval(x);
            case Op::Add: return lhs->eval(x) + rhs->eval(x);
            case Op::Sub: return lhs->eval(x) - rhs->eval(x);
            case Op::Mul: return lhs->eval(x) * rhs->eval(x);
            case Op::Div: return lhs->eval(x) / rhs->eval(x);
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    NodePtr parse() {
        auto node = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return node;
    }

private:
    using Op = Expression::Node::Op;

    [[noreturn]] void fail(const std::string& why) const {
        throw SchemaError("expression '" + s_ + "': " + why);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    static NodePtr binary(Op op, NodePtr a, NodePtr b) {
        auto n = std::make_shared<Expression::Node>();
        n->op = op;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }

    NodePtr sum() {
        auto lhs = product();
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
                const Op op = s_[pos_++] == '+' ? Op::Add : Op::Sub;
                lhs = binary(op, lhs, product());
            } else {
                return lhs;
            }
        }
    }

    NodePtr product() {
        auto lhs = unary();
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
                const Op op = s_[pos_++] == '*' ? Op::Mul : Op::Div;
                lhs = binary(op, lhs, unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        skip();
        if (pos_ < s_.size() && s_[pos_] == '-') {
            ++pos_;
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::Neg;
            n->lhs = unary();
            return n;
        }
        return atom();
    }

    NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = sum();
            skip();
            if (pos_ >= s_.size() || s_[pos_] != ')') fail("missing ')'");
            ++pos_;
            return inner;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string ident = s_.substr(start, pos_ - start);
            if (ident != "x" && ident != "value") fail("unknown identifier '" + ident + "'");
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::Var;
            return n;
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
        if (ec != std::errc()) fail("expected a number at offset " + std::to_string(pos_));
        pos_ = static_cast<std::size_t>(ptr - s_.data());
        auto n = std::make_shared<Expression::Node>();
        n->value = v;
        return n;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(e.text_).parse();
    return e;
}

double Expression::operator()(double x) const {
    return root_ ? root_->eval(x) : x;
}

}  // namespace dml
