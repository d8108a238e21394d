#pragma once

/**
 * @file fields.hpp
 * @brief Scalar expressions: parser, printer and exact value/gradient/Hessian
 *        evaluation, plus a central-difference oracle.
 *
 * Grammar (0-based byte offsets in errors):
 *   expr    := term (('+' | '-') term)*
 *   term    := unary (('*' | '/') unary)*
 *   unary   := '-' unary | power
 *   power   := primary ('^' unary)?
 *   primary := number | ident | func '(' expr ')' | '(' expr ')'
 *   func    := sin | cos | exp | log | sqrt
 *
 * Variable naming used across the library: x1..xm, u1..un, uA_i, p, pA_i.
 */

#include "jettriple/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace jettriple {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class DomainError : public std::runtime_error {
public:
    DomainError(const std::string& what, std::string subexpression)
        : std::runtime_error(what + " in " + subexpression), subexpression_(std::move(subexpression)) {}
    const std::string& subexpression() const noexcept { return subexpression_; }

private:
    std::string subexpression_;
};

class UnknownVariable : public std::invalid_argument {
public:
    explicit UnknownVariable(const std::string& name)
        : std::invalid_argument("unknown variable '" + name + "'"), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

enum class NodeKind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Sqrt };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    NodeKind kind;
    double value = 0.0;  // Number
    std::string name;    // Variable
    NodePtr lhs, rhs;    // operands (unary ops and functions use lhs)
};

/// Immutable expression tree.
class Expr {
public:
    Expr() : Expr(number(0.0)) {}

    static Expr number(double v) { return Expr(std::make_shared<const Node>(Node{NodeKind::Number, v, {}, nullptr, nullptr})); }
    static Expr variable(std::string name) {
        return Expr(std::make_shared<const Node>(Node{NodeKind::Variable, 0.0, std::move(name), nullptr, nullptr}));
    }
    static Expr unary(NodeKind k, const Expr& a) { return Expr(std::make_shared<const Node>(Node{k, 0.0, {}, a.root_, nullptr})); }
    static Expr binary(NodeKind k, const Expr& a, const Expr& b) {
        return Expr(std::make_shared<const Node>(Node{k, 0.0, {}, a.root_, b.root_}));
    }

    const NodePtr& root() const noexcept { return root_; }

    std::set<std::string> free_variables() const {
        std::set<std::string> out;
        collect(root_, out);
        return out;
    }

    /// Fully parenthesized text; literals printed with 17 significant digits.
    std::string to_string() const { return print(root_); }

    /// Simultaneous substitution of variables by expressions.
    Expr substitute(const std::map<std::string, Expr>& env) const { return Expr(subst(root_, env)); }

    friend bool operator==(const Expr& a, const Expr& b) { return equal(a.root_, b.root_); }
    friend std::ostream& operator<<(std::ostream& os, const Expr& e) { return os << e.to_string(); }

    friend Expr operator+(const Expr& a, const Expr& b) { return binary(NodeKind::Add, a, b); }
    friend Expr operator-(const Expr& a, const Expr& b) { return binary(NodeKind::Sub, a, b); }
    friend Expr operator*(const Expr& a, const Expr& b) { return binary(NodeKind::Mul, a, b); }
    friend Expr operator/(const Expr& a, const Expr& b) { return binary(NodeKind::Div, a, b); }
    friend Expr operator-(const Expr& a) { return unary(NodeKind::Neg, a); }
    friend Expr operator*(double s, const Expr& a) { return number(s) * a; }

    static std::string print(const NodePtr& n) {
        switch (n->kind) {
        case NodeKind::Number: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", n->value);
            return n->value < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
        }
        case NodeKind::Variable: return n->name;
        case NodeKind::Neg: return "(-" + print(n->lhs) + ")";
        case NodeKind::Add: return "(" + print(n->lhs) + " + " + print(n->rhs) + ")";
        case NodeKind::Sub: return "(" + print(n->lhs) + " - " + print(n->rhs) + ")";
        case NodeKind::Mul: return "(" + print(n->lhs) + " * " + print(n->rhs) + ")";
        case NodeKind::Div: return "(" + print(n->lhs) + " / " + print(n->rhs) + ")";
        case NodeKind::Pow: return "(" + print(n->lhs) + " ^ " + print(n->rhs) + ")";
        case NodeKind::Sin: return "sin(" + print(n->lhs) + ")";
        case NodeKind::Cos: return "cos(" + print(n->lhs) + ")";
        case NodeKind::Exp: return "exp(" + print(n->lhs) + ")";
        case NodeKind::Log: return "log(" + print(n->lhs) + ")";
        case NodeKind::Sqrt: return "sqrt(" + print(n->lhs) + ")";
        }
        return "?";
    }

private:
    explicit Expr(NodePtr r) : root_(std::move(r)) {}

    static void collect(const NodePtr& n, std::set<std::string>& out) {
        if (!n) return;
        if (n->kind == NodeKind::Variable) out.insert(n->name);
        collect(n->lhs, out);
        collect(n->rhs, out);
    }

    static NodePtr subst(const NodePtr& n, const std::map<std::string, Expr>& env) {
        if (!n) return n;
        if (n->kind == NodeKind::Variable) {
            auto it = env.find(n->name);
            return it == env.end() ? n : it->second.root_;
        }
        if (!n->lhs) return n;
        NodePtr l = subst(n->lhs, env);
        NodePtr r = n->rhs ? subst(n->rhs, env) : nullptr;
        if (l == n->lhs && r == n->rhs) return n;
        return std::make_shared<const Node>(Node{n->kind, n->value, n->name, std::move(l), std::move(r)});
    }

    static bool equal(const NodePtr& a, const NodePtr& b) {
        if (a == b) return true;
        if (!a || !b) return false;
        if (a->kind != b->kind) return false;
        if (a->kind == NodeKind::Number) return a->value == b->value;
        if (a->kind == NodeKind::Variable) return a->name == b->name;
        return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
    }

    NodePtr root_;
};

inline Expr pow(const Expr& base, const Expr& exponent) { return Expr::binary(NodeKind::Pow, base, exponent); }
inline Expr pow(const Expr& base, int exponent) { return pow(base, Expr::number(exponent)); }

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr parse() {
        Expr e = expr();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError(pos_, std::string("unexpected character '") + src_[pos_] + "'");
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r')) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expr() {
        Expr lhs = term();
        while (true) {
            if (accept('+')) lhs = lhs + term();
            else if (accept('-')) lhs = lhs - term();
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = unary();
        while (true) {
            if (accept('*')) lhs = lhs * unary();
            else if (accept('/')) lhs = lhs / unary();
            else return lhs;
        }
    }

    Expr unary() {
        if (accept('-')) return -unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return pow(base, unary());
        return base;
    }

    static bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    Expr primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError(pos_, "unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!accept(')')) throw ParseError(pos_, "expected ')'");
            return e;
        }
        if (is_digit(c) || c == '.') return number();
        if (is_alpha(c)) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && (is_alpha(src_[pos_]) || is_digit(src_[pos_]) || src_[pos_] == '_')) ++pos_;
            const std::string name(src_.substr(start, pos_ - start));
            const std::size_t after = pos_;
            skip_ws();
            if (pos_ < src_.size() && src_[pos_] == '(') {
                static const std::map<std::string, NodeKind> functions = {
                    {"sin", NodeKind::Sin}, {"cos", NodeKind::Cos}, {"exp", NodeKind::Exp},
                    {"log", NodeKind::Log}, {"sqrt", NodeKind::Sqrt}};
                auto it = functions.find(name);
                if (it == functions.end()) throw ParseError(start, "unknown function '" + name + "'");
                ++pos_;
                Expr arg = expr();
                if (!accept(')')) throw ParseError(pos_, "expected ')'");
                return Expr::unary(it->second, arg);
            }
            pos_ = after;
            return Expr::variable(name);
        }
        throw ParseError(pos_, std::string("unexpected character '") + c + "'");
    }

    Expr number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        }
        if (pos_ == start + 1 && src_[start] == '.') throw ParseError(start, "malformed number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t q = pos_ + 1;
            if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
            if (q < src_.size() && is_digit(src_[q])) {
                while (q < src_.size() && is_digit(src_[q])) ++q;
                pos_ = q;
            } else {
                throw ParseError(q, "malformed exponent");
            }
        }
        return Expr::number(std::stod(std::string(src_.substr(start, pos_ - start))));
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Expr parse(std::string_view src) { return detail::Parser(src).parse(); }

/// Value, gradient and Hessian of a scalar at a point.
struct Jet2Scalar {
    double value = 0.0;
    Vector grad;
    Matrix hess;
};

namespace detail {

inline constexpr double kMaxIntegerExponent = 64.0;

/// Integer literal exponent (possibly negated), if any.
inline bool integer_exponent(const NodePtr& e, int& out) {
    double v;
    if (e->kind == NodeKind::Number) v = e->value;
    else if (e->kind == NodeKind::Neg && e->lhs->kind == NodeKind::Number) v = -e->lhs->value;
    else return false;
    if (v != std::floor(v) || std::abs(v) > kMaxIntegerExponent) return false;
    out = static_cast<int>(v);
    return true;
}

/// Second-order forward-mode arithmetic; only the upper Hessian triangle is
/// accumulated until `finish` mirrors it.
struct Jet2 {
    double v = 0.0;
    Vector g;
    Matrix h;

    static Jet2 constant(double c, int d) { return Jet2{c, Vector::Zero(d), Matrix::Zero(d, d)}; }
    static Jet2 variable(double c, int d, int i) {
        Jet2 j = constant(c, d);
        j.g(i) = 1.0;
        return j;
    }
};

inline void add_outer_upper(Matrix& h, double s, const Vector& a, const Vector& b) {
    const Eigen::Index d = a.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (a(i) == 0.0 && b(i) == 0.0) continue;
        for (Eigen::Index j = i; j < d; ++j) h(i, j) += s * (a(i) * b(j) + b(i) * a(j)) * 0.5;
    }
}

inline void upper_scale_add(Matrix& h, double s, const Matrix& other) {
    const Eigen::Index d = h.rows();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) h(i, j) += s * other(i, j);
}

inline Jet2 mul(const Jet2& a, const Jet2& b) {
    Jet2 r;
    r.v = a.v * b.v;
    r.g = a.v * b.g + b.v * a.g;
    r.h = Matrix::Zero(a.h.rows(), a.h.cols());
    upper_scale_add(r.h, a.v, b.h);
    upper_scale_add(r.h, b.v, a.h);
    add_outer_upper(r.h, 2.0, a.g, b.g);
    return r;
}

/// f(a) given f, f', f'' at a.v.
inline Jet2 chain(const Jet2& a, double f, double f1, double f2) {
    Jet2 r;
    r.v = f;
    r.g = f1 * a.g;
    r.h = Matrix::Zero(a.h.rows(), a.h.cols());
    upper_scale_add(r.h, f1, a.h);
    add_outer_upper(r.h, f2, a.g, a.g);
    return r;
}

inline Jet2 reciprocal(const Jet2& a, const NodePtr& where) {
    if (a.v == 0.0) throw DomainError("division by zero", Expr::print(where));
    const double inv = 1.0 / a.v;
    return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline Jet2 int_power(const Jet2& a, int k, const NodePtr& where) {
    const int d = static_cast<int>(a.g.size());
    if (k == 0) return Jet2::constant(1.0, d);
    if (k < 0) return reciprocal(int_power(a, -k, where), where);
    Jet2 result = a;
    for (int i = 1; i < k; ++i) result = mul(result, a);
    return result;
}

} // namespace detail

/// Expression bound to an ordered variable layout.
class ScalarField {
public:
    ScalarField(Expr expr, std::vector<std::string> variable_order)
        : expr_(std::move(expr)), order_(std::move(variable_order)) {
        for (std::size_t i = 0; i < order_.size(); ++i) index_.emplace(order_[i], static_cast<int>(i));
        for (const auto& v : expr_.free_variables())
            if (!index_.count(v)) throw UnknownVariable(v);
    }

    ScalarField(std::string_view src, std::vector<std::string> variable_order)
        : ScalarField(parse(src), std::move(variable_order)) {}

    const Expr& expr() const noexcept { return expr_; }
    const std::vector<std::string>& variable_order() const noexcept { return order_; }
    int arity() const noexcept { return static_cast<int>(order_.size()); }

    /// Plain double evaluation.
    double eval(const Vector& point) const {
        check_point(point);
        return eval_node(expr_.root(), point);
    }

    Jet2Scalar eval2(const Vector& point) const {
        check_point(point);
        detail::Jet2 j = eval2_node(expr_.root(), point);
        const Eigen::Index d = j.h.rows();
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index k = i + 1; k < d; ++k) j.h(k, i) = j.h(i, k);
        return Jet2Scalar{j.v, std::move(j.g), std::move(j.h)};
    }

private:
    void check_point(const Vector& point) const {
        if (point.size() != arity())
            throw DimensionError("ScalarField: point has " + std::to_string(point.size()) + " entries, expected " +
                                 std::to_string(arity()));
    }

    double eval_node(const NodePtr& n, const Vector& x) const {
        switch (n->kind) {
        case NodeKind::Number: return n->value;
        case NodeKind::Variable: return x(index_.at(n->name));
        case NodeKind::Neg: return -eval_node(n->lhs, x);
        case NodeKind::Add: return eval_node(n->lhs, x) + eval_node(n->rhs, x);
        case NodeKind::Sub: return eval_node(n->lhs, x) - eval_node(n->rhs, x);
        case NodeKind::Mul: return eval_node(n->lhs, x) * eval_node(n->rhs, x);
        case NodeKind::Div: {
            const double b = eval_node(n->rhs, x);
            if (b == 0.0) throw DomainError("division by zero", Expr::print(n));
            return eval_node(n->lhs, x) / b;
        }
        case NodeKind::Pow: {
            const double a = eval_node(n->lhs, x);
            int k;
            if (detail::integer_exponent(n->rhs, k)) {
                if (k < 0 && a == 0.0) throw DomainError("division by zero", Expr::print(n));
                double r = 1.0;
                for (int i = 0; i < std::abs(k); ++i) r *= a;
                return k < 0 ? 1.0 / r : r;
            }
            if (a <= 0.0) throw DomainError("non-positive base of real power", Expr::print(n));
            return std::exp(eval_node(n->rhs, x) * std::log(a));
        }
        case NodeKind::Sin: return std::sin(eval_node(n->lhs, x));
        case NodeKind::Cos: return std::cos(eval_node(n->lhs, x));
        case NodeKind::Exp: return std::exp(eval_node(n->lhs, x));
        case NodeKind::Log: {
            const double a = eval_node(n->lhs, x);
            if (a <= 0.0) throw DomainError("log of non-positive value", Expr::print(n));
            return std::log(a);
        }
        case NodeKind::Sqrt: {
            const double a = eval_node(n->lhs, x);
            if (a < 0.0) throw DomainError("sqrt of negative value", Expr::print(n));
            return std::sqrt(a);
        }
        }
        return 0.0;
    }

    detail::Jet2 eval2_node(const NodePtr& n, const Vector& x) const {
        using detail::Jet2;
        const int d = arity();
        switch (n->kind) {
        case NodeKind::Number: return Jet2::constant(n->value, d);
        case NodeKind::Variable: {
            const int i = index_.at(n->name);
            return Jet2::variable(x(i), d, i);
        }
        case NodeKind::Neg: {
            Jet2 a = eval2_node(n->lhs, x);
            a.v = -a.v;
            a.g = -a.g;
            a.h = -a.h;
            return a;
        }
        case NodeKind::Add:
        case NodeKind::Sub: {
            Jet2 a = eval2_node(n->lhs, x);
            const Jet2 b = eval2_node(n->rhs, x);
            const double s = n->kind == NodeKind::Add ? 1.0 : -1.0;
            a.v += s * b.v;
            a.g += s * b.g;
            a.h += s * b.h;
            return a;
        }
        case NodeKind::Mul: return detail::mul(eval2_node(n->lhs, x), eval2_node(n->rhs, x));
        case NodeKind::Div:
            return detail::mul(eval2_node(n->lhs, x), detail::reciprocal(eval2_node(n->rhs, x), n));
        case NodeKind::Pow: {
            const Jet2 a = eval2_node(n->lhs, x);
            int k;
            if (detail::integer_exponent(n->rhs, k)) {
                if (k < 0 && a.v == 0.0) throw DomainError("division by zero", Expr::print(n));
                return detail::int_power(a, k, n);
            }
            if (a.v <= 0.0) throw DomainError("non-positive base of real power", Expr::print(n));
            const double la = std::log(a.v);
            const Jet2 loga = detail::chain(a, la, 1.0 / a.v, -1.0 / (a.v * a.v));
            const Jet2 e = detail::mul(eval2_node(n->rhs, x), loga);
            const double ev = std::exp(e.v);
            return detail::chain(e, ev, ev, ev);
        }
        case NodeKind::Sin: {
            const Jet2 a = eval2_node(n->lhs, x);
            const double s = std::sin(a.v), c = std::cos(a.v);
            return detail::chain(a, s, c, -s);
        }
        case NodeKind::Cos: {
            const Jet2 a = eval2_node(n->lhs, x);
            const double s = std::sin(a.v), c = std::cos(a.v);
            return detail::chain(a, c, -s, -c);
        }
        case NodeKind::Exp: {
            const Jet2 a = eval2_node(n->lhs, x);
            const double e = std::exp(a.v);
            return detail::chain(a, e, e, e);
        }
        case NodeKind::Log: {
            const Jet2 a = eval2_node(n->lhs, x);
            if (a.v <= 0.0) throw DomainError("log of non-positive value", Expr::print(n));
            return detail::chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
        }
        case NodeKind::Sqrt: {
            const Jet2 a = eval2_node(n->lhs, x);
            if (a.v <= 0.0) throw DomainError("sqrt of non-positive value (derivative undefined)", Expr::print(n));
            const double s = std::sqrt(a.v);
            return detail::chain(a, s, 0.5 / s, -0.25 / (s * a.v));
        }
        }
        return Jet2::constant(0.0, d);
    }

    Expr expr_;
    std::vector<std::string> order_;
    std::unordered_map<std::string, int> index_;
};

inline Jet2Scalar eval2(const ScalarField& f, const Vector& point) { return f.eval2(point); }

struct FdDerivatives {
    Vector grad;
    Matrix hess;
};

/// Central differences: gradient with step h, Hessian with step hess_h.
/// Independent of the forward-mode path (plain double evaluation only).
inline FdDerivatives fd_oracle(const ScalarField& f, const Vector& point, double h, double hess_h = 1e-4) {
    if (!(h > 0.0) || !(hess_h > 0.0)) throw std::invalid_argument("fd_oracle: step must be positive");
    const int d = f.arity();
    FdDerivatives out{Vector::Zero(d), Matrix::Zero(d, d)};
    Vector x = point;
    for (int i = 0; i < d; ++i) {
        x(i) = point(i) + h;
        const double fp = f.eval(x);
        x(i) = point(i) - h;
        const double fm = f.eval(x);
        x(i) = point(i);
        out.grad(i) = (fp - fm) / (2.0 * h);
    }
    const double s = hess_h;
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            auto at = [&](double di, double dj) {
                Vector y = point;
                y(i) += di;
                y(j) += dj;
                return f.eval(y);
            };
            const double v = (at(s, s) - at(s, -s) - at(-s, s) + at(-s, -s)) / (4.0 * s * s);
            out.hess(i, j) = v;
            out.hess(j, i) = v;
        }
    }
    return out;
}

} // namespace jettriple
