#pragma once

// Small generators shared by the property tests.

#include "jettriple/geometry.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace jt_test {

using jettriple::KForm;
using jettriple::Matrix;
using jettriple::Vector;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin() { return integer(0, 1) == 1; }

    Vector vector(int n, double scale = 1.0) {
        Vector v(n);
        for (int i = 0; i < n; ++i) v(i) = uniform(-scale, scale);
        return v;
    }

    Matrix matrix(int r, int c, double scale = 1.0) {
        Matrix a(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) a(i, j) = uniform(-scale, scale);
        return a;
    }

    /// Random k-form with roughly `density` of the tuples populated.
    KForm form(int n, int k, double density = 0.6) {
        KForm f(n, k);
        std::vector<int> idx(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
        if (k > n) return f;
        while (true) {
            if (uniform(0.0, 1.0) < density) f.add(idx, uniform());
            int i = k - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
        return f;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// Exterior derivative of a form field by central differences of its
/// coefficients; exact (up to rounding) when coefficients are affine.
inline KForm exterior_derivative_fd(const std::function<KForm(const Vector&)>& field, const Vector& z, double h = 1e-3) {
    const int dim = static_cast<int>(z.size());
    const KForm at = field(z);
    KForm out(dim, at.degree() + 1);
    for (int j = 0; j < dim; ++j) {
        Vector zp = z, zm = z;
        zp(j) += h;
        zm(j) -= h;
        const KForm diff = (1.0 / (2.0 * h)) * (field(zp) - field(zm));
        out += jettriple::wedge(jettriple::KForm::basis(dim, {j}), diff);
    }
    return out;
}

inline Vector unit(int n, int i) {
    Vector e = Vector::Zero(n);
    e(i) = 1.0;
    return e;
}

/// Random polynomial of degree <= 2 in the given variables.
inline jettriple::Expr random_quadratic(Gen& g, const std::vector<std::string>& vars, double scale = 0.5) {
    using jettriple::Expr;
    auto c = [&] { return Expr::number(std::round(g.uniform(-scale, scale) * 100) / 100); };
    Expr e = c();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        e = e + c() * Expr::variable(vars[i]);
        for (std::size_t j = i; j < vars.size(); ++j) e = e + c() * Expr::variable(vars[i]) * Expr::variable(vars[j]);
    }
    return e;
}

/// Connection with random quadratic Christoffel symbols in x.
inline jettriple::Connection random_connection(Gen& g, int m, bool symmetric, double scale = 0.5) {
    const auto vars = jettriple::base_vars(jettriple::BundleDims(m, 1));
    jettriple::Connection c(m, symmetric);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = symmetric ? i : 0; j < m; ++j) {
                const jettriple::Expr e = random_quadratic(g, vars, scale);
                c.gamma.set(k, i, j, e);
                if (symmetric) c.gamma.set(k, j, i, e);
            }
    return c;
}

/// Random polynomial/trig expression over x1..x3. Growth is kept moderate on
/// [-2, 2]^3 (powers and function arguments only wrap shallow subtrees) so
/// that central-difference truncation stays below the comparison tolerance.
inline jettriple::Expr random_expr(Gen& g, int depth) {
    using namespace jettriple;
    const Expr x[] = {Expr::variable("x1"), Expr::variable("x2"), Expr::variable("x3")};
    auto leaf = [&]() -> Expr {
        if (g.integer(0, 3) == 0) return Expr::number(std::round(g.uniform(-1.5, 1.5) * 4) / 4);
        return x[g.integer(0, 2)];
    };
    if (depth == 0) return leaf();
    switch (g.integer(0, 9)) {
    case 0: return random_expr(g, depth - 1) + random_expr(g, depth - 1);
    case 1: return random_expr(g, depth - 1) - random_expr(g, depth - 1);
    case 2:
    case 3: return random_expr(g, depth - 1) * random_expr(g, std::min(depth - 1, 1));
    case 4: return random_expr(g, depth - 1) / (Expr::number(1.5) + pow(leaf(), 2));
    case 5: return Expr::unary(NodeKind::Sin, random_expr(g, std::min(depth - 1, 1)));
    case 6: return Expr::unary(NodeKind::Cos, random_expr(g, std::min(depth - 1, 1)));
    case 7: return Expr::unary(NodeKind::Exp, Expr::number(0.3) * leaf());
    case 8: return Expr::unary(NodeKind::Log, Expr::number(1.0) + pow(random_expr(g, std::min(depth - 1, 1)), 2));
    default: return pow(leaf(), g.integer(0, 3));
    }
}

} // namespace jt_test
