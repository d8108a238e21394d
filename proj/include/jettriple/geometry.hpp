#pragma once

/**
 * @file geometry.hpp
 * @brief Coordinate models of the bundles in the triple, connections,
 *        prolongation of sections, fibered chart changes and canonical forms.
 *
 * Coordinate ordering shared by every KForm over these spaces:
 *   E          : x | u
 *   J1 pi      : x | u | ujet
 *   M pi       : x | u | p | pmom
 *   M0 pi      : x | u | pmom
 *   J1 pi1     : x | u | ujet | ubar | usec
 *   J1(pi o nu): x | u | p | pmom | ujet | pjet | pmomjet
 * Matrix blocks are row-major (alpha first, then i, then j); indices are
 * 0-based. The (m-1)-forms d^{m-1}x_i are i_{d/dx^i}(dx^1 ^ ... ^ dx^m),
 * i.e. (-1)^i dx^0 ^ .. (omit i) .. ^ dx^{m-1} with 0-based i.
 */

#include "jettriple/exterior.hpp"
#include "jettriple/fields.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jettriple {

struct BundleDims {
    int m = 1;
    int n = 1;
    bool volume_convention = true;  ///< working charts satisfy eta = dx^1 ^ ... ^ dx^m

    BundleDims() = default;
    BundleDims(int m_, int n_) : m(m_), n(n_) {
        if (m < 1 || n < 1) throw DimensionError("BundleDims: m and n must be at least 1");
    }

    int nm() const noexcept { return n * m; }
    int dim_e() const noexcept { return m + n; }
    int dim_j1() const noexcept { return m + n + nm(); }
    int dim_mpi() const noexcept { return m + n + 1 + nm(); }
    int dim_m0() const noexcept { return m + n + nm(); }
    int dim_j1pi1() const noexcept { return m + n + 2 * nm() + nm() * m; }
    int dim_j1pinu() const noexcept { return 2 * m + n + 1 + 2 * nm() + nm() * m; }
    int dim_lambda_j1() const noexcept { return dim_j1() + n + nm(); }
    int dim_lambda_mpi() const noexcept { return dim_mpi() + n + 1 + nm(); }

    // Offsets in J1(pi o nu); the first four blocks double as the M pi layout.
    int ix(int i) const noexcept { return i; }
    int iu(int a) const noexcept { return m + a; }
    int ip() const noexcept { return m + n; }
    int ipmom(int a, int i) const noexcept { return m + n + 1 + a * m + i; }
    int iujet(int a, int i) const noexcept { return m + n + 1 + nm() + a * m + i; }
    int ipjet(int j) const noexcept { return m + n + 1 + 2 * nm() + j; }
    int ipmomjet(int a, int i, int j) const noexcept { return m + n + 1 + 2 * nm() + m + (a * m + i) * m + j; }

    // Offsets in J1 pi.
    int j1_ujet(int a, int i) const noexcept { return m + n + a * m + i; }

    bool operator==(const BundleDims& o) const noexcept { return m == o.m && n == o.n; }
};

// ---------------------------------------------------------------------------
// Variable names (the expression namespace of the whole library).

inline std::string x_name(int i) { return "x" + std::to_string(i + 1); }
inline std::string u_name(int a) { return "u" + std::to_string(a + 1); }
inline std::string ujet_name(int a, int i) { return "u" + std::to_string(a + 1) + "_" + std::to_string(i + 1); }
inline std::string pmom_name(int a, int i) { return "p" + std::to_string(a + 1) + "_" + std::to_string(i + 1); }
inline std::string pjet_name(int j) { return "p_" + std::to_string(j + 1); }
inline std::string pmomjet_name(int a, int i, int j) {
    return "p" + std::to_string(a + 1) + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}
inline std::string ubar_name(int a, int i) { return "ub" + std::to_string(a + 1) + "_" + std::to_string(i + 1); }
inline std::string usec_name(int a, int i, int j) {
    return "u" + std::to_string(a + 1) + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

inline std::vector<std::string> base_vars(const BundleDims& d) {
    std::vector<std::string> v;
    for (int i = 0; i < d.m; ++i) v.push_back(x_name(i));
    return v;
}

/// (x, u): variables of chart changes and affine/quadratic coefficient fields.
inline std::vector<std::string> e_vars(const BundleDims& d) {
    auto v = base_vars(d);
    for (int a = 0; a < d.n; ++a) v.push_back(u_name(a));
    return v;
}

/// (x, u, ujet): variables of Lagrangians.
inline std::vector<std::string> j1_vars(const BundleDims& d) {
    auto v = e_vars(d);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(ujet_name(a, i));
    return v;
}

/// (x, u, pmom): variables of Hamiltonians.
inline std::vector<std::string> m0_vars(const BundleDims& d) {
    auto v = e_vars(d);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(pmom_name(a, i));
    return v;
}

/// Names of every J1(pi o nu) coordinate in layout order.
inline std::vector<std::string> j1pinu_vars(const BundleDims& d) {
    auto v = e_vars(d);
    v.push_back("p");
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(pmom_name(a, i));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(ujet_name(a, i));
    for (int j = 0; j < d.m; ++j) v.push_back(pjet_name(j));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            for (int j = 0; j < d.m; ++j) v.push_back(pmomjet_name(a, i, j));
    return v;
}

/// Names of every J1 pi1 coordinate in layout order.
inline std::vector<std::string> j1pi1_vars(const BundleDims& d) {
    auto v = e_vars(d);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(ujet_name(a, i));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) v.push_back(ubar_name(a, i));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            for (int j = 0; j < d.m; ++j) v.push_back(usec_name(a, i, j));
    return v;
}

/// n matrices of shape m x m, indexed [alpha](i, j).
using Tensor3 = std::vector<Matrix>;

inline Tensor3 zero_tensor3(int count, int m) { return Tensor3(static_cast<std::size_t>(count), Matrix::Zero(m, m)); }

inline double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: tensor size mismatch");
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).lpNorm<Eigen::Infinity>());
    return d;
}

// ---------------------------------------------------------------------------
// Points.

struct PointE {
    Vector x, u;
};

struct PointJ1 {
    Vector x, u;
    Matrix ujet;  ///< n x m, ujet(a, i) = u^a_i

    static PointJ1 zero(const BundleDims& d) { return {Vector::Zero(d.m), Vector::Zero(d.n), Matrix::Zero(d.n, d.m)}; }

    Vector to_vector() const {
        const int m = static_cast<int>(x.size()), n = static_cast<int>(u.size());
        Vector v(m + n + n * m);
        v.head(m) = x;
        v.segment(m, n) = u;
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(m + n + a * m + i) = ujet(a, i);
        return v;
    }

    static PointJ1 from_vector(const BundleDims& d, const Vector& v) {
        if (v.size() != d.dim_j1()) throw DimensionError("PointJ1::from_vector: size mismatch");
        PointJ1 z{v.head(d.m), v.segment(d.m, d.n), Matrix(d.n, d.m)};
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) z.ujet(a, i) = v(d.j1_ujet(a, i));
        return z;
    }
};

struct PointMpi {
    Vector x, u;
    double p = 0.0;
    Matrix pmom;  ///< n x m, pmom(a, i) = p^i_a

    Vector to_vector() const {
        const int m = static_cast<int>(x.size()), n = static_cast<int>(u.size());
        Vector v(m + n + 1 + n * m);
        v.head(m) = x;
        v.segment(m, n) = u;
        v(m + n) = p;
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(m + n + 1 + a * m + i) = pmom(a, i);
        return v;
    }

    static PointMpi from_vector(const BundleDims& d, const Vector& v) {
        if (v.size() != d.dim_mpi()) throw DimensionError("PointMpi::from_vector: size mismatch");
        PointMpi z{v.head(d.m), v.segment(d.m, d.n), v(d.ip()), Matrix(d.n, d.m)};
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) z.pmom(a, i) = v(d.ipmom(a, i));
        return z;
    }
};

struct PointM0pi {
    Vector x, u;
    Matrix pmom;

    Vector to_vector() const {
        const int m = static_cast<int>(x.size()), n = static_cast<int>(u.size());
        Vector v(m + n + n * m);
        v.head(m) = x;
        v.segment(m, n) = u;
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(m + n + a * m + i) = pmom(a, i);
        return v;
    }
};

struct PointJ1pi1 {
    Vector x, u;
    Matrix ujet, ubar;  ///< n x m
    Tensor3 usec;       ///< usec[a](i, j) = u^a_{ij} = d u^a_i / d x^j

    static PointJ1pi1 zero(const BundleDims& d) {
        return {Vector::Zero(d.m), Vector::Zero(d.n), Matrix::Zero(d.n, d.m), Matrix::Zero(d.n, d.m), zero_tensor3(d.n, d.m)};
    }

    Vector to_vector() const {
        const int m = static_cast<int>(x.size()), n = static_cast<int>(u.size());
        Vector v(m + n + 2 * n * m + n * m * m);
        int k = 0;
        for (int i = 0; i < m; ++i) v(k++) = x(i);
        for (int a = 0; a < n; ++a) v(k++) = u(a);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(k++) = ujet(a, i);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(k++) = ubar(a, i);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) v(k++) = usec[static_cast<std::size_t>(a)](i, j);
        return v;
    }

    static PointJ1pi1 from_vector(const BundleDims& d, const Vector& v) {
        if (v.size() != d.dim_j1pi1()) throw DimensionError("PointJ1pi1::from_vector: size mismatch");
        PointJ1pi1 z = zero(d);
        int k = 0;
        for (int i = 0; i < d.m; ++i) z.x(i) = v(k++);
        for (int a = 0; a < d.n; ++a) z.u(a) = v(k++);
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) z.ujet(a, i) = v(k++);
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) z.ubar(a, i) = v(k++);
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i)
                for (int j = 0; j < d.m; ++j) z.usec[static_cast<std::size_t>(a)](i, j) = v(k++);
        return z;
    }
};

inline double max_abs_diff(const PointJ1pi1& a, const PointJ1pi1& b) {
    return (a.to_vector() - b.to_vector()).lpNorm<Eigen::Infinity>();
}

struct PointJ1pinu {
    Vector x, u;
    double p = 0.0;
    Matrix pmom;      ///< n x m, p^i_a
    Matrix ujet;      ///< n x m, u^a_j
    Vector pjet;      ///< m, p_j
    Tensor3 pmomjet;  ///< pmomjet[a](i, j) = p^i_{a j} = d p^i_a / d x^j

    static PointJ1pinu zero(const BundleDims& d) {
        return {Vector::Zero(d.m), Vector::Zero(d.n), 0.0, Matrix::Zero(d.n, d.m), Matrix::Zero(d.n, d.m),
                Vector::Zero(d.m), zero_tensor3(d.n, d.m)};
    }

    BundleDims dims() const { return BundleDims(static_cast<int>(x.size()), static_cast<int>(u.size())); }

    PointMpi mpi() const { return {x, u, p, pmom}; }
    PointJ1 j1() const { return {x, u, ujet}; }

    Vector to_vector() const {
        const BundleDims d = dims();
        Vector v(d.dim_j1pinu());
        v.head(d.m) = x;
        v.segment(d.m, d.n) = u;
        v(d.ip()) = p;
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) {
                v(d.ipmom(a, i)) = pmom(a, i);
                v(d.iujet(a, i)) = ujet(a, i);
                for (int j = 0; j < d.m; ++j) v(d.ipmomjet(a, i, j)) = pmomjet[static_cast<std::size_t>(a)](i, j);
            }
        for (int j = 0; j < d.m; ++j) v(d.ipjet(j)) = pjet(j);
        return v;
    }

    static PointJ1pinu from_vector(const BundleDims& d, const Vector& v) {
        if (v.size() != d.dim_j1pinu()) throw DimensionError("PointJ1pinu::from_vector: size mismatch");
        PointJ1pinu z = zero(d);
        z.x = v.head(d.m);
        z.u = v.segment(d.m, d.n);
        z.p = v(d.ip());
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) {
                z.pmom(a, i) = v(d.ipmom(a, i));
                z.ujet(a, i) = v(d.iujet(a, i));
                for (int j = 0; j < d.m; ++j) z.pmomjet[static_cast<std::size_t>(a)](i, j) = v(d.ipmomjet(a, i, j));
            }
        for (int j = 0; j < d.m; ++j) z.pjet(j) = v(d.ipjet(j));
        return z;
    }
};

// ---------------------------------------------------------------------------
// Connections.

/// Christoffel values at a point: gamma[k](i, j) = Gamma^k_{ij}.
using Christoffels = Tensor3;

/// Field of m^3 components over x, index order [k][i][j].
class Tensor3Field {
public:
    explicit Tensor3Field(int m) : m_(m) {
        if (m < 1) throw DimensionError("Tensor3Field: m must be positive");
        comps_.assign(static_cast<std::size_t>(m * m * m), Expr::number(0.0));
        fields_.resize(comps_.size());
        for (int i = 0; i < m; ++i) vars_.push_back(x_name(i));
    }

    int m() const noexcept { return m_; }
    const Expr& at(int k, int i, int j) const { return comps_[index(k, i, j)]; }
    void set(int k, int i, int j, Expr e) {
        const std::size_t idx = index(k, i, j);
        fields_[idx] = e.root()->kind == NodeKind::Number ? nullptr : std::make_shared<const ScalarField>(e, vars_);
        comps_[idx] = std::move(e);
    }

    Christoffels eval(const Vector& x) const {
        if (x.size() != m_) throw DimensionError("Tensor3Field::eval: point dimension mismatch");
        Christoffels g = zero_tensor3(m_, m_);
        for (int k = 0; k < m_; ++k)
            for (int i = 0; i < m_; ++i)
                for (int j = 0; j < m_; ++j) {
                    const std::size_t idx = index(k, i, j);
                    g[static_cast<std::size_t>(k)](i, j) = fields_[idx] ? fields_[idx]->eval(x) : comps_[idx].root()->value;
                }
        return g;
    }

private:
    std::size_t index(int k, int i, int j) const {
        if (k < 0 || i < 0 || j < 0 || k >= m_ || i >= m_ || j >= m_) throw DimensionError("Tensor3Field: index out of range");
        return static_cast<std::size_t>((k * m_ + i) * m_ + j);
    }

    int m_;
    std::vector<Expr> comps_;
    std::vector<std::string> vars_;
    std::vector<std::shared_ptr<const ScalarField>> fields_;  // null for constants
};

struct Connection {
    Tensor3Field gamma;
    bool symmetric = true;

    explicit Connection(int m, bool symmetric_ = true) : gamma(m), symmetric(symmetric_) {}
    Connection(Tensor3Field g, bool symmetric_) : gamma(std::move(g)), symmetric(symmetric_) {}

    int m() const noexcept { return gamma.m(); }
    Christoffels eval(const Vector& x) const { return gamma.eval(x); }

    /// Largest |Gamma^k_ij - Gamma^k_ji| at x.
    double asymmetry(const Vector& x) const {
        const Christoffels g = eval(x);
        double d = 0.0;
        for (const auto& gk : g) d = std::max(d, (gk - gk.transpose()).lpNorm<Eigen::Infinity>());
        return d;
    }
};

/// T^k_{ij} = Gamma^k_{ji} - Gamma^k_{ij}.
///
/// Sign chosen so that Gamma + T is the transposed connection, which makes
/// ex_{Gamma+T} the inverse of ex_Gamma and torsion(add_torsion) = -torsion.
inline Tensor3Field torsion(const Connection& c) {
    const int m = c.m();
    Tensor3Field t(m);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (i != j) t.set(k, i, j, c.gamma.at(k, j, i) - c.gamma.at(k, i, j));
    return t;
}

inline Connection add_torsion(const Connection& c) {
    const int m = c.m();
    const Tensor3Field t = torsion(c);
    Tensor3Field g(m);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                g.set(k, i, j, i == j ? c.gamma.at(k, i, j) : c.gamma.at(k, i, j) + t.at(k, i, j));
    return Connection(std::move(g), c.symmetric);
}

/// d^{nabla,eta} f at x: components df/dx^i - f * Gamma^j_{ij}.
inline Vector d_nabla_eta(const ScalarField& f, const Connection& c, const Vector& x) {
    const Jet2Scalar j = f.eval2(x);
    const Christoffels g = c.eval(x);
    Vector out = j.grad;
    for (int i = 0; i < c.m(); ++i) {
        double tr = 0.0;
        for (int k = 0; k < c.m(); ++k) tr += g[static_cast<std::size_t>(k)](i, k);
        out(i) -= j.value * tr;
    }
    return out;
}

/// Phi^nabla on the jet (x, a, a_i) of a section a d^m x: returns (a, a_i - a Gamma^j_{ij}).
inline std::pair<double, Vector> phi_nabla(const Connection& c, const Vector& x, double a, const Vector& a_i) {
    const Christoffels g = c.eval(x);
    Vector out = a_i;
    for (int i = 0; i < c.m(); ++i) {
        double tr = 0.0;
        for (int k = 0; k < c.m(); ++k) tr += g[static_cast<std::size_t>(k)](i, k);
        out(i) -= a * tr;
    }
    return {a, out};
}

// ---------------------------------------------------------------------------
// Sections.

/// Section x -> u(x) of pi, given by n expressions over x.
class SectionE {
public:
    SectionE(const BundleDims& d, std::vector<Expr> comps) : dims_(d) {
        if (static_cast<int>(comps.size()) != d.n) throw DimensionError("SectionE: expected n components");
        for (auto& e : comps) comps_.emplace_back(std::move(e), base_vars(d));
    }

    const BundleDims& dims() const noexcept { return dims_; }
    const std::vector<ScalarField>& components() const noexcept { return comps_; }

    std::vector<Jet2Scalar> eval2(const Vector& x) const {
        std::vector<Jet2Scalar> out;
        for (const auto& c : comps_) out.push_back(c.eval2(x));
        return out;
    }

private:
    BundleDims dims_;
    std::vector<ScalarField> comps_;
};

inline PointJ1 prolong1(const SectionE& phi, const Vector& x) {
    const BundleDims& d = phi.dims();
    const auto jets = phi.eval2(x);
    PointJ1 z{x, Vector(d.n), Matrix(d.n, d.m)};
    for (int a = 0; a < d.n; ++a) {
        z.u(a) = jets[static_cast<std::size_t>(a)].value;
        z.ujet.row(a) = jets[static_cast<std::size_t>(a)].grad.transpose();
    }
    return z;
}

inline PointJ1pi1 prolong_holonomic_j1pi1(const SectionE& phi, const Vector& x) {
    const BundleDims& d = phi.dims();
    const auto jets = phi.eval2(x);
    PointJ1pi1 z = PointJ1pi1::zero(d);
    z.x = x;
    for (int a = 0; a < d.n; ++a) {
        const auto& j = jets[static_cast<std::size_t>(a)];
        z.u(a) = j.value;
        z.ujet.row(a) = j.grad.transpose();
        z.ubar.row(a) = j.grad.transpose();
        z.usec[static_cast<std::size_t>(a)] = j.hess;
    }
    return z;
}

/// Value and first derivatives of a section of M0 pi at a point.
struct M0Jet {
    PointM0pi value;
    Matrix du;     ///< n x m, du(a, j) = d u^a / d x^j
    Tensor3 dpmom; ///< dpmom[a](i, j) = d p^i_a / d x^j
};

/// Section of M0 pi -> M: either expressions or a callable (e.g. leg o j1 phi).
class SectionM0 {
public:
    using Fn = std::function<M0Jet(const Vector&)>;

    SectionM0(const BundleDims& d, Fn fn) : dims_(d), fn_(std::move(fn)) {}

    /// Components ordered u^1..u^n then p^i_a (alpha-major).
    static SectionM0 from_exprs(const BundleDims& d, const std::vector<Expr>& comps) {
        if (static_cast<int>(comps.size()) != d.n + d.nm()) throw DimensionError("SectionM0: expected n + nm components");
        std::vector<ScalarField> fields;
        for (const auto& e : comps) fields.emplace_back(e, base_vars(d));
        return SectionM0(d, [d, fields](const Vector& x) {
            M0Jet j{{x, Vector(d.n), Matrix(d.n, d.m)}, Matrix(d.n, d.m), zero_tensor3(d.n, d.m)};
            for (int a = 0; a < d.n; ++a) {
                const Jet2Scalar v = fields[static_cast<std::size_t>(a)].eval2(x);
                j.value.u(a) = v.value;
                j.du.row(a) = v.grad.transpose();
                for (int i = 0; i < d.m; ++i) {
                    const Jet2Scalar w = fields[static_cast<std::size_t>(d.n + a * d.m + i)].eval2(x);
                    j.value.pmom(a, i) = w.value;
                    j.dpmom[static_cast<std::size_t>(a)].row(i) = w.grad.transpose();
                }
            }
            return j;
        });
    }

    const BundleDims& dims() const noexcept { return dims_; }
    M0Jet operator()(const Vector& x) const { return fn_(x); }

private:
    BundleDims dims_;
    Fn fn_;
};

/// Section of M pi -> M given by expressions: u^1..u^n, p, then p^i_a.
class SectionMpi {
public:
    SectionMpi(const BundleDims& d, const std::vector<Expr>& comps) : dims_(d) {
        if (static_cast<int>(comps.size()) != d.n + 1 + d.nm()) throw DimensionError("SectionMpi: expected n + 1 + nm components");
        for (const auto& e : comps) fields_.emplace_back(e, base_vars(d));
    }

    const BundleDims& dims() const noexcept { return dims_; }
    const std::vector<ScalarField>& components() const noexcept { return fields_; }

private:
    BundleDims dims_;
    std::vector<ScalarField> fields_;
};

/// j^1 of a section of M pi at x, as a point of J1(pi o nu).
inline PointJ1pinu prolong_mpi_section(const SectionMpi& s, const Vector& x) {
    const BundleDims& d = s.dims();
    PointJ1pinu z = PointJ1pinu::zero(d);
    z.x = x;
    const auto& f = s.components();
    for (int a = 0; a < d.n; ++a) {
        const Jet2Scalar v = f[static_cast<std::size_t>(a)].eval2(x);
        z.u(a) = v.value;
        z.ujet.row(a) = v.grad.transpose();
    }
    const Jet2Scalar pv = f[static_cast<std::size_t>(d.n)].eval2(x);
    z.p = pv.value;
    z.pjet = pv.grad;
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            const Jet2Scalar w = f[static_cast<std::size_t>(d.n + 1 + a * d.m + i)].eval2(x);
            z.pmom(a, i) = w.value;
            z.pmomjet[static_cast<std::size_t>(a)].row(i) = w.grad.transpose();
        }
    return z;
}

// ---------------------------------------------------------------------------
// Fibered chart changes.

/// (x, u) -> (y(x), v(x, u)); `inverse` optionally gives x as expressions in
/// y1..ym (used to transport sections symbolically).
struct FiberedChartChange {
    BundleDims dims;
    std::vector<ScalarField> y;  ///< over base_vars
    std::vector<ScalarField> v;  ///< over e_vars
    std::optional<std::vector<Expr>> inverse;

    FiberedChartChange(const BundleDims& d, const std::vector<Expr>& y_exprs, const std::vector<Expr>& v_exprs,
                       std::optional<std::vector<Expr>> inv = std::nullopt)
        : dims(d), inverse(std::move(inv)) {
        if (static_cast<int>(y_exprs.size()) != d.m || static_cast<int>(v_exprs.size()) != d.n)
            throw DimensionError("FiberedChartChange: expected m base and n fiber expressions");
        for (const auto& e : y_exprs) y.emplace_back(e, base_vars(d));  // rejects u-dependence
        for (const auto& e : v_exprs) v.emplace_back(e, e_vars(d));
        if (inverse && static_cast<int>(inverse->size()) != d.m) throw DimensionError("FiberedChartChange: inverse needs m expressions");
    }

    static FiberedChartChange identity(const BundleDims& d) {
        std::vector<Expr> ys, vs;
        for (int i = 0; i < d.m; ++i) ys.push_back(Expr::variable(x_name(i)));
        for (int a = 0; a < d.n; ++a) vs.push_back(Expr::variable(u_name(a)));
        std::vector<Expr> inv;
        for (int i = 0; i < d.m; ++i) inv.push_back(Expr::variable("y" + std::to_string(i + 1)));
        return FiberedChartChange(d, ys, vs, inv);
    }

    Vector map_base(const Vector& x) const {
        Vector out(dims.m);
        for (int i = 0; i < dims.m; ++i) out(i) = y[static_cast<std::size_t>(i)].eval(x);
        return out;
    }

    /// The section y -> v(x(y), phi(x(y))) in the new chart (needs `inverse`).
    /// The result is expressed in the base variable names x1..xm.
    SectionE transport(const SectionE& phi) const {
        if (!inverse) throw std::logic_error("FiberedChartChange::transport: no inverse chart given");
        std::map<std::string, Expr> x_of_y;
        for (int i = 0; i < dims.m; ++i) x_of_y[x_name(i)] = (*inverse)[static_cast<std::size_t>(i)];
        std::map<std::string, Expr> e_of_y = x_of_y;
        for (int a = 0; a < dims.n; ++a) e_of_y[u_name(a)] = phi.components()[static_cast<std::size_t>(a)].expr().substitute(x_of_y);
        std::map<std::string, Expr> rename;
        for (int i = 0; i < dims.m; ++i) rename["y" + std::to_string(i + 1)] = Expr::variable(x_name(i));
        std::vector<Expr> comps;
        for (int a = 0; a < dims.n; ++a) comps.push_back(v[static_cast<std::size_t>(a)].expr().substitute(e_of_y).substitute(rename));
        return SectionE(dims, comps);
    }
};

class SingularChart : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ChartChangeResult {
    PointJ1pi1 point;
    Christoffels gamma;  ///< connection in the new chart at the image point
};

/// Transforms a J1 pi1 point and the Christoffel symbols at its base point.
inline ChartChangeResult change_chart_j1pi1(const FiberedChartChange& c, const Connection& conn, const PointJ1pi1& z) {
    const BundleDims& d = c.dims;
    const int m = d.m, n = d.n;
    // Base map: J = dy/dx, A = dx/dy = J^{-1}, second derivatives of y.
    Matrix jac(m, m);
    std::vector<Matrix> y2;
    for (int r = 0; r < m; ++r) {
        const Jet2Scalar j = c.y[static_cast<std::size_t>(r)].eval2(z.x);
        jac.row(r) = j.grad.transpose();
        y2.push_back(j.hess);
    }
    const Vector sv = linalg::singular_values(jac);
    if (sv.size() == 0 || sv(sv.size() - 1) <= 1e-12 * sv(0)) throw SingularChart("chart change: singular base Jacobian");
    const Matrix a = jac.inverse();
    // x2[k](p, q) = d^2 x^k / dy^p dy^q = -A^k_r (d^2 y^r / dx^s dx^t) A^s_p A^t_q.
    std::vector<Matrix> x2(static_cast<std::size_t>(m), Matrix::Zero(m, m));
    for (int r = 0; r < m; ++r) {
        const Matrix t = a.transpose() * y2[static_cast<std::size_t>(r)] * a;
        for (int k = 0; k < m; ++k) x2[static_cast<std::size_t>(k)] -= a(k, r) * t;
    }

    Vector e(m + n);
    e << z.x, z.u;
    ChartChangeResult out{PointJ1pi1::zero(d), zero_tensor3(m, m)};
    out.point.x = c.map_base(z.x);
    for (int b = 0; b < n; ++b) {
        const Jet2Scalar vj = c.v[static_cast<std::size_t>(b)].eval2(e);
        out.point.u(b) = vj.value;
        const Vector vx = vj.grad.head(m), vu = vj.grad.tail(n);
        const Matrix vxx = vj.hess.topLeftCorner(m, m);
        const Matrix vxu = vj.hess.topRightCorner(m, n);  // (i, alpha) = d2v / dx^i du^alpha
        const Matrix vuu = vj.hess.bottomRightCorner(n, n);
        // w_i = dv/dx^i + u^a_i dv/du^a, and the same with ubar.
        const Vector w = vx + z.ujet.transpose() * vu;
        const Vector wbar = vx + z.ubar.transpose() * vu;
        out.point.ujet.row(b) = (w.transpose() * a);
        out.point.ubar.row(b) = (wbar.transpose() * a);
        // Bracket(i, i') before contraction with A^i_j A^{i'}_{j'}.
        Matrix br = vxx + z.ujet.transpose() * vxu.transpose() + vxu * z.ubar + z.ujet.transpose() * vuu * z.ubar;
        for (int al = 0; al < n; ++al) br += vu(al) * z.usec[static_cast<std::size_t>(al)];
        Matrix sec = a.transpose() * br * a;
        for (int i = 0; i < m; ++i) sec += w(i) * x2[static_cast<std::size_t>(i)];
        out.point.usec[static_cast<std::size_t>(b)] = sec;
    }

    // Gamma_B^c_{pq} = (d2x^k/dy^p dy^q + A^i_p A^j_q Gamma^k_{ij}) J^c_k.
    const Christoffels g = conn.eval(z.x);
    std::vector<Matrix> inner(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) inner[static_cast<std::size_t>(k)] = x2[static_cast<std::size_t>(k)] + a.transpose() * g[static_cast<std::size_t>(k)] * a;
    for (int cidx = 0; cidx < m; ++cidx) {
        Matrix s = Matrix::Zero(m, m);
        for (int k = 0; k < m; ++k) s += jac(cidx, k) * inner[static_cast<std::size_t>(k)];
        out.gamma[static_cast<std::size_t>(cidx)] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Canonical forms.

/// d^m x = dx^0 ^ ... ^ dx^{m-1} on an ambient space whose first m coordinates are x.
inline KForm volume_form(int ambient, int m) {
    IndexTuple t;
    for (int i = 0; i < m; ++i) t.push_back(i);
    return KForm::basis(ambient, t);
}

/// d^{m-1}x_i = i_{d/dx^i} d^m x.
inline KForm volume_minus(int ambient, int m, int i) {
    IndexTuple t;
    for (int k = 0; k < m; ++k)
        if (k != i) t.push_back(k);
    KForm f(ambient, m - 1);
    f.add(t, (i % 2 == 0) ? 1.0 : -1.0);
    return f;
}

/// Theta = p d^m x + p^i_a du^a ^ d^{m-1}x_i on M pi.
inline KForm canonical_theta(const PointMpi& z) {
    const BundleDims d(static_cast<int>(z.x.size()), static_cast<int>(z.u.size()));
    const int dim = d.dim_mpi();
    KForm theta = z.p * volume_form(dim, d.m);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            if (z.pmom(a, i) != 0.0)
                theta += z.pmom(a, i) * wedge(KForm::basis(dim, {d.iu(a)}), volume_minus(dim, d.m, i));
    return theta;
}

/// Omega = -dp ^ d^m x - dp^i_a ^ du^a ^ d^{m-1}x_i on M pi (constant in these coordinates).
inline KForm canonical_omega(const BundleDims& d) {
    const int dim = d.dim_mpi();
    KForm omega = -wedge(KForm::basis(dim, {d.ip()}), volume_form(dim, d.m));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            omega -= wedge(KForm::basis(dim, {d.ipmom(a, i), d.iu(a)}), volume_minus(dim, d.m, i));
    return omega;
}

inline KForm canonical_omega(const PointMpi& z) {
    return canonical_omega(BundleDims(static_cast<int>(z.x.size()), static_cast<int>(z.u.size())));
}

enum class LambdaSpace { J1, Mpi };

/// Canonical multisymplectic (m+2)-form -d(coefficients ^ d^m x) on
///   Lambda^{m+1}_2 J1 pi : x | u | ujet | pbar_a (n) | pbar^i_a (nm)
///   Lambda^{m+1}_2 M pi  : x | u | p | pmom | pbar_a (n) | pbar (1) | pbar^a_i (nm)
inline KForm canonical_omega_on(LambdaSpace space, const BundleDims& d) {
    const int m = d.m, n = d.n;
    if (space == LambdaSpace::J1) {
        const int dim = d.dim_lambda_j1();
        const int base = d.dim_j1();
        const KForm vol = volume_form(dim, m);
        KForm omega(dim, m + 2);
        for (int a = 0; a < n; ++a) {
            omega -= wedge(KForm::basis(dim, {base + a, d.iu(a)}), vol);
            for (int i = 0; i < m; ++i)
                omega -= wedge(KForm::basis(dim, {base + n + a * m + i, d.j1_ujet(a, i)}), vol);
        }
        return omega;
    }
    const int dim = d.dim_lambda_mpi();
    const int base = d.dim_mpi();
    const KForm vol = volume_form(dim, m);
    KForm omega = -wedge(KForm::basis(dim, {base + n, d.ip()}), vol);
    for (int a = 0; a < n; ++a) {
        omega -= wedge(KForm::basis(dim, {base + a, d.iu(a)}), vol);
        for (int i = 0; i < m; ++i)
            omega -= wedge(KForm::basis(dim, {base + n + 1 + a * m + i, d.ipmom(a, i)}), vol);
    }
    return omega;
}

/// One factor of the vertical endomorphism: (du^a - u^a_j dx^j) ^ d^{m-1}x_i (x) d/du^a_i.
struct VerticalFactor {
    int alpha;
    int i;
    KForm form;       ///< m-form on J1 pi
    int output_index; ///< coordinate index of d/du^a_i in J1 pi
};

inline std::vector<VerticalFactor> vertical_endomorphism(const PointJ1& z) {
    const BundleDims d(static_cast<int>(z.x.size()), static_cast<int>(z.u.size()));
    const int dim = d.dim_j1();
    std::vector<VerticalFactor> out;
    for (int a = 0; a < d.n; ++a) {
        KForm contact = KForm::basis(dim, {d.iu(a)});
        for (int j = 0; j < d.m; ++j) contact -= z.ujet(a, j) * KForm::basis(dim, {j});
        for (int i = 0; i < d.m; ++i)
            out.push_back({a, i, wedge(contact, volume_minus(dim, d.m, i)), d.j1_ujet(a, i)});
    }
    return out;
}

/// <S_eta, dL> for a covector dL on J1 pi (gradient in J1 layout).
inline KForm contract_vertical(const std::vector<VerticalFactor>& s, const Vector& dl, int dim, int m) {
    KForm out(dim, m);
    for (const auto& f : s) out += dl(f.output_index) * f.form;
    return out;
}

} // namespace jettriple
