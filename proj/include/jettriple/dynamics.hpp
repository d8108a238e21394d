#pragma once

/**
 * @file dynamics.hpp
 * @brief Lagrangian and Hamiltonian densities, Poincare-Cartan forms, Legendre
 *        transforms, Euler-Lagrange and Hamilton-De Donder-Weyl residuals, and
 *        the defining equations and tangent generators of S_L and S_H.
 */

#include "jettriple/triple.hpp"

#include <cmath>
#include <memory>
#include <unordered_map>

namespace jettriple {

// ---------------------------------------------------------------------------
// Densities.

/// L d^m x in a volume-compatible chart; L is a field over x | u | ujet.
class LagrangianDensity {
public:
    LagrangianDensity(const BundleDims& d, Expr l) : dims_(d), field_(std::move(l), j1_vars(d)) {}
    LagrangianDensity(const BundleDims& d, std::string_view src) : LagrangianDensity(d, parse(src)) {}

    const BundleDims& dims() const noexcept { return dims_; }
    const ScalarField& field() const noexcept { return field_; }
    double eval(const PointJ1& z) const { return field_.eval(z.to_vector()); }
    Jet2Scalar eval2(const PointJ1& z) const { return field_.eval2(z.to_vector()); }

private:
    BundleDims dims_;
    ScalarField field_;
};

/// H(x, u, pmom) of the density (p + H) d^m x. Derivatives use the M0 pi
/// layout x | u | pmom.
class Hamiltonian {
public:
    virtual ~Hamiltonian() = default;
    virtual const BundleDims& dims() const noexcept = 0;
    virtual Jet2Scalar eval2(const PointM0pi& z) const = 0;
    virtual double eval(const PointM0pi& z) const { return eval2(z).value; }
    /// Independent copy for use on another thread.
    virtual std::unique_ptr<Hamiltonian> fork() const = 0;
};

/// Hamiltonian given by an expression over x | u | pmom (p is not a variable).
class HamiltonianDensity final : public Hamiltonian {
public:
    HamiltonianDensity(const BundleDims& d, Expr h) : dims_(d), field_(std::move(h), m0_vars(d)) {}
    HamiltonianDensity(const BundleDims& d, std::string_view src) : HamiltonianDensity(d, parse(src)) {}

    const BundleDims& dims() const noexcept override { return dims_; }
    const ScalarField& field() const noexcept { return field_; }
    Jet2Scalar eval2(const PointM0pi& z) const override { return field_.eval2(z.to_vector()); }
    double eval(const PointM0pi& z) const override { return field_.eval(z.to_vector()); }
    std::unique_ptr<Hamiltonian> fork() const override { return std::make_unique<HamiltonianDensity>(*this); }

private:
    BundleDims dims_;
    ScalarField field_;
};

/// The Hamiltonian section p = -H(x, u, pmom).
inline PointMpi hamiltonian_section(const Hamiltonian& h, const PointM0pi& z) { return {z.x, z.u, -h.eval(z), z.pmom}; }

// ---------------------------------------------------------------------------
// Poincare-Cartan forms and Legendre transforms.

namespace detail {

/// Gradient, in J1 layout, of L - u^a_i dL/du^a_i.
inline Vector energy_gradient(const BundleDims& d, const Jet2Scalar& j, const PointJ1& z) {
    Vector g = j.grad;
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            const int v = d.j1_ujet(a, i);
            g -= z.ujet(a, i) * j.hess.row(v).transpose();
            g(v) -= j.grad(v);
        }
    return g;
}

inline double energy(const BundleDims& d, const Jet2Scalar& j, const PointJ1& z) {
    double e = j.value;
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) e -= z.ujet(a, i) * j.grad(d.j1_ujet(a, i));
    return e;
}

inline Matrix velocity_gradient(const BundleDims& d, const Jet2Scalar& j) {
    Matrix p(d.n, d.m);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) p(a, i) = j.grad(d.j1_ujet(a, i));
    return p;
}

} // namespace detail

/// Theta_L = (L - u^a_i dL/du^a_i) d^m x + dL/du^a_i du^a ^ d^{m-1}x_i on J1 pi.
inline KForm pc_theta(const LagrangianDensity& l, const PointJ1& z) {
    const BundleDims& d = l.dims();
    const int dim = d.dim_j1();
    const Jet2Scalar j = l.eval2(z);
    KForm theta = detail::energy(d, j, z) * volume_form(dim, d.m);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            theta += j.grad(d.j1_ujet(a, i)) * wedge(KForm::basis(dim, {d.iu(a)}), volume_minus(dim, d.m, i));
    return theta;
}

/// Omega_L = -d Theta_L, differentiated analytically.
inline KForm pc_omega(const LagrangianDensity& l, const PointJ1& z) {
    const BundleDims& d = l.dims();
    const int dim = d.dim_j1();
    const Jet2Scalar j = l.eval2(z);
    KForm omega = -wedge(KForm::one_form(detail::energy_gradient(d, j, z)), volume_form(dim, d.m));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            const Vector dc = j.hess.row(d.j1_ujet(a, i)).transpose();
            omega -= wedge(wedge(KForm::one_form(dc), KForm::basis(dim, {d.iu(a)})), volume_minus(dim, d.m, i));
        }
    return omega;
}

/// L eta + <S_eta, dL>, the intrinsic expression of Theta_L.
inline KForm pc_theta_intrinsic(const LagrangianDensity& l, const PointJ1& z) {
    const BundleDims& d = l.dims();
    const int dim = d.dim_j1();
    const Jet2Scalar j = l.eval2(z);
    return j.value * volume_form(dim, d.m) + contract_vertical(vertical_endomorphism(z), j.grad, dim, d.m);
}

inline PointMpi legendre_ext(const LagrangianDensity& l, const PointJ1& z) {
    const Jet2Scalar j = l.eval2(z);
    return {z.x, z.u, detail::energy(l.dims(), j, z), detail::velocity_gradient(l.dims(), j)};
}

inline PointM0pi legendre_red(const LagrangianDensity& l, const PointJ1& z) {
    const Jet2Scalar j = l.eval2(z);
    return {z.x, z.u, detail::velocity_gradient(l.dims(), j)};
}

/// Jacobian of legendre_ext at z: rows in M pi layout, columns in J1 layout.
inline Matrix legendre_ext_jacobian(const LagrangianDensity& l, const PointJ1& z) {
    const BundleDims& d = l.dims();
    const Jet2Scalar j = l.eval2(z);
    Matrix jac = Matrix::Zero(d.dim_mpi(), d.dim_j1());
    for (int k = 0; k < d.m + d.n; ++k) jac(k, k) = 1.0;
    jac.row(d.ip()) = detail::energy_gradient(d, j, z).transpose();
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) jac.row(d.ipmom(a, i)) = j.hess.row(d.j1_ujet(a, i));
    return jac;
}

/// The velocity Hessian d^2 L / du^a_i du^b_j, (nm) x (nm), alpha-major.
inline Matrix velocity_hessian(const BundleDims& d, const Jet2Scalar& j) {
    return j.hess.block(d.m + d.n, d.m + d.n, d.nm(), d.nm());
}

struct Regularity {
    bool regular = false;
    double min_singular_value = 0.0;
    double max_singular_value = 0.0;
};

inline Regularity hessian_regularity(const LagrangianDensity& l, const PointJ1& z, double tau_rank = kRankTolerance) {
    const Vector sv = linalg::singular_values(velocity_hessian(l.dims(), l.eval2(z)));
    Regularity r;
    r.max_singular_value = sv.size() ? sv(0) : 0.0;
    r.min_singular_value = sv.size() ? sv(sv.size() - 1) : 0.0;
    r.regular = r.max_singular_value > 0.0 && r.min_singular_value > tau_rank * r.max_singular_value;
    return r;
}

class SingularHessian : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kNewtonTolerance = 1e-12;
inline constexpr int kNewtonIterations = 50;
inline constexpr int kDampedHalvings = 20;

struct NewtonReport {
    int iterations = 0;
    double residual = 0.0;
};

/// Solves dL/du^a_i (x, u, ujet) = target.pmom for ujet by Newton's method,
/// starting from guess.ujet. x and u are taken from target.
inline PointJ1 invert_leg(const LagrangianDensity& l, const PointM0pi& target, const PointJ1& guess,
                          NewtonReport* report = nullptr, double tau_rank = kRankTolerance,
                          int max_iterations = kNewtonIterations) {
    const BundleDims& d = l.dims();
    PointJ1 z{target.x, target.u, guess.ujet};
    const double tol = kNewtonTolerance * (1.0 + target.pmom.lpNorm<Eigen::Infinity>());
    auto residual = [&](const Jet2Scalar& j) -> Matrix { return detail::velocity_gradient(d, j) - target.pmom; };
    Jet2Scalar j = l.eval2(z);
    Matrix f = residual(j);
    double r = f.lpNorm<Eigen::Infinity>();
    for (int it = 0;; ++it) {
        if (r <= tol) {
            if (report) *report = {it, r};
            return z;
        }
        if (it == max_iterations) break;
        const Matrix w = velocity_hessian(d, j);
        Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector sv = svd.singularValues();
        if (sv(0) == 0.0 || sv(sv.size() - 1) <= tau_rank * sv(0)) throw SingularHessian("invert_leg: velocity Hessian is singular");
        Vector rhs(d.nm());
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) rhs(a * d.m + i) = -f(a, i);
        const Vector step = svd.solve(rhs);
        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h <= kDampedHalvings; ++h, t *= 0.5) {
            PointJ1 trial = z;
            for (int a = 0; a < d.n; ++a)
                for (int i = 0; i < d.m; ++i) trial.ujet(a, i) += t * step(a * d.m + i);
            const Jet2Scalar jt = l.eval2(trial);
            const Matrix ft = residual(jt);
            const double rt = ft.lpNorm<Eigen::Infinity>();
            if (rt < r || rt <= tol) {
                z = std::move(trial);
                j = jt;
                f = ft;
                r = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (report) *report = {max_iterations, r};
    throw NonConvergence("invert_leg: Newton iteration did not converge (residual " + std::to_string(r) + ")");
}

inline PointJ1 invert_leg(const LagrangianDensity& l, const PointM0pi& target) {
    return invert_leg(l, target, PointJ1{target.x, target.u, target.pmom});
}

/// H = p^i_a u^a_i - L at u^a_i = leg^{-1}(x, u, pmom). Derivatives follow
/// from the implicit function theorem: with W the velocity Hessian,
/// dH/dpmom = ujet, dH/dq = -dL/dq (q = x, u), H_pp = W^-1,
/// H_qp = -L_qv W^-1, H_qq = -L_qq + L_qv W^-1 L_vq.
/// Inverse solutions are memoized per instance (as Newton warm starts only).
class InducedHamiltonian final : public Hamiltonian {
public:
    explicit InducedHamiltonian(LagrangianDensity l) : l_(std::move(l)) {}
    InducedHamiltonian(const InducedHamiltonian& o) : Hamiltonian(), l_(o.l_) {}

    const BundleDims& dims() const noexcept override { return l_.dims(); }
    const LagrangianDensity& lagrangian() const noexcept { return l_; }
    std::unique_ptr<Hamiltonian> fork() const override { return std::make_unique<InducedHamiltonian>(l_); }

    PointJ1 inverse(const PointM0pi& z) const {
        const std::string key = memo_key(z);
        PointJ1 guess{z.x, z.u, z.pmom};
        if (!key.empty()) {
            auto it = memo_.find(key);
            if (it != memo_.end()) guess.ujet = it->second;
        }
        PointJ1 sol = invert_leg(l_, z, guess);
        if (!key.empty()) memo_[key] = sol.ujet;
        return sol;
    }

    Jet2Scalar eval2(const PointM0pi& z) const override {
        const BundleDims& d = l_.dims();
        const PointJ1 v = inverse(z);
        const Jet2Scalar j = l_.eval2(v);
        const int q = d.m + d.n, nm = d.nm();
        Jet2Scalar out{0.0, Vector(q + nm), Matrix(q + nm, q + nm)};
        out.value = (z.pmom.array() * v.ujet.array()).sum() - j.value;
        out.grad.head(q) = -j.grad.head(q);
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) out.grad(q + a * d.m + i) = v.ujet(a, i);
        const Matrix winv = velocity_hessian(d, j).inverse();
        const Matrix lqv = j.hess.block(0, q, q, nm);
        out.hess.topLeftCorner(q, q) = -j.hess.topLeftCorner(q, q) + lqv * winv * lqv.transpose();
        out.hess.topRightCorner(q, nm) = -lqv * winv;
        out.hess.bottomLeftCorner(nm, q) = out.hess.topRightCorner(q, nm).transpose();
        out.hess.bottomRightCorner(nm, nm) = winv;
        return out;
    }

    double eval(const PointM0pi& z) const override {
        const PointJ1 v = inverse(z);
        return (z.pmom.array() * v.ujet.array()).sum() - l_.eval(v);
    }

private:
    /// Coordinates rounded to 12 decimals; empty when a coordinate is too large to key.
    static std::string memo_key(const PointM0pi& z) {
        const Vector v = z.to_vector();
        std::string key;
        key.reserve(static_cast<std::size_t>(v.size()) * 8);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (!(std::abs(v(i)) < 1e6)) return {};
            const long long r = std::llround(v(i) * 1e12);
            key.append(reinterpret_cast<const char*>(&r), sizeof r);
        }
        return key;
    }

    LagrangianDensity l_;
    mutable std::unordered_map<std::string, Matrix> memo_;
};

inline InducedHamiltonian induced_hamiltonian(const LagrangianDensity& l) { return InducedHamiltonian(l); }

// ---------------------------------------------------------------------------
// Differentials.

/// dL restricted to Lambda^{m+1}_2 J1 pi: (dL/du^a du^a + dL/du^a_i du^a_i) ^ d^m x.
inline FormLambdaJ1 dL_map(const LagrangianDensity& l, const PointJ1& z) {
    const BundleDims& d = l.dims();
    const Jet2Scalar j = l.eval2(z);
    return {z, j.grad.segment(d.m, d.n), detail::velocity_gradient(d, j)};
}

/// -dH = -dH/du^a du^a ^ d^m x - dp ^ d^m x - dH/dp^i_a dp^i_a ^ d^m x.
inline FormLambdaMpi dH_map(const Hamiltonian& h, const PointMpi& w) {
    const BundleDims& d = h.dims();
    const Jet2Scalar j = h.eval2(PointM0pi{w.x, w.u, w.pmom});
    FormLambdaMpi out{w, -j.grad.segment(d.m, d.n), -1.0, Matrix(d.n, d.m)};
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) out.coef_pmom(a, i) = -j.grad(d.m + d.n + a * d.m + i);
    return out;
}

// ---------------------------------------------------------------------------
// Field equations.

namespace detail {

/// First and second derivatives of a section of pi at x.
struct SectionJet {
    PointJ1 j1;
    Tensor3 second;  ///< second[a](i, j) = d^2 u^a / dx^i dx^j
};

inline SectionJet section_jet(const SectionE& phi, const Vector& x) {
    const BundleDims& d = phi.dims();
    const auto jets = phi.eval2(x);
    SectionJet s{{x, Vector(d.n), Matrix(d.n, d.m)}, zero_tensor3(d.n, d.m)};
    for (int a = 0; a < d.n; ++a) {
        s.j1.u(a) = jets[static_cast<std::size_t>(a)].value;
        s.j1.ujet.row(a) = jets[static_cast<std::size_t>(a)].grad.transpose();
        s.second[static_cast<std::size_t>(a)] = jets[static_cast<std::size_t>(a)].hess;
    }
    return s;
}

/// d/dx^j of f(j1 phi(x)) from the J1-layout gradient of f.
inline double total_derivative(const BundleDims& d, const Vector& grad_f, const SectionJet& s, int j) {
    double v = grad_f(j);
    for (int b = 0; b < d.n; ++b) {
        v += grad_f(d.iu(b)) * s.j1.ujet(b, j);
        for (int k = 0; k < d.m; ++k) v += grad_f(d.j1_ujet(b, k)) * s.second[static_cast<std::size_t>(b)](k, j);
    }
    return v;
}

} // namespace detail

/// dL/du^a - d/dx^i (dL/du^a_i) along j1 phi, chain rule expanded.
inline Vector el_residual(const LagrangianDensity& l, const SectionE& phi, const Vector& x) {
    const BundleDims& d = l.dims();
    const detail::SectionJet s = detail::section_jet(phi, x);
    const Jet2Scalar j = l.eval2(s.j1);
    Vector r(d.n);
    for (int a = 0; a < d.n; ++a) {
        r(a) = j.grad(d.iu(a));
        for (int i = 0; i < d.m; ++i)
            r(a) -= detail::total_derivative(d, j.hess.row(d.j1_ujet(a, i)).transpose(), s, i);
    }
    return r;
}

/// (du^a/dx^i - dH/dp^i_a  [a-major, nm entries],  sum_i dp^i_a/dx^i + dH/du^a  [n entries]).
inline Vector hdw_residual(const Hamiltonian& h, const M0Jet& t) {
    const BundleDims& d = h.dims();
    const Jet2Scalar j = h.eval2(t.value);
    Vector r(d.nm() + d.n);
    for (int a = 0; a < d.n; ++a) {
        for (int i = 0; i < d.m; ++i) r(a * d.m + i) = t.du(a, i) - j.grad(d.m + d.n + a * d.m + i);
        r(d.nm() + a) = t.dpmom[static_cast<std::size_t>(a)].trace() + j.grad(d.m + a);
    }
    return r;
}

inline Vector hdw_residual(const Hamiltonian& h, const SectionM0& tau, const Vector& x) { return hdw_residual(h, tau(x)); }

/// tau = leg o j1 phi as a section of M0 pi, with derivatives by the chain rule.
inline SectionM0 legendre_section(const LagrangianDensity& l, const SectionE& phi) {
    const BundleDims d = l.dims();
    return SectionM0(d, [l, phi, d](const Vector& x) {
        const detail::SectionJet s = detail::section_jet(phi, x);
        const Jet2Scalar j = l.eval2(s.j1);
        M0Jet t{{x, s.j1.u, detail::velocity_gradient(d, j)}, s.j1.ujet, zero_tensor3(d.n, d.m)};
        for (int a = 0; a < d.n; ++a)
            for (int i = 0; i < d.m; ++i) {
                const Vector g = j.hess.row(d.j1_ujet(a, i)).transpose();
                for (int k = 0; k < d.m; ++k) t.dpmom[static_cast<std::size_t>(a)](i, k) = detail::total_derivative(d, g, s, k);
            }
        return t;
    });
}

/// j1(Leg o j1 phi) at x as a point of J1(pi o nu).
inline PointJ1pinu legendre_prolongation(const LagrangianDensity& l, const SectionE& phi, const Vector& x) {
    const BundleDims& d = l.dims();
    const detail::SectionJet s = detail::section_jet(phi, x);
    const Jet2Scalar j = l.eval2(s.j1);
    PointJ1pinu z = PointJ1pinu::zero(d);
    z.x = x;
    z.u = s.j1.u;
    z.ujet = s.j1.ujet;
    z.p = detail::energy(d, j, s.j1);
    z.pmom = detail::velocity_gradient(d, j);
    const Vector ge = detail::energy_gradient(d, j, s.j1);
    for (int k = 0; k < d.m; ++k) z.pjet(k) = detail::total_derivative(d, ge, s, k);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            const Vector g = j.hess.row(d.j1_ujet(a, i)).transpose();
            for (int k = 0; k < d.m; ++k) z.pmomjet[static_cast<std::size_t>(a)](i, k) = detail::total_derivative(d, g, s, k);
        }
    return z;
}

/// A_pi(j1(Leg o j1 phi)) - dL(j1 phi) at x. The coef_u block equals
/// -el_residual and the coef_ujet block vanishes identically.
inline FormLambdaJ1 jet_equivalence_residual(const LagrangianDensity& l, const SectionE& phi, const Vector& x) {
    const PointJ1pinu z = legendre_prolongation(l, phi, x);
    const FormLambdaJ1 a = tulczyjew_A(z);
    const FormLambdaJ1 dl = dL_map(l, z.j1());
    return {z.j1(), a.coef_u - dl.coef_u, a.coef_ujet - dl.coef_ujet};
}

/// j1(h o tau) at x as a point of J1(pi o nu), with p = -H.
inline PointJ1pinu hamiltonian_prolongation(const Hamiltonian& h, const M0Jet& t) {
    const BundleDims& d = h.dims();
    const Jet2Scalar j = h.eval2(t.value);
    PointJ1pinu z = PointJ1pinu::zero(d);
    z.x = t.value.x;
    z.u = t.value.u;
    z.p = -j.value;
    z.pmom = t.value.pmom;
    z.ujet = t.du;
    z.pmomjet = t.dpmom;
    for (int k = 0; k < d.m; ++k) {
        double v = j.grad(k);
        for (int a = 0; a < d.n; ++a) {
            v += j.grad(d.m + a) * t.du(a, k);
            for (int i = 0; i < d.m; ++i) v += j.grad(d.m + d.n + a * d.m + i) * t.dpmom[static_cast<std::size_t>(a)](i, k);
        }
        z.pjet(k) = -v;
    }
    return z;
}

/// flat_Omega(j1(h o tau)) + dH(h o tau) at x. coef_p vanishes identically,
/// coef_u equals the second HDW block and coef_pmom minus the first.
inline FormLambdaMpi hdw_jet_residual(const Hamiltonian& h, const M0Jet& t) {
    const PointJ1pinu z = hamiltonian_prolongation(h, t);
    const FormLambdaMpi f = flat_omega(z);
    const FormLambdaMpi dh = dH_map(h, z.mpi());
    return {z.mpi(), f.coef_u - dh.coef_u, f.coef_p - dh.coef_p, f.coef_pmom - dh.coef_pmom};
}

inline FormLambdaMpi hdw_jet_residual(const Hamiltonian& h, const SectionM0& tau, const Vector& x) { return hdw_jet_residual(h, tau(x)); }

// ---------------------------------------------------------------------------
// S_L and S_H.

/// (p^i_a - dL/du^a_i  [nm],  p^i_{a i} - dL/du^a  [n]).
inline Vector sl_defining(const LagrangianDensity& l, const PointJ1pinu& z) {
    const BundleDims& d = l.dims();
    const Jet2Scalar j = l.eval2(z.j1());
    Vector r(d.nm() + d.n);
    for (int a = 0; a < d.n; ++a) {
        for (int i = 0; i < d.m; ++i) r(a * d.m + i) = z.pmom(a, i) - j.grad(d.j1_ujet(a, i));
        r(d.nm() + a) = z.pmomjet[static_cast<std::size_t>(a)].trace() - j.grad(d.iu(a));
    }
    return r;
}

/// (u^a_j - dH/dp^j_a  [nm],  p^j_{a j} + dH/du^a  [n]).
inline Vector sh_defining(const Hamiltonian& h, const PointJ1pinu& z) {
    const BundleDims& d = h.dims();
    const Jet2Scalar j = h.eval2(PointM0pi{z.x, z.u, z.pmom});
    Vector r(d.nm() + d.n);
    for (int a = 0; a < d.n; ++a) {
        for (int i = 0; i < d.m; ++i) r(a * d.m + i) = z.ujet(a, i) - j.grad(d.m + d.n + a * d.m + i);
        r(d.nm() + a) = z.pmomjet[static_cast<std::size_t>(a)].trace() + j.grad(d.m + a);
    }
    return r;
}

class NotOnSubmanifold : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kOnSubmanifoldTolerance = 1e-9;

/// Point of S_L over the J1(pi o nu) coordinates of z: pmom and the traces
/// of pmomjet (adjusted on the (1,1) entry) are set from L.
inline PointJ1pinu project_to_sl(const LagrangianDensity& l, PointJ1pinu z) {
    const BundleDims& d = l.dims();
    const Jet2Scalar j = l.eval2(z.j1());
    z.pmom = detail::velocity_gradient(d, j);
    for (int a = 0; a < d.n; ++a) {
        Matrix& pj = z.pmomjet[static_cast<std::size_t>(a)];
        pj(0, 0) += j.grad(d.iu(a)) - pj.trace();
    }
    return z;
}

/// Point of S_H: ujet from dH/dpmom, traces of pmomjet from -dH/du.
inline PointJ1pinu project_to_sh(const Hamiltonian& h, PointJ1pinu z) {
    const BundleDims& d = h.dims();
    const Jet2Scalar j = h.eval2(PointM0pi{z.x, z.u, z.pmom});
    for (int a = 0; a < d.n; ++a) {
        for (int i = 0; i < d.m; ++i) z.ujet(a, i) = j.grad(d.m + d.n + a * d.m + i);
        Matrix& pj = z.pmomjet[static_cast<std::size_t>(a)];
        pj(0, 0) += -j.grad(d.m + a) - pj.trace();
    }
    return z;
}

/// X_i, U_a, U^i_a (graph directions over x | u | ujet) followed by the
/// kernel generators of Omega-tilde; together they span T_z S_L.
inline std::vector<Vector> sl_tangent_basis(const LagrangianDensity& l, const PointJ1pinu& z, double tol = kOnSubmanifoldTolerance) {
    const BundleDims& d = l.dims();
    if (sl_defining(l, z).lpNorm<Eigen::Infinity>() > tol) throw NotOnSubmanifold("sl_tangent_basis: point is not on S_L");
    const Jet2Scalar j = l.eval2(z.j1());
    const int dim = d.dim_j1pinu();
    std::vector<Vector> out;
    auto graph = [&](int pinu_index, int j1_index) {
        Vector v = Vector::Zero(dim);
        v(pinu_index) = 1.0;
        for (int b = 0; b < d.n; ++b) {
            for (int k = 0; k < d.m; ++k) v(d.ipmom(b, k)) = j.hess(d.j1_ujet(b, k), j1_index);
            v(d.ipmomjet(b, 0, 0)) += j.hess(d.iu(b), j1_index);
        }
        out.push_back(v);
    };
    for (int i = 0; i < d.m; ++i) graph(d.ix(i), i);
    for (int a = 0; a < d.n; ++a) graph(d.iu(a), d.iu(a));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) graph(d.iujet(a, i), d.j1_ujet(a, i));
    for (auto& k : omega_tilde_kernel_generators(d)) out.push_back(std::move(k));
    return out;
}

/// X_i, U_a, P^i_a (graph directions over x | u | pmom) followed by the
/// kernel generators of Omega-tilde; together they span T_z S_H.
inline std::vector<Vector> sh_tangent_basis(const Hamiltonian& h, const PointJ1pinu& z, double tol = kOnSubmanifoldTolerance) {
    const BundleDims& d = h.dims();
    if (sh_defining(h, z).lpNorm<Eigen::Infinity>() > tol) throw NotOnSubmanifold("sh_tangent_basis: point is not on S_H");
    const Jet2Scalar j = h.eval2(PointM0pi{z.x, z.u, z.pmom});
    const int dim = d.dim_j1pinu();
    const int off = d.m + d.n;
    std::vector<Vector> out;
    auto graph = [&](int pinu_index, int m0_index) {
        Vector v = Vector::Zero(dim);
        v(pinu_index) = 1.0;
        for (int b = 0; b < d.n; ++b) {
            for (int k = 0; k < d.m; ++k) v(d.iujet(b, k)) = j.hess(off + b * d.m + k, m0_index);
            v(d.ipmomjet(b, 0, 0)) -= j.hess(d.m + b, m0_index);
        }
        out.push_back(v);
    };
    for (int i = 0; i < d.m; ++i) graph(d.ix(i), i);
    for (int a = 0; a < d.n; ++a) graph(d.iu(a), d.m + a);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) graph(d.ipmom(a, i), off + a * d.m + i);
    for (auto& k : omega_tilde_kernel_generators(d)) out.push_back(std::move(k));
    return out;
}

// ---------------------------------------------------------------------------
// Example families.

/// L = gamma0(x, u) + gamma^i_a(x, u) u^a_i.
struct AffineLagrangianSpec {
    Expr gamma0 = Expr::number(0.0);
    std::vector<Expr> gamma;  ///< n*m, index a*m + i
};

/// L = 1/2 (flat0 + (flat^i_a + flat~^i_a) u^a_i + flat^{ij}_{ab} u^a_i u^b_j).
struct QuadraticLagrangianSpec {
    Expr flat0 = Expr::number(0.0);
    std::vector<Expr> flat_lin, flat_lin2;  ///< n*m, index a*m + i
    std::vector<Expr> flat_quad;            ///< (nm)^2, row (a*m + i), column (b*m + j)
    bool symmetric = false;

    static QuadraticLagrangianSpec from_matrix(const BundleDims& d, const Matrix& q) {
        if (q.rows() != d.nm() || q.cols() != d.nm()) throw DimensionError("QuadraticLagrangianSpec: matrix must be nm x nm");
        QuadraticLagrangianSpec s;
        s.flat_lin.assign(static_cast<std::size_t>(d.nm()), Expr::number(0.0));
        s.flat_lin2 = s.flat_lin;
        for (int r = 0; r < d.nm(); ++r)
            for (int c = 0; c < d.nm(); ++c) s.flat_quad.push_back(Expr::number(q(r, c)));
        s.symmetric = (q - q.transpose()).lpNorm<Eigen::Infinity>() == 0.0;
        return s;
    }
};

/// H = sharp^a_i p^i_a + sharp^{ab}_{ij} p^i_a p^j_b.
struct QuadraticHamiltonianSpec {
    std::vector<Expr> sharp_lin;   ///< n*m, index a*m + i
    std::vector<Expr> sharp_quad;  ///< (nm)^2, row (a*m + i), column (b*m + j)

    static QuadraticHamiltonianSpec from_matrix(const BundleDims& d, const Matrix& q) {
        if (q.rows() != d.nm() || q.cols() != d.nm()) throw DimensionError("QuadraticHamiltonianSpec: matrix must be nm x nm");
        QuadraticHamiltonianSpec s;
        s.sharp_lin.assign(static_cast<std::size_t>(d.nm()), Expr::number(0.0));
        for (int r = 0; r < d.nm(); ++r)
            for (int c = 0; c < d.nm(); ++c) s.sharp_quad.push_back(Expr::number(q(r, c)));
        return s;
    }
};

namespace detail {
inline bool is_zero_number(const Expr& e) { return e.root()->kind == NodeKind::Number && e.root()->value == 0.0; }

inline void require_size(const std::vector<Expr>& v, int size, const char* what) {
    if (static_cast<int>(v.size()) != size) throw DimensionError(std::string(what) + ": wrong number of entries");
}

/// sum_r c_r y_r + sum_{r,s} q_rs y_r y_s, skipping literal zeros.
inline Expr linear_plus_quadratic(const std::vector<Expr>& c, const std::vector<Expr>& q, const std::vector<Expr>& y) {
    Expr e = Expr::number(0.0);
    const std::size_t k = y.size();
    for (std::size_t r = 0; r < k; ++r)
        if (!c.empty() && !is_zero_number(c[r])) e = e + c[r] * y[r];
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t s = 0; s < k; ++s)
            if (!is_zero_number(q[r * k + s])) e = e + q[r * k + s] * y[r] * y[s];
    return e;
}
} // namespace detail

inline LagrangianDensity make_affine_L(const BundleDims& d, const AffineLagrangianSpec& s) {
    detail::require_size(s.gamma, d.nm(), "AffineLagrangianSpec.gamma");
    Expr e = s.gamma0;
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            const Expr& g = s.gamma[static_cast<std::size_t>(a * d.m + i)];
            if (!detail::is_zero_number(g)) e = e + g * Expr::variable(ujet_name(a, i));
        }
    return LagrangianDensity(d, e);
}

inline LagrangianDensity make_quadratic_L(const BundleDims& d, const QuadraticLagrangianSpec& s) {
    detail::require_size(s.flat_lin, d.nm(), "QuadraticLagrangianSpec.flat_lin");
    detail::require_size(s.flat_lin2, d.nm(), "QuadraticLagrangianSpec.flat_lin2");
    detail::require_size(s.flat_quad, d.nm() * d.nm(), "QuadraticLagrangianSpec.flat_quad");
    std::vector<Expr> lin, v;
    for (int r = 0; r < d.nm(); ++r) {
        const Expr& a = s.flat_lin[static_cast<std::size_t>(r)];
        const Expr& b = s.flat_lin2[static_cast<std::size_t>(r)];
        lin.push_back(detail::is_zero_number(a) ? b : detail::is_zero_number(b) ? a : a + b);
        v.push_back(Expr::variable(ujet_name(r / d.m, r % d.m)));
    }
    return LagrangianDensity(d, Expr::number(0.5) * (s.flat0 + detail::linear_plus_quadratic(lin, s.flat_quad, v)));
}

inline HamiltonianDensity make_quadratic_H(const BundleDims& d, const QuadraticHamiltonianSpec& s) {
    detail::require_size(s.sharp_lin, d.nm(), "QuadraticHamiltonianSpec.sharp_lin");
    detail::require_size(s.sharp_quad, d.nm() * d.nm(), "QuadraticHamiltonianSpec.sharp_quad");
    std::vector<Expr> p;
    for (int r = 0; r < d.nm(); ++r) p.push_back(Expr::variable(pmom_name(r / d.m, r % d.m)));
    return HamiltonianDensity(d, detail::linear_plus_quadratic(s.sharp_lin, s.sharp_quad, p));
}

/// 1/2 sum (u^a_i)^2.
inline LagrangianDensity dirichlet_lagrangian(const BundleDims& d) {
    return make_quadratic_L(d, QuadraticLagrangianSpec::from_matrix(d, Matrix::Identity(d.nm(), d.nm())));
}

/// 1/2 sum (p^i_a)^2.
inline HamiltonianDensity dirichlet_hamiltonian(const BundleDims& d) {
    return make_quadratic_H(d, QuadraticHamiltonianSpec::from_matrix(d, 0.5 * Matrix::Identity(d.nm(), d.nm())));
}

} // namespace jettriple
