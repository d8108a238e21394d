#pragma once

/**
 * @file triple.hpp
 * @brief Structural maps of the triple: exchange map, lifted pairing, core map,
 *        the Tulczyjew morphism (closed form and connection pipeline), the
 *        horizontal projector, the flat map of Omega and the form Omega-tilde.
 */

#include "jettriple/geometry.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <utility>

namespace jettriple {

class BaseMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kBaseTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Exchange map.

/// ex: swaps ujet and ubar and sets usec'[a](i, j) = usec[a](j, i) + (ubar - ujet)[a][k] Gamma^k_{ji}.
inline PointJ1pi1 exchange(const Christoffels& g, const PointJ1pi1& z) {
    const int m = static_cast<int>(z.x.size()), n = static_cast<int>(z.u.size());
    PointJ1pi1 out{z.x, z.u, z.ubar, z.ujet, Tensor3(static_cast<std::size_t>(n))};
    const Matrix delta = z.ubar - z.ujet;
    for (int a = 0; a < n; ++a) {
        Matrix s = z.usec[static_cast<std::size_t>(a)].transpose();
        for (int k = 0; k < m; ++k)
            if (delta(a, k) != 0.0) s += delta(a, k) * g[static_cast<std::size_t>(k)].transpose();
        out.usec[static_cast<std::size_t>(a)] = std::move(s);
    }
    return out;
}

inline PointJ1pi1 exchange(const Connection& c, const PointJ1pi1& z) { return exchange(c.eval(z.x), z); }

// ---------------------------------------------------------------------------
// Pairings.

namespace detail {
inline void require_same_base(const Vector& x1, const Vector& u1, const Vector& x2, const Vector& u2) {
    if (x1.size() != x2.size() || u1.size() != u2.size()) throw DimensionError("base point dimension mismatch");
    if ((x1 - x2).lpNorm<Eigen::Infinity>() > kBaseTolerance || (u1 - u2).lpNorm<Eigen::Infinity>() > kBaseTolerance)
        throw BaseMismatch("points lie over different points of E");
}
} // namespace detail

/// <omega, j1 phi> = p + p^i_a u^a_i.
inline double pairing(const PointMpi& w, const PointJ1& z) {
    detail::require_same_base(w.x, w.u, z.x, z.u);
    return w.p + (w.pmom.array() * z.ujet.array()).sum();
}

/// j1<omega, sigma>: jet (a, a_k) of the pairing of a section omega of M pi
/// with a section sigma of J1 pi, given their jets at one point.
/// `s` is read as the 1-jet of sigma: ujet = values, usec[a](i, k) = d sigma^a_i / d x^k.
inline std::pair<double, Vector> lifted_pairing(const PointJ1pinu& w, const PointJ1pi1& s) {
    detail::require_same_base(w.x, w.u, s.x, s.u);
    const int m = static_cast<int>(w.x.size()), n = static_cast<int>(w.u.size());
    const double a = w.p + (w.pmom.array() * s.ujet.array()).sum();
    Vector ak = w.pjet;
    for (int k = 0; k < m; ++k)
        for (int al = 0; al < n; ++al)
            for (int i = 0; i < m; ++i)
                ak(k) += w.pmomjet[static_cast<std::size_t>(al)](i, k) * s.ujet(al, i) +
                         w.pmom(al, i) * s.usec[static_cast<std::size_t>(al)](i, k);
    return {a, ak};
}

/// a_k dx^k: d^{nabla,eta} <omega, ex(sigma)>, built by composing the
/// exchange map, the lifted pairing and Phi^nabla.
inline Vector core_map(const Christoffels& g, const PointJ1pinu& w, const PointJ1pi1& s) {
    detail::require_same_base(w.x, w.u, s.x, s.u);
    if ((w.ujet - s.ujet).lpNorm<Eigen::Infinity>() > kBaseTolerance)
        throw BaseMismatch("core_map: sigma does not lie over the J1 point of omega");
    const PointJ1pi1 exchanged = exchange(g, s);
    const auto [a, ak] = lifted_pairing(w, exchanged);
    Vector out = ak;
    const int m = static_cast<int>(w.x.size());
    for (int k = 0; k < m; ++k) {
        double tr = 0.0;
        for (int j = 0; j < m; ++j) tr += g[static_cast<std::size_t>(j)](k, j);
        out(k) -= a * tr;  // Phi^nabla, second component
    }
    return out;
}

inline Vector core_map(const Connection& c, const PointJ1pinu& w, const PointJ1pi1& s) { return core_map(c.eval(w.x), w, s); }

// ---------------------------------------------------------------------------
// Affine-map values and the Tulczyjew morphism.

/// Coordinates of an affine map J1_z pi1 -> T*M:
/// a_k = pbar_k + pbar_mom[a](i, k) ubar^a_i + pbar_jet(a, i, j, k) usec[a](i, j).
struct AffineMapValue {
    int m = 1, n = 1;
    Vector pbar;
    Tensor3 pbar_mom;
    std::vector<double> pbar_jet;  // [a][i][j][k]

    AffineMapValue(int m_, int n_)
        : m(m_), n(n_), pbar(Vector::Zero(m_)), pbar_mom(zero_tensor3(n_, m_)),
          pbar_jet(static_cast<std::size_t>(n_ * m_ * m_ * m_), 0.0) {}

    double& jet(int a, int i, int j, int k) { return pbar_jet[static_cast<std::size_t>(((a * m + i) * m + j) * m + k)]; }
    double jet(int a, int i, int j, int k) const { return pbar_jet[static_cast<std::size_t>(((a * m + i) * m + j) * m + k)]; }

    Vector apply(const PointJ1pi1& s) const {
        Vector out = pbar;
        for (int k = 0; k < m; ++k)
            for (int a = 0; a < n; ++a)
                for (int i = 0; i < m; ++i) {
                    out(k) += pbar_mom[static_cast<std::size_t>(a)](i, k) * s.ubar(a, i);
                    for (int j = 0; j < m; ++j) out(k) += jet(a, i, j, k) * s.usec[static_cast<std::size_t>(a)](i, j);
                }
        return out;
    }

    double max_abs_diff(const AffineMapValue& o) const {
        double d = (pbar - o.pbar).lpNorm<Eigen::Infinity>();
        d = std::max(d, jettriple::max_abs_diff(pbar_mom, o.pbar_mom));
        for (std::size_t q = 0; q < pbar_jet.size(); ++q) d = std::max(d, std::abs(pbar_jet[q] - o.pbar_jet[q]));
        return d;
    }
};

/// Closed coordinate formula for A-tilde.
inline AffineMapValue a_tilde(const Christoffels& g, const PointJ1pinu& w) {
    const int m = static_cast<int>(w.x.size()), n = static_cast<int>(w.u.size());
    AffineMapValue out(m, n);
    Vector tr = Vector::Zero(m);  // Gamma^j_{kj}
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) tr(k) += g[static_cast<std::size_t>(j)](k, j);
    for (int k = 0; k < m; ++k) {
        double pk = w.pjet(k) - w.p * tr(k);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i)
                for (int l = 0; l < m; ++l) pk -= w.pmom(a, i) * w.ujet(a, l) * g[static_cast<std::size_t>(l)](k, i);
        out.pbar(k) = pk;
    }
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < m; ++k) {
                double v = w.pmomjet[static_cast<std::size_t>(a)](i, k) - w.pmom(a, i) * tr(k);
                for (int l = 0; l < m; ++l) v += w.pmom(a, l) * g[static_cast<std::size_t>(i)](k, l);
                out.pbar_mom[static_cast<std::size_t>(a)](i, k) = v;
                for (int j = 0; j < m; ++j) out.jet(a, i, j, k) = (i == k) ? w.pmom(a, j) : 0.0;
            }
    return out;
}

inline AffineMapValue a_tilde(const Connection& c, const PointJ1pinu& w) { return a_tilde(c.eval(w.x), w); }

/// (coef_u[a] du^a + coef_ujet(a, i) du^a_i) ^ d^m x over a point of J1 pi.
struct FormLambdaJ1 {
    PointJ1 base;
    Vector coef_u;
    Matrix coef_ujet;

    /// Coordinates x | u | ujet | coef_u | coef_ujet.
    Vector to_vector() const {
        const int m = static_cast<int>(base.x.size()), n = static_cast<int>(base.u.size());
        Vector v(m + n + n * m + n + n * m);
        v.head(m + n + n * m) = base.to_vector();
        v.segment(m + n + n * m, n) = coef_u;
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(m + n + n * m + n + a * m + i) = coef_ujet(a, i);
        return v;
    }

    double fiber_diff(const FormLambdaJ1& o) const {
        return std::max((coef_u - o.coef_u).lpNorm<Eigen::Infinity>(), (coef_ujet - o.coef_ujet).lpNorm<Eigen::Infinity>());
    }
};

/// coef_u du^a ^ d^m x + coef_p dp ^ d^m x + coef_pmom(a, i) dp^i_a ^ d^m x over a point of M pi.
struct FormLambdaMpi {
    PointMpi base;
    Vector coef_u;
    double coef_p = 0.0;
    Matrix coef_pmom;

    /// Coordinates x | u | p | pmom | coef_u | coef_p | coef_pmom.
    Vector to_vector() const {
        const int m = static_cast<int>(base.x.size()), n = static_cast<int>(base.u.size());
        const int b = m + n + 1 + n * m;
        Vector v(b + n + 1 + n * m);
        v.head(b) = base.to_vector();
        v.segment(b, n) = coef_u;
        v(b + n) = coef_p;
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) v(b + n + 1 + a * m + i) = coef_pmom(a, i);
        return v;
    }

    double fiber_diff(const FormLambdaMpi& o) const {
        return std::max({(coef_u - o.coef_u).lpNorm<Eigen::Infinity>(), std::abs(coef_p - o.coef_p),
                         (coef_pmom - o.coef_pmom).lpNorm<Eigen::Infinity>()});
    }
};

/// Closed formula: (p^i_{a i} du^a + p^i_a du^a_i) ^ d^m x.
inline FormLambdaJ1 tulczyjew_A(const PointJ1pinu& w) {
    const int n = static_cast<int>(w.u.size());
    FormLambdaJ1 out{w.j1(), Vector(n), w.pmom};
    for (int a = 0; a < n; ++a) out.coef_u(a) = w.pmomjet[static_cast<std::size_t>(a)].trace();
    return out;
}

/// Coefficients of an affine map read off by evaluating it at the origin of
/// the J1_z pi1 fiber and at unit displacements.
inline AffineMapValue probe_affine(const std::function<Vector(const PointJ1pi1&)>& map, const PointJ1& z) {
    const int m = static_cast<int>(z.x.size()), n = static_cast<int>(z.u.size());
    const BundleDims d(m, n);
    PointJ1pi1 origin = PointJ1pi1::zero(d);
    origin.x = z.x;
    origin.u = z.u;
    origin.ujet = z.ujet;
    AffineMapValue out(m, n);
    out.pbar = map(origin);
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < m; ++i) {
            PointJ1pi1 s = origin;
            s.ubar(a, i) = 1.0;
            const Vector v = map(s) - out.pbar;
            for (int k = 0; k < m; ++k) out.pbar_mom[static_cast<std::size_t>(a)](i, k) = v(k);
            for (int j = 0; j < m; ++j) {
                PointJ1pi1 t = origin;
                t.usec[static_cast<std::size_t>(a)](i, j) = 1.0;
                const Vector w = map(t) - out.pbar;
                for (int k = 0; k < m; ++k) out.jet(a, i, j, k) = w(k);
            }
        }
    return out;
}

/// The affine map as sum_k omega_k (x) dx^k with omega_k an m-form on J1 pi,
/// sent to Lambda^{m+1}_2 J1 pi by omega (x) alpha -> -alpha ^ omega, then
/// read off on (d/du^a, d/dx^1..d/dx^m) and (d/du^a_i, d/dx^1..).
inline FormLambdaJ1 wedge_project(const AffineMapValue& v, const PointJ1& z) {
    const int m = v.m, n = v.n;
    const BundleDims d(m, n);
    const int dim = d.dim_j1();
    KForm total(dim, m + 1);
    for (int k = 0; k < m; ++k) {
        KForm wk = v.pbar(k) * volume_form(dim, m);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < m; ++i) {
                wk += v.pbar_mom[static_cast<std::size_t>(a)](i, k) * wedge(KForm::basis(dim, {d.iu(a)}), volume_minus(dim, m, i));
                for (int j = 0; j < m; ++j)
                    wk += v.jet(a, i, j, k) * wedge(KForm::basis(dim, {d.j1_ujet(a, i)}), volume_minus(dim, m, j));
            }
        total -= wedge(KForm::basis(dim, {k}), wk);
    }
    FormLambdaJ1 out{z, Vector(n), Matrix(n, m)};
    IndexTuple t(static_cast<std::size_t>(m + 1));
    for (int i = 0; i < m; ++i) t[static_cast<std::size_t>(i + 1)] = i;
    for (int a = 0; a < n; ++a) {
        t[0] = d.iu(a);
        out.coef_u(a) = total.coefficient(t);
        for (int i = 0; i < m; ++i) {
            t[0] = d.j1_ujet(a, i);
            out.coef_ujet(a, i) = total.coefficient(t);
        }
    }
    return out;
}

class NonSymmetricConnection : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A_pi through the connection: probe the core map to obtain the affine map,
/// then wedge-project. Never touches the closed formula.
inline FormLambdaJ1 tulczyjew_A_pipeline(const Connection& c, const PointJ1pinu& w) {
    if (!c.symmetric || c.asymmetry(w.x) > kBaseTolerance)
        throw NonSymmetricConnection("tulczyjew_A_pipeline: connection must be symmetric");
    const Christoffels g = c.eval(w.x);
    const AffineMapValue v = probe_affine([&](const PointJ1pi1& s) { return core_map(g, w, s); }, w.j1());
    return wedge_project(v, w.j1());
}

// ---------------------------------------------------------------------------
// Hamiltonian side.

/// h = dx^j (x) (d/dx^j + u^a_j d/du^a + p_j d/dp + p^i_{a j} d/dp^i_a) on T M pi.
inline Matrix horizontal_projector(const PointJ1pinu& w) {
    const BundleDims d = w.dims();
    const int dim = d.dim_mpi();
    Matrix h = Matrix::Zero(dim, dim);
    for (int j = 0; j < d.m; ++j) {
        h(d.ix(j), j) = 1.0;
        for (int a = 0; a < d.n; ++a) {
            h(d.iu(a), j) = w.ujet(a, j);
            for (int i = 0; i < d.m; ++i) h(d.ipmom(a, i), j) = w.pmomjet[static_cast<std::size_t>(a)](i, j);
        }
        h(d.ip(), j) = w.pjet(j);
    }
    return h;
}

/// Coordinate formula: (trace p^j_{a j}, -1, -u^a_j).
inline FormLambdaMpi flat_omega(const PointJ1pinu& w) {
    const int n = static_cast<int>(w.u.size());
    FormLambdaMpi out{w.mpi(), Vector(n), -1.0, -w.ujet};
    for (int a = 0; a < n; ++a) out.coef_u(a) = w.pmomjet[static_cast<std::size_t>(a)].trace();
    return out;
}

/// i_h Omega - (m-1) Omega with i_h the slot-sum derivation.
inline KForm flat_omega_form(const PointJ1pinu& w) {
    const BundleDims d = w.dims();
    const KForm omega = canonical_omega(d);
    return derivation(horizontal_projector(w), omega) - static_cast<double>(d.m - 1) * omega;
}

/// Reads the Lambda^{m+1}_2 M pi coefficients of an (m+1)-form on M pi by
/// evaluation on (v, d/dx^1, .., d/dx^m).
inline FormLambdaMpi read_lambda_mpi(const KForm& f, const PointMpi& base) {
    const int m = static_cast<int>(base.x.size()), n = static_cast<int>(base.u.size());
    const BundleDims d(m, n);
    const int dim = d.dim_mpi();
    auto coeff = [&](int idx) {
        std::vector<Vector> vs;
        Vector e = Vector::Zero(dim);
        e(idx) = 1.0;
        vs.push_back(e);
        for (int i = 0; i < m; ++i) {
            Vector ex = Vector::Zero(dim);
            ex(i) = 1.0;
            vs.push_back(ex);
        }
        return f.evaluate(vs);
    };
    FormLambdaMpi out{base, Vector(n), coeff(d.ip()), Matrix(n, m)};
    for (int a = 0; a < n; ++a) {
        out.coef_u(a) = coeff(d.iu(a));
        for (int i = 0; i < m; ++i) out.coef_pmom(a, i) = coeff(d.ipmom(a, i));
    }
    return out;
}

inline FormLambdaMpi flat_omega_intrinsic(const PointJ1pinu& w) { return read_lambda_mpi(flat_omega_form(w), w.mpi()); }

/// Rebuilds the (m+1)-form on M pi from its Lambda^{m+1}_2 coefficients.
inline KForm lambda_mpi_form(const FormLambdaMpi& f) {
    const BundleDims d(static_cast<int>(f.base.x.size()), static_cast<int>(f.base.u.size()));
    const int dim = d.dim_mpi();
    const KForm vol = volume_form(dim, d.m);
    KForm out = f.coef_p * wedge(KForm::basis(dim, {d.ip()}), vol);
    for (int a = 0; a < d.n; ++a) {
        out += f.coef_u(a) * wedge(KForm::basis(dim, {d.iu(a)}), vol);
        for (int i = 0; i < d.m; ++i) out += f.coef_pmom(a, i) * wedge(KForm::basis(dim, {d.ipmom(a, i)}), vol);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Omega-tilde.

/// -dp^i_{a i} ^ du^a ^ d^m x - dp^i_a ^ du^a_i ^ d^m x (point independent; cached per (m, n)).
inline const KForm& omega_tilde(const BundleDims& d) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, KForm> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({d.m, d.n});
    if (it != cache.end()) return it->second;
    const int dim = d.dim_j1pinu();
    const KForm vol = volume_form(dim, d.m);
    KForm f(dim, d.m + 2);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) {
            f -= wedge(KForm::basis(dim, {d.ipmomjet(a, i, i), d.iu(a)}), vol);
            f -= wedge(KForm::basis(dim, {d.ipmom(a, i), d.iujet(a, i)}), vol);
        }
    return cache.emplace(std::make_pair(d.m, d.n), std::move(f)).first->second;
}

inline const KForm& omega_tilde(const PointJ1pinu& w) { return omega_tilde(w.dims()); }

inline Subspace omega_tilde_kernel(const BundleDims& d) { return flat_kernel(omega_tilde(d)); }

/// d/dp, d/dp_j, d/dp^i_{a j} - delta^i_j d/dp^1_{a 1} (the (1,1) member omitted).
inline std::vector<Vector> omega_tilde_kernel_generators(const BundleDims& d) {
    const int dim = d.dim_j1pinu();
    std::vector<Vector> out;
    auto e = [&](int i) {
        Vector v = Vector::Zero(dim);
        v(i) = 1.0;
        return v;
    };
    out.push_back(e(d.ip()));
    for (int j = 0; j < d.m; ++j) out.push_back(e(d.ipjet(j)));
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i)
            for (int j = 0; j < d.m; ++j) {
                if (i == 0 && j == 0) continue;
                Vector v = e(d.ipmomjet(a, i, j));
                if (i == j) v(d.ipmomjet(a, 0, 0)) -= 1.0;
                out.push_back(v);
            }
    return out;
}

/// Jacobian of f at z by central differences with step h (exact up to
/// rounding for maps that are affine in the perturbed coordinates).
inline Matrix jacobian_fd(const std::function<Vector(const Vector&)>& f, const Vector& z, double h = 1.0) {
    const Vector f0 = f(z);
    Matrix j(f0.size(), z.size());
    for (Eigen::Index c = 0; c < z.size(); ++c) {
        Vector zp = z, zm = z;
        zp(c) += h;
        zm(c) -= h;
        j.col(c) = (f(zp) - f(zm)) / (2.0 * h);
    }
    return j;
}

inline Matrix tulczyjew_A_jacobian(const PointJ1pinu& w) {
    const BundleDims d = w.dims();
    return jacobian_fd([d](const Vector& v) { return tulczyjew_A(PointJ1pinu::from_vector(d, v)).to_vector(); }, w.to_vector());
}

inline Matrix flat_omega_jacobian(const PointJ1pinu& w) {
    const BundleDims d = w.dims();
    return jacobian_fd([d](const Vector& v) { return flat_omega(PointJ1pinu::from_vector(d, v)).to_vector(); }, w.to_vector());
}

/// (A_pi)^* Omega_{Lambda J1} at w.
inline KForm omega_tilde_via_A(const PointJ1pinu& w) {
    return pullback(tulczyjew_A_jacobian(w), canonical_omega_on(LambdaSpace::J1, w.dims()));
}

/// (flat_Omega)^* Omega_{Lambda M pi} at w.
inline KForm omega_tilde_via_flat(const PointJ1pinu& w) {
    return pullback(flat_omega_jacobian(w), canonical_omega_on(LambdaSpace::Mpi, w.dims()));
}

} // namespace jettriple
