#pragma once

/**
 * @file verify.hpp
 * @brief Sampled pass/fail checks over a problem description: exchange map,
 *        Tulczyjew morphisms, Omega-tilde, Legendre transform, S_L and S_H,
 *        field-equation residuals.
 */

#include "jettriple/dynamics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <thread>

namespace jettriple {

class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Tolerances {
    double eq = 1e-10;   ///< identities
    double pde = 1e-9;   ///< residuals
    double rank = 1e-8;  ///< relative rank (Hessian regularity)
};

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

/// Per-coordinate sampling intervals keyed by variable name.
struct SamplingBox {
    Interval fallback;
    std::map<std::string, Interval> per_variable;

    const Interval& interval(const std::string& var) const {
        auto it = per_variable.find(var);
        return it == per_variable.end() ? fallback : it->second;
    }

    void validate() const {
        auto check = [](const std::string& what, const Interval& iv) {
            if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi))
                throw ConfigurationError("box: interval for " + what + " must be finite with lo < hi");
        };
        check("default", fallback);
        for (const auto& [k, v] : per_variable) check(k, v);
    }
};

struct ChartChangeSource {
    std::vector<std::string> y;        ///< m expressions over x
    std::vector<std::string> v;        ///< n expressions over x, u
    std::vector<std::string> inverse;  ///< optional, m expressions over y
};

/// Names of the deliberately wrong computation variants usable as negative controls.
inline const std::set<std::string>& known_faults() {
    static const std::set<std::string> names = {
        "derivation_no_correction", // flat map without the -(m-1) Omega term
        "drop_generator",           // first U^i_a generator removed from T S_L and T S_H
        "el_sign_flip",             // dL/du + d/dx^i dL/du_i
        "exchange_modugno_sign",    // Christoffel term subtracted in ex
        "exchange_no_transpose",    // second-order block not transposed in ex
        "legendre_energy_sign",     // p = L + u_i dL/du_i
        "omega_tilde_no_trace",     // dp^i_{a i} ^ du^a term dropped from Omega-tilde
        "pipeline_skip_phi",        // A_pi pipeline without Phi^nabla
        "pipeline_wedge_sign",      // A_pi pipeline with +alpha ^ omega
        "torsion_sign",             // T = Gamma_ij - Gamma_ji
    };
    return names;
}

struct ProblemSpec {
    std::string name;
    BundleDims dims;
    std::optional<std::string> lagrangian;
    std::optional<std::string> hamiltonian;
    bool connection_symmetric = true;
    std::map<std::array<int, 3>, std::string> gamma;  ///< 0-based (k, i, j) -> Gamma^k_ij
    std::map<std::string, std::vector<std::string>> sections;
    SamplingBox box;
    int samples = 20;
    std::uint64_t seed = 0;
    Tolerances tol;
    std::vector<std::string> faults;
    std::optional<ChartChangeSource> chart_change;
    int threads = 0;  ///< 0: hardware concurrency

    bool has_fault(const std::string& f) const { return std::find(faults.begin(), faults.end(), f) != faults.end(); }
};

enum class CheckStatus { Pass, Fail, Skipped, Error };

inline const char* to_string(CheckStatus s) {
    switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Skipped: return "skipped";
    case CheckStatus::Error: return "error";
    }
    return "?";
}

struct CheckReport {
    std::string name;
    CheckStatus status = CheckStatus::Skipped;
    double violation = 0.0;
    double tolerance = 0.0;
    std::string location;
    double seconds = 0.0;
    std::string detail;
};

/// Name of the report entry that carries configuration errors.
inline constexpr const char* kConfigurationCheck = "configuration";

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Sampling.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform in [0, 1) from the top 53 bits of one draw.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace detail

/// Seed of point `index` in `stream`; each point gets its own generator so
/// results do not depend on evaluation order.
inline std::uint64_t point_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
    return detail::splitmix64(detail::splitmix64(seed ^ detail::fnv1a(stream)) + index);
}

inline std::vector<Vector> sample(const SamplingBox& box, const std::vector<std::string>& vars, int count, std::uint64_t seed,
                                  std::string_view stream = {}) {
    if (count < 1) throw std::invalid_argument("sample: count must be at least 1");
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        std::mt19937_64 rng(point_seed(seed, stream, static_cast<std::uint64_t>(k)));
        Vector v(static_cast<Eigen::Index>(vars.size()));
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const Interval& iv = box.interval(vars[i]);
            v(static_cast<Eigen::Index>(i)) = iv.lo + (iv.hi - iv.lo) * detail::unit_uniform(rng);
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Points of J1(pi o nu) drawn from the problem's box.
inline std::vector<Vector> sample(const ProblemSpec& spec, int count, std::uint64_t seed) {
    return sample(spec.box, j1pinu_vars(spec.dims), count, seed);
}

// ---------------------------------------------------------------------------
// Lagrangian-submanifold test.

struct SubmanifoldClassification {
    Classification classification;
    bool kernel_contained = false;
    int tangent_dim = 0;
    /// 0 when Lagrangian; otherwise at least 1 (dimension gap or missing kernel).
    double defect = 0.0;
};

/// Tangent space spanned by `generators` against Omega-tilde: kernel
/// containment, then the (m+1)-classification on the quotient by the kernel.
inline SubmanifoldClassification classify_tangent_space(const std::vector<Vector>& generators, const BundleDims& d) {
    const int dim = d.dim_j1pinu();
    Matrix gens(dim, static_cast<Eigen::Index>(generators.size()));
    for (std::size_t i = 0; i < generators.size(); ++i) {
        if (generators[i].size() != dim) throw DimensionError("classify_tangent_space: generator dimension mismatch");
        gens.col(static_cast<Eigen::Index>(i)) = generators[i];
    }
    if (linalg::rank(gens) != gens.cols()) throw DimensionError("classify_tangent_space: generators are rank-deficient");
    const Subspace w(gens);
    const KForm& omega = omega_tilde(d);
    SubmanifoldClassification out;
    out.tangent_dim = w.dim();
    out.kernel_contained = w.contains(flat_kernel(omega));
    out.classification = classify(w, omega, d.m + 1, true);
    const auto& c = out.classification;
    if (!c.l_lagrangian || !out.kernel_contained)
        out.defect = std::max(1.0, std::abs(static_cast<double>(c.orthogonal_dim - c.subspace_dim)));
    return out;
}

inline CheckReport check_lagrangian_submanifold(const std::vector<Vector>& generators, const PointJ1pinu& point, const BundleDims& d) {
    const auto t0 = std::chrono::steady_clock::now();
    const SubmanifoldClassification s = classify_tangent_space(generators, d);
    CheckReport r;
    r.name = "lagrangian_submanifold";
    r.violation = s.defect;
    r.tolerance = 0.0;
    r.status = s.defect <= r.tolerance ? CheckStatus::Pass : CheckStatus::Fail;
    r.location = "x=(";
    for (Eigen::Index i = 0; i < point.x.size(); ++i) r.location += (i ? ", " : "") + format_double(point.x(i));
    r.location += ")";
    const auto& c = s.classification;
    r.detail = "dim W/K = " + std::to_string(c.subspace_dim) + ", dim W^perp = " + std::to_string(c.orthogonal_dim) +
               (s.kernel_contained ? "" : ", kernel not contained") + (c.l_isotropic ? ", isotropic" : "") +
               (c.l_lagrangian ? ", lagrangian" : "");
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// Problem compilation.

struct CompiledProblem {
    BundleDims dims;
    std::optional<LagrangianDensity> lagrangian;
    std::shared_ptr<const Hamiltonian> hamiltonian;  ///< given explicitly
    Connection connection;
    std::vector<std::pair<std::string, SectionE>> e_sections;
    std::vector<std::pair<std::string, SectionM0>> m0_sections;
    FiberedChartChange chart;
};

namespace detail {

template <class Fn>
auto with_context(const std::string& what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigurationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigurationError(what + ": " + e.what());
    }
}

inline std::vector<Expr> parse_all(const std::vector<std::string>& srcs, const std::string& what) {
    std::vector<Expr> out;
    for (std::size_t i = 0; i < srcs.size(); ++i)
        out.push_back(with_context(what + "[" + std::to_string(i) + "]", [&] { return parse(srcs[i]); }));
    return out;
}

/// y1 = x1 + 0.1 x2^2 (x1^2 when m = 1), other y_i = x_i; v = u (1 + 0.1 x1).
inline FiberedChartChange default_chart(const BundleDims& d) {
    std::vector<Expr> ys, vs;
    const Expr x1 = Expr::variable(x_name(0));
    const Expr bend = Expr::variable(x_name(d.m >= 2 ? 1 : 0));
    ys.push_back(x1 + 0.1 * pow(bend, 2));
    for (int i = 1; i < d.m; ++i) ys.push_back(Expr::variable(x_name(i)));
    for (int a = 0; a < d.n; ++a) vs.push_back(Expr::variable(u_name(a)) * (Expr::number(1.0) + 0.1 * x1));
    return FiberedChartChange(d, ys, vs);
}

} // namespace detail

inline CompiledProblem compile(const ProblemSpec& spec) {
    const BundleDims d = detail::with_context("dimensions", [&] { return BundleDims(spec.dims.m, spec.dims.n); });
    if (spec.samples < 1) throw ConfigurationError("samples must be at least 1");
    spec.box.validate();
    if (!(spec.tol.eq > 0) || !(spec.tol.pde > 0) || !(spec.tol.rank > 0)) throw ConfigurationError("tolerances must be positive");
    if (!spec.lagrangian && !spec.hamiltonian) throw ConfigurationError("at least one of lagrangian and hamiltonian is required");
    for (const auto& f : spec.faults)
        if (!known_faults().count(f)) throw ConfigurationError("unknown fault '" + f + "'");

    CompiledProblem p{d, std::nullopt, nullptr, Connection(d.m, spec.connection_symmetric), {}, {}, detail::default_chart(d)};
    if (spec.lagrangian)
        p.lagrangian = detail::with_context("lagrangian", [&] { return LagrangianDensity(d, *spec.lagrangian); });
    if (spec.hamiltonian)
        p.hamiltonian = detail::with_context("hamiltonian", [&] { return std::make_shared<const HamiltonianDensity>(d, *spec.hamiltonian); });
    for (const auto& [idx, src] : spec.gamma) {
        const std::string what = "connection.gamma[" + std::to_string(idx[0] + 1) + "," + std::to_string(idx[1] + 1) + "," +
                                 std::to_string(idx[2] + 1) + "]";
        detail::with_context(what, [&] { p.connection.gamma.set(idx[0], idx[1], idx[2], parse(src)); return 0; });
    }
    for (const auto& [name, srcs] : spec.sections) {
        const std::string what = "sections." + name;
        const auto exprs = detail::parse_all(srcs, what);
        const int size = static_cast<int>(exprs.size());
        if (size == d.n)
            p.e_sections.emplace_back(name, detail::with_context(what, [&] { return SectionE(d, exprs); }));
        else if (size == d.n + d.nm())
            p.m0_sections.emplace_back(name, detail::with_context(what, [&] { return SectionM0::from_exprs(d, exprs); }));
        else
            throw ConfigurationError(what + ": expected " + std::to_string(d.n) + " (section of E) or " + std::to_string(d.n + d.nm()) +
                                     " (section of M0) components, got " + std::to_string(size));
    }
    if (spec.chart_change) {
        const auto& c = *spec.chart_change;
        const auto ys = detail::parse_all(c.y, "chart_change.y");
        const auto vs = detail::parse_all(c.v, "chart_change.v");
        std::optional<std::vector<Expr>> inv;
        if (!c.inverse.empty()) inv = detail::parse_all(c.inverse, "chart_change.inverse");
        p.chart = detail::with_context("chart_change", [&] { return FiberedChartChange(d, ys, vs, inv); });
    }
    return p;
}

// ---------------------------------------------------------------------------
// Checks.

namespace detail {

struct PointOutcome {
    double violation = 0.0;
    std::string error;
};

/// Evaluates fn(k) for k < count on up to `threads` workers; outcomes are
/// stored by index so the merge is independent of scheduling.
template <class Fn>
std::vector<PointOutcome> run_indexed(int count, int threads, Fn&& fn) {
    std::vector<PointOutcome> out(static_cast<std::size_t>(count));
    auto work = [&](int k) {
        auto& o = out[static_cast<std::size_t>(k)];
        try {
            o.violation = fn(k);
            if (std::isnan(o.violation)) o.violation = std::numeric_limits<double>::infinity();
        } catch (const std::exception& e) {
            o.violation = std::numeric_limits<double>::infinity();
            o.error = e.what();
        }
    };
    if (threads <= 1 || count < 2) {
        for (int k = 0; k < count; ++k) work(k);
        return out;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, count); ++t)
        pool.emplace_back([&] {
            for (int k = next++; k < count; k = next++) work(k);
        });
    for (auto& th : pool) th.join();
    return out;
}

inline std::string describe_x(const Vector& x) {
    std::string s = "x=(";
    for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + format_double(x(i));
    return s + ")";
}

/// Worst case over the outcomes (first index wins ties); any point error fails the check.
inline CheckReport merge(std::string name, double tol, const std::vector<PointOutcome>& outcomes,
                         const std::function<std::string(int)>& describe) {
    CheckReport r;
    r.name = std::move(name);
    r.tolerance = tol;
    int worst = -1;
    for (std::size_t k = 0; k < outcomes.size(); ++k)
        if (worst < 0 || outcomes[k].violation > outcomes[static_cast<std::size_t>(worst)].violation) worst = static_cast<int>(k);
    if (worst < 0) {
        r.status = CheckStatus::Skipped;
        r.detail = "no points";
        return r;
    }
    const auto& w = outcomes[static_cast<std::size_t>(worst)];
    r.violation = w.violation;
    r.location = describe(worst);
    if (!w.error.empty()) r.detail = w.error;
    r.status = r.violation <= tol ? CheckStatus::Pass : CheckStatus::Fail;
    return r;
}

inline CheckReport skipped(std::string name, std::string why) {
    CheckReport r;
    r.name = std::move(name);
    r.status = CheckStatus::Skipped;
    r.detail = std::move(why);
    return r;
}

inline double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Fault variants. Each reproduces one library computation with a known error.

inline PointJ1pi1 exchange_variant(const ProblemSpec& spec, const Christoffels& g, const PointJ1pi1& z) {
    const bool no_transpose = spec.has_fault("exchange_no_transpose");
    const bool modugno = spec.has_fault("exchange_modugno_sign");
    if (!no_transpose && !modugno) return exchange(g, z);
    const int m = static_cast<int>(z.x.size()), n = static_cast<int>(z.u.size());
    PointJ1pi1 out{z.x, z.u, z.ubar, z.ujet, Tensor3(static_cast<std::size_t>(n))};
    const Matrix delta = z.ubar - z.ujet;
    const double sign = modugno ? -1.0 : 1.0;
    for (int a = 0; a < n; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        Matrix s = no_transpose ? Matrix(z.usec[ua]) : Matrix(z.usec[ua].transpose());
        for (int k = 0; k < m; ++k) {
            const auto& gk = g[static_cast<std::size_t>(k)];
            s += sign * delta(a, k) * (no_transpose ? Matrix(gk) : Matrix(gk.transpose()));
        }
        out.usec[ua] = std::move(s);
    }
    return out;
}

inline FormLambdaJ1 pipeline_variant(const ProblemSpec& spec, const Connection& c, const PointJ1pinu& w) {
    const bool skip_phi = spec.has_fault("pipeline_skip_phi");
    const bool wedge_sign = spec.has_fault("pipeline_wedge_sign");
    if (!skip_phi && !wedge_sign) return tulczyjew_A_pipeline(c, w);
    if (!c.symmetric || c.asymmetry(w.x) > kBaseTolerance) throw NonSymmetricConnection("pipeline: connection must be symmetric");
    const Christoffels g = c.eval(w.x);
    const AffineMapValue v = probe_affine(
        [&](const PointJ1pi1& s) { return skip_phi ? lifted_pairing(w, exchange(g, s)).second : core_map(g, w, s); }, w.j1());
    FormLambdaJ1 f = wedge_project(v, w.j1());
    if (wedge_sign) {
        f.coef_u = -f.coef_u;
        f.coef_ujet = -f.coef_ujet;
    }
    return f;
}

inline KForm omega_tilde_variant(const ProblemSpec& spec, const BundleDims& d) {
    if (!spec.has_fault("omega_tilde_no_trace")) return omega_tilde(d);
    const int dim = d.dim_j1pinu();
    const KForm vol = volume_form(dim, d.m);
    KForm f(dim, d.m + 2);
    for (int a = 0; a < d.n; ++a)
        for (int i = 0; i < d.m; ++i) f -= wedge(KForm::basis(dim, {d.ipmom(a, i), d.iujet(a, i)}), vol);
    return f;
}

inline Vector el_variant(const ProblemSpec& spec, const LagrangianDensity& l, const SectionE& phi, const Vector& x) {
    const Vector r = el_residual(l, phi, x);
    if (!spec.has_fault("el_sign_flip")) return r;
    // dL/du + D_i dL/du_i = 2 dL/du - (dL/du - D_i dL/du_i).
    const BundleDims& d = l.dims();
    const Jet2Scalar j = l.eval2(prolong1(phi, x));
    Vector out(d.n);
    for (int a = 0; a < d.n; ++a) out(a) = 2.0 * j.grad(d.iu(a)) - r(a);
    return out;
}

inline std::vector<Vector> drop_generator_variant(const ProblemSpec& spec, std::vector<Vector> gens) {
    if (spec.has_fault("drop_generator")) {
        const BundleDims& d = spec.dims;
        gens.erase(gens.begin() + d.m + d.n);
    }
    return gens;
}

/// Shared state of one full_suite run.
struct SuiteContext {
    const ProblemSpec& spec;
    const CompiledProblem& prob;
    int threads = 1;
    bool lagrangian_regular = false;
    std::string regularity_note;

    /// The Hamiltonian of the problem: given, else induced by a regular L; a
    /// fresh copy per call so concurrent points share no memo.
    std::unique_ptr<Hamiltonian> hamiltonian() const {
        if (prob.hamiltonian) return prob.hamiltonian->fork();
        if (prob.lagrangian && lagrangian_regular) return std::make_unique<InducedHamiltonian>(*prob.lagrangian);
        return nullptr;
    }
    bool has_hamiltonian() const { return prob.hamiltonian || (prob.lagrangian && lagrangian_regular); }

    std::vector<Vector> points(const std::vector<std::string>& vars, std::string_view stream) const {
        return sample(spec.box, vars, spec.samples, spec.seed, stream);
    }

    CheckReport over_points(const std::string& name, double tol, const std::vector<std::string>& vars,
                            const std::function<double(const Vector&)>& fn) const {
        const auto pts = points(vars, name);
        const int mm = spec.dims.m;
        const auto outcomes = run_indexed(static_cast<int>(pts.size()), threads, [&](int k) { return fn(pts[static_cast<std::size_t>(k)]); });
        return merge(name, tol, outcomes, [&](int k) {
            return "sample " + std::to_string(k) + " " + describe_x(pts[static_cast<std::size_t>(k)].head(mm));
        });
    }

    /// fn(section index, x) over every (section, sample) pair.
    template <class Sections>
    CheckReport over_sections(const std::string& name, double tol, const Sections& sections,
                              const std::function<double(std::size_t, const Vector&)>& fn) const {
        const auto pts = points(base_vars(spec.dims), name);
        const int total = static_cast<int>(sections.size() * pts.size());
        const auto outcomes = run_indexed(total, threads, [&](int k) {
            const auto s = static_cast<std::size_t>(k) / pts.size(), q = static_cast<std::size_t>(k) % pts.size();
            return fn(s, pts[q]);
        });
        return merge(name, tol, outcomes, [&](int k) {
            const auto s = static_cast<std::size_t>(k) / pts.size(), q = static_cast<std::size_t>(k) % pts.size();
            return "section " + sections[s].first + " sample " + std::to_string(q) + " " + describe_x(pts[q]);
        });
    }
};

inline PointJ1pinu pinu_point(const BundleDims& d, const Vector& v) { return PointJ1pinu::from_vector(d, v); }

// Individual checks, one function per report entry.

inline CheckReport check_exchange_involution(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    return c.over_points("exchange_involution", c.spec.tol.eq, j1pi1_vars(d), [&](const Vector& v) {
        const PointJ1pi1 z = PointJ1pi1::from_vector(d, v);
        const Christoffels g = c.prob.connection.eval(z.x);
        return max_abs_diff(exchange_variant(c.spec, g, exchange_variant(c.spec, g, z)), z);
    });
}

inline CheckReport check_exchange_torsion_inverse(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    const bool wrong_sign = c.spec.has_fault("torsion_sign");
    const Connection twisted = add_torsion(c.prob.connection);
    return c.over_points("exchange_torsion_inverse", c.spec.tol.eq, j1pi1_vars(d), [&](const Vector& v) {
        const PointJ1pi1 z = PointJ1pi1::from_vector(d, v);
        const Christoffels g = c.prob.connection.eval(z.x);
        Christoffels gt = twisted.eval(z.x);
        if (wrong_sign)
            for (std::size_t k = 0; k < g.size(); ++k) gt[k] = 2.0 * g[k] - g[k].transpose();
        return max_abs_diff(exchange_variant(c.spec, gt, exchange_variant(c.spec, g, z)), z);
    });
}

inline CheckReport check_chart_equivariance(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    return c.over_points("chart_equivariance", c.spec.tol.pde, j1pi1_vars(d), [&](const Vector& v) {
        const PointJ1pi1 z = PointJ1pi1::from_vector(d, v);
        const Christoffels g = c.prob.connection.eval(z.x);
        // Around the square: change chart after ex, and ex in the new chart.
        const PointJ1pi1 lhs = change_chart_j1pi1(c.prob.chart, c.prob.connection, exchange_variant(c.spec, g, z)).point;
        const ChartChangeResult moved = change_chart_j1pi1(c.prob.chart, c.prob.connection, z);
        const PointJ1pi1 rhs = exchange_variant(c.spec, moved.gamma, moved.point);
        return max_abs_diff(lhs, rhs);
    });
}

inline CheckReport check_connection_symmetry_flag(const SuiteContext& c) {
    const std::string name = "connection_symmetry_flag";
    if (!c.prob.connection.symmetric) {
        CheckReport r;
        r.name = name;
        r.status = CheckStatus::Pass;
        r.tolerance = c.spec.tol.eq;
        r.detail = "declared non-symmetric; nothing to verify";
        return r;
    }
    return c.over_points(name, c.spec.tol.eq, base_vars(c.spec.dims), [&](const Vector& x) { return c.prob.connection.asymmetry(x); });
}

/// Random symmetric connection with Christoffels of degree at most 2.
inline Connection random_symmetric_connection(int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto coef = [&] { return 2.0 * unit_uniform(rng) - 1.0; };
    Connection conn(m, true);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                Expr e = Expr::number(coef());
                for (int a = 0; a < m; ++a) {
                    const Expr xa = Expr::variable(x_name(a));
                    e = e + coef() * xa;
                    for (int b = a; b < m; ++b) e = e + (0.5 * coef()) * (xa * Expr::variable(x_name(b)));
                }
                conn.gamma.set(k, i, j, e);
                if (i != j) conn.gamma.set(k, j, i, e);
            }
    return conn;
}

inline CheckReport check_connection_independence(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    const Connection c1 = random_symmetric_connection(d.m, point_seed(c.spec.seed, "connection", 1));
    const Connection c2 = random_symmetric_connection(d.m, point_seed(c.spec.seed, "connection", 2));
    return c.over_points("a_pi_connection_independence", c.spec.tol.eq, j1pinu_vars(d), [&](const Vector& v) {
        const PointJ1pinu w = pinu_point(d, v);
        const FormLambdaJ1 direct = tulczyjew_A(w);
        const FormLambdaJ1 a1 = pipeline_variant(c.spec, c1, w);
        const FormLambdaJ1 a2 = pipeline_variant(c.spec, c2, w);
        return std::max({a1.fiber_diff(a2), a1.fiber_diff(direct), a2.fiber_diff(direct)});
    });
}

inline CheckReport check_pipeline_equals_direct(const SuiteContext& c) {
    const std::string name = "a_pi_pipeline_equals_direct";
    if (!c.prob.connection.symmetric) return skipped(name, "connection declared non-symmetric; the pipeline needs a symmetric one");
    const auto& d = c.spec.dims;
    return c.over_points(name, c.spec.tol.eq, j1pinu_vars(d), [&](const Vector& v) {
        const PointJ1pinu w = pinu_point(d, v);
        return pipeline_variant(c.spec, c.prob.connection, w).fiber_diff(tulczyjew_A(w));
    });
}

inline CheckReport check_flat_omega_dual_path(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    const bool no_correction = c.spec.has_fault("derivation_no_correction");
    return c.over_points("flat_omega_dual_path", c.spec.tol.eq, j1pinu_vars(d), [&](const Vector& v) {
        const PointJ1pinu w = pinu_point(d, v);
        const FormLambdaMpi intrinsic = no_correction ? read_lambda_mpi(derivation(horizontal_projector(w), canonical_omega(d)), w.mpi())
                                                      : flat_omega_intrinsic(w);
        return flat_omega(w).fiber_diff(intrinsic);
    });
}

inline CheckReport check_pullback_identities(const SuiteContext& c) {
    const auto& d = c.spec.dims;
    const KForm target = omega_tilde_variant(c.spec, d);
    return c.over_points("pullback_identities_omega_tilde", c.spec.tol.eq, j1pinu_vars(d), [&](const Vector& v) {
        const PointJ1pinu w = pinu_point(d, v);
        return std::max((omega_tilde_via_A(w) - target).max_abs_coefficient(), (omega_tilde_via_flat(w) - target).max_abs_coefficient());
    });
}

inline CheckReport check_kernel_dimension(const SuiteContext& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& d = c.spec.dims;
    const Subspace kernel = flat_kernel(omega_tilde_variant(c.spec, d));
    const int expected = 1 + d.m + d.n * (d.m * d.m - 1);
    const Subspace listed = Subspace::from_vectors(omega_tilde_kernel_generators(d), d.dim_j1pinu());
    const bool spans = kernel.contains(listed) && listed.contains(kernel);
    CheckReport r;
    r.name = "kernel_dimension";
    r.tolerance = 0.0;
    r.violation = std::abs(static_cast<double>(kernel.dim() - expected)) + (spans ? 0.0 : 1.0);
    r.status = r.violation <= r.tolerance ? CheckStatus::Pass : CheckStatus::Fail;
    r.detail = "dim ker = " + std::to_string(kernel.dim()) + ", expected " + std::to_string(expected) +
               (spans ? "" : ", listed generators do not span the kernel");
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline CheckReport check_legendre_pullback(const SuiteContext& c) {
    const std::string name = "legendre_pullback_theta";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    const auto& d = c.spec.dims;
    const auto& l = *c.prob.lagrangian;
    const bool energy_sign = c.spec.has_fault("legendre_energy_sign");
    return c.over_points(name, c.spec.tol.eq, j1_vars(d), [&](const Vector& v) {
        const PointJ1 z = PointJ1::from_vector(d, v);
        PointMpi image = legendre_ext(l, z);
        // Theta has no dp component, so only the value of p enters the pullback.
        if (energy_sign) image.p += 2.0 * (image.pmom.array() * z.ujet.array()).sum();
        const KForm pulled = pullback(legendre_ext_jacobian(l, z), canonical_theta(image));
        return (pulled - pc_theta(l, z)).max_abs_coefficient();
    });
}

inline CheckReport check_sl_lagrangian(const SuiteContext& c) {
    const std::string name = "s_l_lagrangian_submanifold";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    const auto& d = c.spec.dims;
    const auto& l = *c.prob.lagrangian;
    return c.over_points(name, 0.0, j1pinu_vars(d), [&](const Vector& v) {
        const PointJ1pinu w = project_to_sl(l, pinu_point(d, v));
        return classify_tangent_space(drop_generator_variant(c.spec, sl_tangent_basis(l, w)), d).defect;
    });
}

inline CheckReport check_sh_lagrangian(const SuiteContext& c) {
    const std::string name = "s_h_lagrangian_submanifold";
    if (!c.has_hamiltonian()) return skipped(name, "no Hamiltonian; " + c.regularity_note);
    const auto& d = c.spec.dims;
    return c.over_points(name, 0.0, j1pinu_vars(d), [&](const Vector& v) {
        const auto h = c.hamiltonian();
        const PointJ1pinu w = project_to_sh(*h, pinu_point(d, v));
        return classify_tangent_space(drop_generator_variant(c.spec, sh_tangent_basis(*h, w)), d).defect;
    });
}

inline CheckReport check_sl_equals_sh(const SuiteContext& c) {
    const std::string name = "s_l_equals_s_h";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    if (!c.lagrangian_regular) return skipped(name, c.regularity_note);
    const auto& d = c.spec.dims;
    const auto& l = *c.prob.lagrangian;
    return c.over_points(name, c.spec.tol.pde, j1pinu_vars(d), [&](const Vector& v) {
        const auto h = c.hamiltonian();
        const PointJ1pinu z = pinu_point(d, v);
        const double a = inf_norm(sh_defining(*h, project_to_sl(l, z)));
        const double b = inf_norm(sl_defining(l, project_to_sh(*h, z)));
        return std::max(a, b);
    });
}

inline CheckReport check_el_residual(const SuiteContext& c) {
    const std::string name = "el_residual";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    if (c.prob.e_sections.empty()) return skipped(name, "no sections of E");
    const auto& l = *c.prob.lagrangian;
    return c.over_sections(name, c.spec.tol.pde, c.prob.e_sections, [&](std::size_t s, const Vector& x) {
        return inf_norm(el_variant(c.spec, l, c.prob.e_sections[s].second, x));
    });
}

inline CheckReport check_hdw_transported(const SuiteContext& c) {
    const std::string name = "hdw_residual_transported";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    if (c.prob.e_sections.empty()) return skipped(name, "no sections of E");
    if (!c.has_hamiltonian()) return skipped(name, "no Hamiltonian; " + c.regularity_note);
    const auto& l = *c.prob.lagrangian;
    return c.over_sections(name, c.spec.tol.pde, c.prob.e_sections, [&](std::size_t s, const Vector& x) {
        const auto h = c.hamiltonian();
        return inf_norm(hdw_residual(*h, legendre_section(l, c.prob.e_sections[s].second), x));
    });
}

inline CheckReport check_jet_equivalence(const SuiteContext& c) {
    const std::string name = "jet_equivalence_residual";
    if (!c.prob.lagrangian) return skipped(name, "no Lagrangian");
    if (c.prob.e_sections.empty()) return skipped(name, "no sections of E");
    const auto& l = *c.prob.lagrangian;
    return c.over_sections(name, c.spec.tol.pde, c.prob.e_sections, [&](std::size_t s, const Vector& x) {
        const FormLambdaJ1 r = jet_equivalence_residual(l, c.prob.e_sections[s].second, x);
        return std::max(inf_norm(r.coef_u), r.coef_ujet.size() ? r.coef_ujet.lpNorm<Eigen::Infinity>() : 0.0);
    });
}

inline CheckReport check_hdw_jet(const SuiteContext& c) {
    const std::string name = "hdw_jet_residual";
    if (!c.has_hamiltonian()) return skipped(name, "no Hamiltonian; " + c.regularity_note);
    // Given sections of M0 pi, then the Legendre transports of sections of E.
    std::vector<std::pair<std::string, SectionM0>> taus = c.prob.m0_sections;
    if (c.prob.lagrangian)
        for (const auto& [n, phi] : c.prob.e_sections) taus.emplace_back("leg(" + n + ")", legendre_section(*c.prob.lagrangian, phi));
    if (taus.empty()) return skipped(name, "no sections");
    return c.over_sections(name, c.spec.tol.pde, taus, [&](std::size_t s, const Vector& x) {
        const auto h = c.hamiltonian();
        const FormLambdaMpi r = hdw_jet_residual(*h, taus[s].second, x);
        return std::max({inf_norm(r.coef_u), std::abs(r.coef_p), r.coef_pmom.lpNorm<Eigen::Infinity>()});
    });
}

/// m = 1: EL residuals, the induced H against the given one, and Hamilton's
/// equations along transported sections.
inline CheckReport check_mechanics(const SuiteContext& c) {
    const std::string name = "mechanics_degeneration";
    const auto& d = c.spec.dims;
    if (d.m != 1) return skipped(name, "base dimension is not 1");
    const bool sections = c.prob.lagrangian && !c.prob.e_sections.empty();
    const bool compare_h = c.prob.lagrangian && c.lagrangian_regular && c.prob.hamiltonian;
    if (!sections && !compare_h) return skipped(name, "needs a Lagrangian with sections or a regular Lagrangian with a Hamiltonian");
    std::vector<CheckReport> parts;
    if (sections) {
        const auto& l = *c.prob.lagrangian;
        parts.push_back(c.over_sections(name, c.spec.tol.pde, c.prob.e_sections, [&](std::size_t s, const Vector& x) {
            const SectionE& phi = c.prob.e_sections[s].second;
            double v = inf_norm(el_variant(c.spec, l, phi, x));
            if (c.has_hamiltonian()) v = std::max(v, inf_norm(hdw_residual(*c.hamiltonian(), legendre_section(l, phi), x)));
            return v;
        }));
    }
    if (compare_h) {
        const InducedHamiltonian induced(*c.prob.lagrangian);
        parts.push_back(c.over_points(name, c.spec.tol.pde, m0_vars(d), [&](const Vector& v) {
            const InducedHamiltonian mine(induced);
            PointM0pi z{v.head(d.m), v.segment(d.m, d.n), Matrix(d.n, d.m)};
            for (int a = 0; a < d.n; ++a) z.pmom(a, 0) = v(d.m + d.n + a);
            const Jet2Scalar hi = mine.eval2(z), hg = c.prob.hamiltonian->eval2(z);
            return std::max(std::abs(hi.value - hg.value), inf_norm(hi.grad - hg.grad));
        }));
    }
    CheckReport worst = parts.front();
    for (const auto& p : parts)
        if (p.violation > worst.violation) worst = p;
    return worst;
}

} // namespace detail

/// Every check on `spec`, sorted by name. Configuration problems produce a
/// single entry named "configuration" with status error.
inline std::vector<CheckReport> full_suite(const ProblemSpec& spec) {
    std::optional<CompiledProblem> prob;
    try {
        prob = compile(spec);
    } catch (const std::exception& e) {
        CheckReport r;
        r.name = kConfigurationCheck;
        r.status = CheckStatus::Error;
        r.violation = std::numeric_limits<double>::infinity();
        r.detail = e.what();
        return {r};
    }

    detail::SuiteContext ctx{spec, *prob};
    ctx.threads = spec.threads > 0 ? spec.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (prob->lagrangian) {
        ctx.lagrangian_regular = true;
        const auto pts = sample(spec.box, j1_vars(spec.dims), spec.samples, spec.seed, "regularity");
        for (std::size_t k = 0; k < pts.size() && ctx.lagrangian_regular; ++k) {
            if (!hessian_regularity(*prob->lagrangian, PointJ1::from_vector(spec.dims, pts[k]), spec.tol.rank).regular) {
                ctx.lagrangian_regular = false;
                ctx.regularity_note = "Lagrangian is not regular (velocity Hessian singular at sample " + std::to_string(k) + ")";
            }
        }
    } else {
        ctx.regularity_note = "no Lagrangian";
    }

    using CheckFn = CheckReport (*)(const detail::SuiteContext&);
    const std::vector<std::pair<const char*, CheckFn>> checks = {
        {"a_pi_connection_independence", detail::check_connection_independence},
        {"a_pi_pipeline_equals_direct", detail::check_pipeline_equals_direct},
        {"chart_equivariance", detail::check_chart_equivariance},
        {"connection_symmetry_flag", detail::check_connection_symmetry_flag},
        {"el_residual", detail::check_el_residual},
        {"exchange_involution", detail::check_exchange_involution},
        {"exchange_torsion_inverse", detail::check_exchange_torsion_inverse},
        {"flat_omega_dual_path", detail::check_flat_omega_dual_path},
        {"hdw_jet_residual", detail::check_hdw_jet},
        {"hdw_residual_transported", detail::check_hdw_transported},
        {"jet_equivalence_residual", detail::check_jet_equivalence},
        {"kernel_dimension", detail::check_kernel_dimension},
        {"legendre_pullback_theta", detail::check_legendre_pullback},
        {"mechanics_degeneration", detail::check_mechanics},
        {"pullback_identities_omega_tilde", detail::check_pullback_identities},
        {"s_h_lagrangian_submanifold", detail::check_sh_lagrangian},
        {"s_l_equals_s_h", detail::check_sl_equals_sh},
        {"s_l_lagrangian_submanifold", detail::check_sl_lagrangian},
    };
    std::vector<CheckReport> out;
    for (const auto& [name, fn] : checks) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckReport r;
        try {
            r = fn(ctx);
        } catch (const std::exception& e) {
            r.status = CheckStatus::Fail;
            r.violation = std::numeric_limits<double>::infinity();
            r.detail = e.what();
        }
        r.name = name;
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const CheckReport& a, const CheckReport& b) { return a.name < b.name; });
    return out;
}

/// 0 all pass or skipped, 1 any failure, 2 configuration error.
inline int exit_code(const std::vector<CheckReport>& reports) {
    int code = 0;
    for (const auto& r : reports) {
        if (r.status == CheckStatus::Error) return 2;
        if (r.status == CheckStatus::Fail) code = 1;
    }
    return code;
}

} // namespace jettriple
