#include "jettriple/problem_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace jettriple;
using jt_test::Gen;

namespace {

ProblemSpec dirichlet_spec() {
    ProblemSpec s;
    s.name = "dirichlet";
    s.dims = BundleDims(2, 1);
    s.lagrangian = "0.5*(u1_1^2 + u1_2^2)";
    s.hamiltonian = "0.5*(p1_1^2 + p1_2^2)";
    s.gamma[{0, 0, 1}] = "0.3*x2";
    s.gamma[{0, 1, 0}] = "0.3*x2";
    s.gamma[{1, 1, 1}] = "0.1*x1^2";
    s.sections["harmonic"] = {"x1^2 - x2^2"};
    s.sections["harmonic_m0"] = {"x1^2 - x2^2", "2*x1", "-2*x2"};
    s.samples = 8;
    s.seed = 3;
    s.threads = 1;
    return s;
}

ProblemSpec oscillator_spec() {
    ProblemSpec s;
    s.dims = BundleDims(1, 1);
    s.lagrangian = "0.5*u1_1^2 - 0.5*u1^2";
    s.hamiltonian = "0.5*p1_1^2 + 0.5*u1^2";
    s.sections["sine"] = {"sin(x1)"};
    s.box.fallback = {-3.0, 3.0};
    s.samples = 8;
    s.threads = 1;
    return s;
}

std::set<std::string> failing(const std::vector<CheckReport>& reports) {
    std::set<std::string> out;
    for (const auto& r : reports)
        if (r.status == CheckStatus::Fail || r.status == CheckStatus::Error) out.insert(r.name);
    return out;
}

const CheckReport& find(const std::vector<CheckReport>& reports, const std::string& name) {
    for (const auto& r : reports)
        if (r.name == name) return r;
    throw std::logic_error("no report " + name);
}

std::string without_time(const std::vector<CheckReport>& reports) { return reports_to_json(reports, false).dump(); }

PointJ1pinu random_pinu(Gen& g, const BundleDims& d) { return PointJ1pinu::from_vector(d, g.vector(d.dim_j1pinu())); }

} // namespace

// ---------------------------------------------------------------------------
// Sampling.

TEST(Sample, RepeatableForFixedSeed) {
    const ProblemSpec s = dirichlet_spec();
    const auto a = sample(s, 3, 42), b = sample(s, 3, 42);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Sample, CountZeroRejected) {
    EXPECT_THROW(sample(dirichlet_spec(), 0, 42), std::invalid_argument);
    EXPECT_THROW(sample(SamplingBox{}, {"x1"}, -1, 1), std::invalid_argument);
}

TEST(Sample, SeedsGiveDifferentLists) {
    const ProblemSpec s = dirichlet_spec();
    EXPECT_NE(sample(s, 3, 1)[0], sample(s, 3, 2)[0]);
}

TEST(Sample, PointDependsOnlyOnSeedStreamAndIndex) {
    const std::vector<std::string> vars = {"x1", "x2", "u1"};
    const auto few = sample(SamplingBox{}, vars, 3, 9, "s");
    const auto many = sample(SamplingBox{}, vars, 50, 9, "s");
    for (std::size_t k = 0; k < few.size(); ++k) EXPECT_EQ(few[k], many[k]);
    EXPECT_NE(sample(SamplingBox{}, vars, 1, 9, "s")[0], sample(SamplingBox{}, vars, 1, 9, "t")[0]);
}

TEST(Sample, StaysInPerVariableIntervals) {
    SamplingBox box;
    box.fallback = {-2.0, -1.0};
    box.per_variable["x2"] = {10.0, 10.5};
    const auto pts = sample(box, {"x1", "x2"}, 500, 5);
    double lo = 1e9, hi = -1e9;
    for (const auto& p : pts) {
        EXPECT_GE(p(0), -2.0);
        EXPECT_LT(p(0), -1.0);
        EXPECT_GE(p(1), 10.0);
        EXPECT_LT(p(1), 10.5);
        lo = std::min(lo, p(0));
        hi = std::max(hi, p(0));
    }
    // Uniform over the interval, not a corner of it.
    EXPECT_LT(lo, -1.9);
    EXPECT_GT(hi, -1.1);
}

TEST(FormatDouble, RoundTripsShortest) {
    Gen g(5);
    for (int t = 0; t < 2000; ++t) {
        const double v = std::ldexp(g.uniform(), g.integer(-60, 60));
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(-2.0), "-2");
}

// ---------------------------------------------------------------------------
// Lagrangian-submanifold test.

TEST(LagrangianSubmanifold, DirichletSL) {
    Gen g(1);
    const BundleDims d(2, 1);
    const LagrangianDensity l = dirichlet_lagrangian(d);
    const PointJ1pinu z = project_to_sl(l, random_pinu(g, d));
    const CheckReport r = check_lagrangian_submanifold(sl_tangent_basis(l, z), z, d);
    EXPECT_EQ(r.status, CheckStatus::Pass) << r.detail;
    EXPECT_EQ(r.violation, 0.0);
}

TEST(LagrangianSubmanifold, DirichletDualSH) {
    Gen g(2);
    const BundleDims d(2, 1);
    const HamiltonianDensity h = dirichlet_hamiltonian(d);
    const PointJ1pinu z = project_to_sh(h, random_pinu(g, d));
    EXPECT_EQ(check_lagrangian_submanifold(sh_tangent_basis(h, z), z, d).status, CheckStatus::Pass);
}

TEST(LagrangianSubmanifold, DroppedGeneratorIsIsotropicOnly) {
    Gen g(3);
    const BundleDims d(2, 1);
    const LagrangianDensity l = dirichlet_lagrangian(d);
    const PointJ1pinu z = project_to_sl(l, random_pinu(g, d));
    auto gens = sl_tangent_basis(l, z);
    gens.erase(gens.begin() + d.m + d.n);  // first U^i_a
    const SubmanifoldClassification c = classify_tangent_space(gens, d);
    EXPECT_TRUE(c.kernel_contained);
    EXPECT_TRUE(c.classification.l_isotropic);
    EXPECT_FALSE(c.classification.l_lagrangian);
    EXPECT_GT(c.classification.orthogonal_dim, c.classification.subspace_dim);
    EXPECT_EQ(check_lagrangian_submanifold(gens, z, d).status, CheckStatus::Fail);
}

TEST(LagrangianSubmanifold, RankDeficientGeneratorsRejected) {
    Gen g(4);
    const BundleDims d(2, 1);
    const LagrangianDensity l = dirichlet_lagrangian(d);
    const PointJ1pinu z = project_to_sl(l, random_pinu(g, d));
    auto gens = sl_tangent_basis(l, z);
    gens.push_back(gens[0] + 2.0 * gens[1]);
    EXPECT_THROW(check_lagrangian_submanifold(gens, z, d), DimensionError);
}

TEST(LagrangianSubmanifold, MissingKernelDirectionDetected) {
    Gen g(5);
    const BundleDims d(2, 1);
    const LagrangianDensity l = dirichlet_lagrangian(d);
    const PointJ1pinu z = project_to_sl(l, random_pinu(g, d));
    auto gens = sl_tangent_basis(l, z);
    gens.pop_back();  // a kernel generator
    const SubmanifoldClassification c = classify_tangent_space(gens, d);
    EXPECT_FALSE(c.kernel_contained);
    EXPECT_GE(c.defect, 1.0);
}

// Property: S_L of random hyper-regular quadratic Lagrangians and S_H of
// their duals are (m+1)-Lagrangian at random points.
TEST(LagrangianSubmanifold, RandomQuadraticFamilies) {
    Gen g(6);
    const std::vector<std::pair<int, int>> dims = {{1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 1}};
    for (const auto& [m, n] : dims)
        for (int t = 0; t < 3; ++t) {
            const BundleDims d(m, n);
            const Matrix a = g.matrix(d.nm(), d.nm());
            const Matrix q = a * a.transpose() + Matrix::Identity(d.nm(), d.nm());
            QuadraticLagrangianSpec s = QuadraticLagrangianSpec::from_matrix(d, q);
            s.flat0 = jt_test::random_quadratic(g, e_vars(d), 0.3);
            const LagrangianDensity l = make_quadratic_L(d, s);
            const PointJ1pinu zl = project_to_sl(l, random_pinu(g, d));
            EXPECT_EQ(classify_tangent_space(sl_tangent_basis(l, zl), d).defect, 0.0) << m << "," << n;
            const InducedHamiltonian h(l);
            const PointJ1pinu zh = project_to_sh(h, random_pinu(g, d));
            EXPECT_EQ(classify_tangent_space(sh_tangent_basis(h, zh), d).defect, 0.0) << m << "," << n;
        }
}

// ---------------------------------------------------------------------------
// Full suite.

TEST(FullSuite, DirichletPassesEverything) {
    const auto reports = full_suite(dirichlet_spec());
    ASSERT_EQ(reports.size(), 18u);
    for (const auto& r : reports) {
        if (r.name == "mechanics_degeneration") EXPECT_EQ(r.status, CheckStatus::Skipped);
        else EXPECT_EQ(r.status, CheckStatus::Pass) << r.name << ": " << r.violation << " " << r.detail;
    }
    EXPECT_EQ(exit_code(reports), 0);
}

TEST(FullSuite, OrderedByName) {
    const auto reports = full_suite(dirichlet_spec());
    for (std::size_t k = 1; k < reports.size(); ++k) EXPECT_LT(reports[k - 1].name, reports[k].name);
    const std::set<std::string> expected = {
        "a_pi_connection_independence", "a_pi_pipeline_equals_direct", "chart_equivariance", "connection_symmetry_flag",
        "el_residual", "exchange_involution", "exchange_torsion_inverse", "flat_omega_dual_path", "hdw_jet_residual",
        "hdw_residual_transported", "jet_equivalence_residual", "kernel_dimension", "legendre_pullback_theta",
        "mechanics_degeneration", "pullback_identities_omega_tilde", "s_h_lagrangian_submanifold", "s_l_equals_s_h",
        "s_l_lagrangian_submanifold"};
    std::set<std::string> names;
    for (const auto& r : reports) names.insert(r.name);
    EXPECT_EQ(names, expected);
}

TEST(FullSuite, Deterministic) {
    const ProblemSpec s = dirichlet_spec();
    EXPECT_EQ(without_time(full_suite(s)), without_time(full_suite(s)));
}

TEST(FullSuite, ParallelMatchesSerial) {
    for (ProblemSpec s : {dirichlet_spec(), oscillator_spec()}) {
        s.lagrangian = "0.5*(u1_1^2 + u1_2^2) + 0.1*u1_1^4";  // induced H needs Newton
        if (s.dims.m == 1) s.lagrangian = "0.5*u1_1^2 + 0.05*u1_1^4 - 0.5*u1^2";
        s.hamiltonian.reset();
        s.samples = 12;
        s.threads = 1;
        const std::string serial = without_time(full_suite(s));
        s.threads = 4;
        EXPECT_EQ(serial, without_time(full_suite(s)));
    }
}

TEST(FullSuite, PassIffViolationWithinTolerance) {
    std::vector<ProblemSpec> specs = {dirichlet_spec(), oscillator_spec()};
    ProblemSpec broken = dirichlet_spec();
    broken.faults = {"pipeline_wedge_sign", "el_sign_flip", "omega_tilde_no_trace"};
    specs.push_back(broken);
    for (const auto& s : specs)
        for (const auto& r : full_suite(s)) {
            if (r.status == CheckStatus::Skipped) continue;
            EXPECT_EQ(r.status == CheckStatus::Pass, r.violation <= r.tolerance) << r.name;
        }
}

TEST(FullSuite, ConfigurationErrorsBecomeOneEntry) {
    auto expect_config_error = [](const ProblemSpec& s, const std::string& fragment) {
        const auto reports = full_suite(s);
        ASSERT_EQ(reports.size(), 1u);
        EXPECT_EQ(reports[0].name, kConfigurationCheck);
        EXPECT_EQ(reports[0].status, CheckStatus::Error);
        EXPECT_NE(reports[0].detail.find(fragment), std::string::npos) << reports[0].detail;
        EXPECT_EQ(exit_code(reports), 2);
    };
    ProblemSpec s = dirichlet_spec();
    s.lagrangian = "0.5*(u1_1^2 +";
    expect_config_error(s, "lagrangian");
    s = dirichlet_spec();
    s.hamiltonian = "p^2";  // p is not a variable of H
    expect_config_error(s, "hamiltonian");
    s = dirichlet_spec();
    s.gamma[{0, 0, 0}] = "u1";  // Christoffels depend on x only
    expect_config_error(s, "connection.gamma[1,1,1]");
    s = dirichlet_spec();
    s.sections["bad"] = {"x1", "x2"};
    expect_config_error(s, "sections.bad");
    s = dirichlet_spec();
    s.samples = 0;
    expect_config_error(s, "samples");
    s = dirichlet_spec();
    s.box.fallback = {1.0, 1.0};
    expect_config_error(s, "box");
    s = dirichlet_spec();
    s.lagrangian.reset();
    s.hamiltonian.reset();
    expect_config_error(s, "lagrangian");
    s = dirichlet_spec();
    s.faults = {"no_such_fault"};
    expect_config_error(s, "no_such_fault");
}

TEST(FullSuite, AffineExampleSkipsHyperRegularChecks) {
    ProblemSpec s;
    s.dims = BundleDims(2, 1);
    s.lagrangian = "x1*u1 + u1^2*u1_1 + x2*u1_2";
    s.samples = 6;
    s.threads = 1;
    const auto reports = full_suite(s);
    EXPECT_EQ(find(reports, "s_l_lagrangian_submanifold").status, CheckStatus::Pass);
    for (const char* name : {"s_l_equals_s_h", "s_h_lagrangian_submanifold", "hdw_jet_residual"}) {
        EXPECT_EQ(find(reports, name).status, CheckStatus::Skipped) << name;
        EXPECT_NE(find(reports, name).detail.find("not regular"), std::string::npos) << name;
    }
    EXPECT_EQ(exit_code(reports), 0);
}

TEST(FullSuite, BrokenSignFailsEulerLagrange) {
    ProblemSpec s = dirichlet_spec();
    s.lagrangian = "0.5*(u1_1^2 - u1_2^2)";
    s.hamiltonian.reset();
    s.sections.erase("harmonic_m0");
    const auto reports = full_suite(s);
    EXPECT_EQ(find(reports, "el_residual").status, CheckStatus::Fail);
    EXPECT_NEAR(find(reports, "el_residual").violation, 4.0, 1e-12);
    EXPECT_EQ(exit_code(reports), 1);
}

TEST(FullSuite, TorsionFailsOnlyInvolution) {
    ProblemSpec s = dirichlet_spec();
    s.connection_symmetric = false;
    s.gamma.clear();
    s.gamma[{0, 0, 1}] = "x1";
    const auto reports = full_suite(s);
    EXPECT_EQ(failing(reports), std::set<std::string>{"exchange_involution"});
    EXPECT_GT(find(reports, "exchange_involution").violation, 1e-3);
    EXPECT_EQ(find(reports, "exchange_torsion_inverse").status, CheckStatus::Pass);
    EXPECT_EQ(find(reports, "a_pi_pipeline_equals_direct").status, CheckStatus::Skipped);
}

TEST(FullSuite, WrongDualHamiltonianFailsEquality) {
    ProblemSpec s = dirichlet_spec();
    s.hamiltonian = "0.6*p1_1^2 + 0.5*p1_2^2";
    s.sections.erase("harmonic_m0");
    const auto reports = full_suite(s);
    EXPECT_EQ(find(reports, "s_l_equals_s_h").status, CheckStatus::Fail);
    EXPECT_EQ(find(reports, "s_h_lagrangian_submanifold").status, CheckStatus::Pass);
}

TEST(FullSuite, MechanicsDegeneration) {
    const auto reports = full_suite(oscillator_spec());
    EXPECT_EQ(find(reports, "mechanics_degeneration").status, CheckStatus::Pass);
    EXPECT_LE(find(reports, "mechanics_degeneration").violation, 1e-12);
    EXPECT_EQ(exit_code(reports), 0);
    ProblemSpec wrong = oscillator_spec();
    wrong.hamiltonian = "0.5*p1_1^2 - 0.5*u1^2";
    wrong.sections.clear();
    EXPECT_EQ(find(full_suite(wrong), "mechanics_degeneration").status, CheckStatus::Fail);
}

// Every fault variant is caught by the check it targets and nothing else.
TEST(FullSuite, EachFaultIsDetected) {
    ProblemSpec torsion = dirichlet_spec();
    torsion.connection_symmetric = false;
    torsion.gamma.clear();
    torsion.gamma[{0, 0, 1}] = "x1";
    const std::map<std::string, std::pair<ProblemSpec, std::set<std::string>>> cases = {
        {"derivation_no_correction", {dirichlet_spec(), {"flat_omega_dual_path"}}},
        {"drop_generator", {dirichlet_spec(), {"s_h_lagrangian_submanifold", "s_l_lagrangian_submanifold"}}},
        {"el_sign_flip", {oscillator_spec(), {"el_residual", "mechanics_degeneration"}}},
        {"exchange_modugno_sign", {dirichlet_spec(), {"chart_equivariance"}}},
        {"exchange_no_transpose", {dirichlet_spec(), {"chart_equivariance"}}},
        {"legendre_energy_sign", {dirichlet_spec(), {"legendre_pullback_theta"}}},
        {"omega_tilde_no_trace", {dirichlet_spec(), {"kernel_dimension", "pullback_identities_omega_tilde"}}},
        {"pipeline_skip_phi", {dirichlet_spec(), {"a_pi_connection_independence", "a_pi_pipeline_equals_direct"}}},
        {"pipeline_wedge_sign", {dirichlet_spec(), {"a_pi_connection_independence", "a_pi_pipeline_equals_direct"}}},
        {"torsion_sign", {torsion, {"exchange_involution", "exchange_torsion_inverse"}}},
    };
    ASSERT_EQ(cases.size(), known_faults().size());
    for (const auto& [fault, c] : cases) {
        ProblemSpec s = c.first;
        ASSERT_EQ(failing(full_suite(s)).count("exchange_torsion_inverse"), 0u) << fault;
        s.faults = {fault};
        const auto reports = full_suite(s);
        std::set<std::string> expected = c.second;
        if (fault == "torsion_sign") expected.insert("exchange_involution");
        EXPECT_EQ(failing(reports), expected) << fault;
    }
}
