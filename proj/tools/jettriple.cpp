// Command-line front end: problem files in, reports out.

#include "jettriple/problem_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace jettriple;

namespace {

constexpr int kExitUsage = 2;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_vector(const Vector& v) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt17(v(i));
    return s + "]";
}

/// Row-major flattening of an n x m block (alpha-major, as in the variable names).
std::string fmt_matrix(const Matrix& m) {
    Vector v(m.size());
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index i = 0; i < m.cols(); ++i) v(a * m.cols() + i) = m(a, i);
    return fmt_vector(v);
}

Vector parse_point(const std::string& text, int expected, const std::string& what) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ProblemFileError("--at: '" + item + "' is not a number");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw ProblemFileError("--at: '" + item + "' is not a number");
        vals.push_back(v);
    }
    if (static_cast<int>(vals.size()) != expected)
        throw ProblemFileError("--at: expected " + std::to_string(expected) + " comma-separated values (" + what + "), got " +
                               std::to_string(vals.size()));
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// "0.1" overrides eq and pde; "eq=1e-12", "pde=...", "rank=..." override one.
void apply_tolerance(Tolerances& tol, const std::string& arg) {
    const auto eq = arg.find('=');
    const std::string key = eq == std::string::npos ? "" : arg.substr(0, eq);
    const std::string val = eq == std::string::npos ? arg : arg.substr(eq + 1);
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(val, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != val.size() || !(v > 0)) throw ProblemFileError("--tol: '" + arg + "' is not a positive number");
    if (key.empty()) tol.eq = tol.pde = v;
    else if (key == "eq") tol.eq = v;
    else if (key == "pde") tol.pde = v;
    else if (key == "rank") tol.rank = v;
    else throw ProblemFileError("--tol: unknown tolerance '" + key + "' (eq, pde, rank)");
}

struct CheckOptions {
    std::string path, json_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> samples, threads;
    std::vector<std::string> tol;
};

int cmd_check(const CheckOptions& o) {
    ProblemFile pf = load_problem_file(o.path);
    ProblemSpec& s = pf.spec;
    if (o.seed) s.seed = *o.seed;
    if (o.samples) s.samples = *o.samples;
    if (o.threads) s.threads = *o.threads;
    for (const auto& t : o.tol) apply_tolerance(s.tol, t);

    const std::vector<CheckReport> reports = full_suite(s);
    std::cout << "problem " << s.name << " (m=" << s.dims.m << ", n=" << s.dims.n << ", samples=" << s.samples << ", seed=" << s.seed
              << ")\n";
    print_table(std::cout, reports);
    const int code = exit_code(reports);
    int passed = 0, failed = 0, skipped = 0;
    for (const auto& r : reports) {
        passed += r.status == CheckStatus::Pass;
        failed += r.status == CheckStatus::Fail || r.status == CheckStatus::Error;
        skipped += r.status == CheckStatus::Skipped;
    }
    std::cout << passed << " passed, " << failed << " failed, " << skipped << " skipped\n";
    if (!o.json_path.empty()) {
        std::ofstream out(o.json_path);
        if (!out) throw ProblemFileError(o.json_path + ": cannot write report");
        out << reports_to_json(reports).dump(2) << '\n';
    }
    return code;
}

/// The problem's Hamiltonian, or the one induced by its Lagrangian.
std::unique_ptr<Hamiltonian> problem_hamiltonian(const CompiledProblem& p) {
    if (p.hamiltonian) return p.hamiltonian->fork();
    if (p.lagrangian) return std::make_unique<InducedHamiltonian>(*p.lagrangian);
    return nullptr;
}

int cmd_residual(const std::string& path, const std::string& section, const std::string& at) {
    const ProblemFile pf = load_problem_file(path);
    const CompiledProblem p = compile(pf.spec);
    const BundleDims& d = p.dims;
    const Vector x = parse_point(at, d.m, "x1..xm");
    std::cout << "section " << section << " at x = " << fmt_vector(x) << '\n';
    for (const auto& [name, phi] : p.e_sections) {
        if (name != section) continue;
        if (p.lagrangian) std::cout << "el_residual: " << fmt_vector(el_residual(*p.lagrangian, phi, x)) << '\n';
        if (p.lagrangian) {
            const auto h = problem_hamiltonian(p);
            try {
                std::cout << "hdw_residual(leg o j1 phi): " << fmt_vector(hdw_residual(*h, legendre_section(*p.lagrangian, phi), x)) << '\n';
            } catch (const std::exception& e) {
                std::cout << "hdw_residual(leg o j1 phi): unavailable (" << e.what() << ")\n";
            }
        }
        return 0;
    }
    for (const auto& [name, tau] : p.m0_sections) {
        if (name != section) continue;
        const auto h = problem_hamiltonian(p);
        std::cout << "hdw_residual: " << fmt_vector(hdw_residual(*h, tau, x)) << '\n';
        return 0;
    }
    throw ProblemFileError(path + ": no section named '" + section + "'");
}

int cmd_legendre(const std::string& path, const std::string& at) {
    const ProblemFile pf = load_problem_file(path);
    const CompiledProblem p = compile(pf.spec);
    if (!p.lagrangian) throw ProblemFileError(path + ": the legendre command needs a Lagrangian");
    const BundleDims& d = p.dims;
    const PointJ1 z = PointJ1::from_vector(d, parse_point(at, d.dim_j1(), "x, u, then u^a_i alpha-major"));
    const PointMpi ext = legendre_ext(*p.lagrangian, z);
    const PointM0pi red = legendre_red(*p.lagrangian, z);
    const Regularity reg = hessian_regularity(*p.lagrangian, z, pf.spec.tol.rank);
    std::cout << "legendre_ext: p = " << fmt17(ext.p) << ", pmom = " << fmt_matrix(ext.pmom) << '\n';
    std::cout << "legendre_red: pmom = " << fmt_matrix(red.pmom) << '\n';
    std::cout << "regularity: " << (reg.regular ? "regular" : "singular") << ", min singular value = " << fmt17(reg.min_singular_value)
              << ", max singular value = " << fmt17(reg.max_singular_value) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tulczyjew triple checks for first-order field theories"};
    app.require_subcommand(1);

    CheckOptions co;
    auto* check = app.add_subcommand("check", "run every check on a problem file");
    check->add_option("problem", co.path, "problem file (JSON)")->required();
    check->add_option("--json", co.json_path, "write the report list as JSON");
    check->add_option("--seed", co.seed, "override the sampling seed");
    check->add_option("--samples", co.samples, "override the sample count")->check(CLI::PositiveNumber);
    check->add_option("--threads", co.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    check->add_option("--tol", co.tol, "tolerance override: VALUE (eq and pde) or eq|pde|rank=VALUE");

    std::string rpath, section, rat;
    auto* residual = app.add_subcommand("residual", "EL and HDW residuals of a section at a point");
    residual->add_option("problem", rpath, "problem file (JSON)")->required();
    residual->add_option("--section", section, "section name")->required();
    residual->add_option("--at", rat, "base point x1,...,xm")->required();

    std::string lpath, lat;
    auto* legendre = app.add_subcommand("legendre", "Legendre transforms and regularity at a jet point");
    legendre->add_option("problem", lpath, "problem file (JSON)")->required();
    legendre->add_option("--at", lat, "jet point x, u, u^a_i (comma-separated)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*check) return cmd_check(co);
        if (*residual) return cmd_residual(rpath, section, rat);
        if (*legendre) return cmd_legendre(lpath, lat);
    } catch (const std::exception& e) {
        // Unreadable files, schema or expression errors, bad points.
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
