#pragma once

/**
 * @file exterior.hpp
 * @brief Pointwise exterior algebra on R^N: k-forms, wedge, interior product,
 *        pullback, the flat map and l-orthogonal complements.
 *
 * Forms are stored sparsely: a coefficient per strictly increasing index
 * tuple. Indices are 0-based (index i is the coordinate direction e_i).
 */

#include "jettriple/linalg.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

namespace jettriple {

using IndexTuple = std::vector<int>;

class KForm {
public:
    using Terms = std::map<IndexTuple, double>;

    KForm(int ambient_dim, int degree) : dim_(ambient_dim), degree_(degree) {
        if (ambient_dim < 1) throw DimensionError("KForm: ambient dimension must be positive");
        if (degree < 0) throw DimensionError("KForm: negative degree");
    }

    /// The constant 0-form with the given value.
    static KForm scalar(int ambient_dim, double value) {
        KForm f(ambient_dim, 0);
        f.add({}, value);
        return f;
    }

    /// dz^{i1} ^ ... ^ dz^{ik}; indices may be unsorted (sign follows the permutation).
    static KForm basis(int ambient_dim, std::initializer_list<int> indices) {
        return basis(ambient_dim, IndexTuple(indices));
    }

    static KForm basis(int ambient_dim, IndexTuple indices) {
        KForm f(ambient_dim, static_cast<int>(indices.size()));
        f.add(std::move(indices), 1.0);
        return f;
    }

    /// The 1-form sum_i c_i dz^i.
    static KForm one_form(std::span<const double> coeffs) {
        KForm f(static_cast<int>(coeffs.size()), 1);
        for (std::size_t i = 0; i < coeffs.size(); ++i)
            if (coeffs[i] != 0.0) f.terms_[{static_cast<int>(i)}] = coeffs[i];
        return f;
    }

    static KForm one_form(const Vector& coeffs) {
        return one_form(std::span<const double>(coeffs.data(), static_cast<std::size_t>(coeffs.size())));
    }

    int ambient_dim() const noexcept { return dim_; }
    int degree() const noexcept { return degree_; }
    const Terms& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }

    /// Adds `value` to the coefficient of the (possibly unsorted) tuple.
    void add(IndexTuple tuple, double value) {
        if (static_cast<int>(tuple.size()) != degree_)
            throw DimensionError("KForm::add: tuple length differs from degree");
        for (int i : tuple)
            if (i < 0 || i >= dim_) throw DimensionError("KForm::add: index out of range");
        const int sign = sort_with_sign(tuple);
        if (sign == 0 || value == 0.0) return;
        auto it = terms_.find(tuple);
        if (it == terms_.end()) {
            terms_.emplace(std::move(tuple), sign * value);
        } else {
            it->second += sign * value;
            if (it->second == 0.0) terms_.erase(it);
        }
    }

    /// Coefficient of the (possibly unsorted) tuple, with permutation sign.
    double coefficient(IndexTuple tuple) const {
        if (static_cast<int>(tuple.size()) != degree_) return 0.0;
        const int sign = sort_with_sign(tuple);
        if (sign == 0) return 0.0;
        auto it = terms_.find(tuple);
        return it == terms_.end() ? 0.0 : sign * it->second;
    }

    /// omega(v_1, ..., v_k).
    double evaluate(std::span<const Vector> vectors) const {
        if (static_cast<int>(vectors.size()) != degree_)
            throw DimensionError("KForm::evaluate: wrong number of vectors");
        for (const auto& v : vectors)
            if (v.size() != dim_) throw DimensionError("KForm::evaluate: vector dimension mismatch");
        if (degree_ == 0) return coefficient({});
        double total = 0.0;
        Matrix block(degree_, degree_);
        for (const auto& [tuple, c] : terms_) {
            for (int r = 0; r < degree_; ++r)
                for (int s = 0; s < degree_; ++s) block(r, s) = vectors[s](tuple[r]);
            total += c * block.determinant();
        }
        return total;
    }

    double evaluate(std::initializer_list<Vector> vectors) const {
        std::vector<Vector> v(vectors);
        return evaluate(std::span<const Vector>(v));
    }

    double max_abs_coefficient() const noexcept {
        double m = 0.0;
        for (const auto& [t, c] : terms_) m = std::max(m, std::abs(c));
        return m;
    }

    KForm& operator+=(const KForm& other) {
        check_compatible(other);
        for (const auto& [t, c] : other.terms_) add(t, c);
        return *this;
    }
    KForm& operator-=(const KForm& other) {
        check_compatible(other);
        for (const auto& [t, c] : other.terms_) add(t, -c);
        return *this;
    }
    KForm& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto& [t, c] : terms_) c *= s;
        return *this;
    }

    friend KForm operator+(KForm a, const KForm& b) { return a += b; }
    friend KForm operator-(KForm a, const KForm& b) { return a -= b; }
    friend KForm operator*(double s, KForm a) { return a *= s; }
    friend KForm operator-(KForm a) { return a *= -1.0; }

    std::string to_string() const {
        std::ostringstream os;
        os << "KForm(dim=" << dim_ << ", degree=" << degree_ << ")";
        for (const auto& [t, c] : terms_) {
            os << " " << c << "*(";
            for (std::size_t i = 0; i < t.size(); ++i) os << (i ? "," : "") << t[i];
            os << ")";
        }
        return os.str();
    }

    /// Sorts in place and returns the permutation sign, or 0 on a repeated index.
    static int sort_with_sign(IndexTuple& t) {
        int sign = 1;
        for (std::size_t i = 1; i < t.size(); ++i) {
            for (std::size_t j = i; j > 0 && t[j - 1] >= t[j]; --j) {
                if (t[j - 1] == t[j]) return 0;
                std::swap(t[j - 1], t[j]);
                sign = -sign;
            }
        }
        return sign;
    }

private:
    void check_compatible(const KForm& other) const {
        if (other.dim_ != dim_ || other.degree_ != degree_)
            throw DimensionError("KForm: incompatible operands");
    }

    int dim_;
    int degree_;
    Terms terms_;
};

/// Largest coefficient of a - b.
inline double max_abs_diff(const KForm& a, const KForm& b) {
    return (a - b).max_abs_coefficient();
}

inline KForm wedge(const KForm& a, const KForm& b) {
    if (a.ambient_dim() != b.ambient_dim()) throw DimensionError("wedge: ambient dimension mismatch");
    KForm out(a.ambient_dim(), a.degree() + b.degree());
    if (out.degree() > out.ambient_dim()) return out;
    for (const auto& [ta, ca] : a.terms()) {
        for (const auto& [tb, cb] : b.terms()) {
            IndexTuple t = ta;
            t.insert(t.end(), tb.begin(), tb.end());
            out.add(std::move(t), ca * cb);
        }
    }
    return out;
}

/// Interior product i_v omega (contraction in the first slot).
inline KForm interior(const Vector& v, const KForm& omega) {
    if (v.size() != omega.ambient_dim()) throw DimensionError("interior: dimension mismatch");
    if (omega.degree() == 0) throw DimensionError("interior: cannot contract a 0-form");
    KForm out(omega.ambient_dim(), omega.degree() - 1);
    for (const auto& [t, c] : omega.terms()) {
        for (std::size_t s = 0; s < t.size(); ++s) {
            const double vs = v(t[s]);
            if (vs == 0.0) continue;
            IndexTuple rest;
            rest.reserve(t.size() - 1);
            for (std::size_t r = 0; r < t.size(); ++r)
                if (r != s) rest.push_back(t[r]);
            out.add(std::move(rest), (s % 2 == 0 ? 1.0 : -1.0) * vs * c);
        }
    }
    return out;
}

/// Pullback f^*omega where `jacobian` is the (target x source) Jacobian of f.
inline KForm pullback(const Matrix& jacobian, const KForm& omega) {
    if (jacobian.rows() != omega.ambient_dim()) throw DimensionError("pullback: Jacobian rows differ from form dimension");
    if (jacobian.cols() < 1) throw DimensionError("pullback: empty source space");
    const int source = static_cast<int>(jacobian.cols());
    KForm out(source, omega.degree());
    if (omega.degree() == 0) {
        out.add({}, omega.coefficient({}));
        return out;
    }
    std::vector<KForm> rows;
    rows.reserve(static_cast<std::size_t>(jacobian.rows()));
    for (Eigen::Index r = 0; r < jacobian.rows(); ++r) rows.push_back(KForm::one_form(Vector(jacobian.row(r).transpose())));
    for (const auto& [t, c] : omega.terms()) {
        KForm acc = KForm::scalar(source, c);
        for (int idx : t) {
            acc = wedge(acc, rows[static_cast<std::size_t>(idx)]);
            if (acc.is_zero()) break;
        }
        if (!acc.is_zero()) out += acc;
    }
    return out;
}

/// Degree-preserving derivation D_h omega (X_1..X_k) = sum_s omega(.., h X_s, ..).
inline KForm derivation(const Matrix& h, const KForm& omega) {
    const int n = omega.ambient_dim();
    if (h.rows() != n || h.cols() != n) throw DimensionError("derivation: operator shape mismatch");
    std::vector<KForm> rows;
    for (int r = 0; r < n; ++r) rows.push_back(KForm::one_form(Vector(h.row(r).transpose())));
    KForm out(n, omega.degree());
    for (const auto& [t, c] : omega.terms()) {
        for (std::size_t s = 0; s < t.size(); ++s) {
            KForm acc = KForm::scalar(n, c);
            for (std::size_t r = 0; r < t.size(); ++r) {
                acc = wedge(acc, r == s ? rows[static_cast<std::size_t>(t[r])] : KForm::basis(n, {t[r]}));
                if (acc.is_zero()) break;
            }
            if (!acc.is_zero()) out += acc;
        }
    }
    return out;
}

/// Linear subspace of R^N described by a basis (columns).
class Subspace {
public:
    explicit Subspace(int ambient_dim) : basis_(ambient_dim, 0) {}

    /// Requires linearly independent columns.
    Subspace(Matrix basis) : basis_(std::move(basis)) {
        if (linalg::rank(basis_) != basis_.cols())
            throw DimensionError("Subspace: basis vectors are linearly dependent");
    }

    /// Orthonormal basis of the span of arbitrary columns.
    static Subspace span_of(const Matrix& vectors) {
        Subspace s(static_cast<int>(vectors.rows()));
        s.basis_ = linalg::column_space(vectors);
        return s;
    }

    static Subspace from_vectors(const std::vector<Vector>& vs, int ambient_dim) {
        Matrix m(ambient_dim, static_cast<Eigen::Index>(vs.size()));
        for (std::size_t i = 0; i < vs.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vs[i];
        return Subspace(std::move(m));
    }

    int ambient_dim() const noexcept { return static_cast<int>(basis_.rows()); }
    int dim() const noexcept { return static_cast<int>(basis_.cols()); }
    const Matrix& basis() const noexcept { return basis_; }

    bool contains(const Vector& v) const {
        return linalg::rank(linalg::hcat(basis_, v)) == dim();
    }
    bool contains(const Subspace& other) const {
        if (other.dim() == 0) return true;
        return linalg::rank(linalg::hcat(basis_, other.basis_)) == dim();
    }

private:
    Matrix basis_;
};

inline int intersection_dim(const Subspace& a, const Subspace& b) {
    if (a.dim() == 0 || b.dim() == 0) return 0;
    return a.dim() + b.dim() - linalg::rank(linalg::hcat(a.basis(), b.basis()));
}

namespace detail {

/// Appends the matrix of v -> i_v beta to `rows` (one row per output tuple).
inline void append_flat_rows(const KForm& beta, std::map<IndexTuple, std::vector<double>>& rows) {
    const int n = beta.ambient_dim();
    for (int i = 0; i < n; ++i) {
        Vector e = Vector::Zero(n);
        e(i) = 1.0;
        const KForm contracted = interior(e, beta);
        for (const auto& [t, c] : contracted.terms()) {
            auto& row = rows[t];
            if (row.empty()) row.assign(static_cast<std::size_t>(n), 0.0);
            row[static_cast<std::size_t>(i)] += c;
        }
    }
}

inline Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows, int n) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    return m;
}

inline void for_each_combination(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
    if (k > n || k < 0) return;
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        fn(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

} // namespace detail

/// ker flat_omega = {v : i_v omega = 0}.
inline Subspace flat_kernel(const KForm& omega) {
    if (omega.degree() < 1) throw DimensionError("flat_kernel: degree must be at least 1");
    std::map<IndexTuple, std::vector<double>> rows;
    detail::append_flat_rows(omega, rows);
    std::vector<std::vector<double>> flat;
    for (auto& [t, r] : rows) flat.push_back(std::move(r));
    return Subspace::span_of(linalg::nullspace(detail::rows_to_matrix(flat, omega.ambient_dim())));
}

/// W^{perp,l} = {v : i_{v ^ w_1 ^ .. ^ w_l} omega = 0 for all w_i in W}.
///
/// Enumerates every l-combination of W's basis; the number of constraint
/// blocks is C(dim W, l), each with C(N, k - l) rows, so cost grows
/// combinatorially with dimension.
inline Subspace l_orthogonal(const Subspace& w, const KForm& omega, int l) {
    if (w.ambient_dim() != omega.ambient_dim()) throw DimensionError("l_orthogonal: dimension mismatch");
    const int k = omega.degree() - 1;
    if (l < 1 || l > k) throw DimensionError("l_orthogonal: l out of range [1, degree-1]");
    const int n = omega.ambient_dim();
    std::vector<std::vector<double>> all_rows;
    detail::for_each_combination(w.dim(), l, [&](const std::vector<int>& combo) {
        KForm beta = omega;
        for (int c : combo) beta = interior(Vector(w.basis().col(c)), beta);
        std::map<IndexTuple, std::vector<double>> rows;
        detail::append_flat_rows(beta, rows);
        for (auto& [t, r] : rows) all_rows.push_back(std::move(r));
    });
    if (all_rows.empty()) return Subspace(Matrix::Identity(n, n));
    return Subspace::span_of(linalg::nullspace(detail::rows_to_matrix(all_rows, n)));
}

struct Classification {
    bool l_isotropic = false;
    bool l_coisotropic = false;
    bool l_lagrangian = false;
    bool multisymplectic = false;
    int subspace_dim = 0;   ///< dim of W (after quotienting, when requested)
    int orthogonal_dim = 0; ///< dim of W^{perp,l}
    int kernel_dim = 0;     ///< dim ker flat (0 unless premultisymplectic)

    bool operator==(const Classification&) const = default;
};

namespace detail {

inline Classification classify_nondegenerate(const Subspace& w, const KForm& omega, int l) {
    const int k = omega.degree() - 1;
    const Subspace perp = l_orthogonal(w, omega, l);
    Classification c;
    c.subspace_dim = w.dim();
    c.orthogonal_dim = perp.dim();
    c.l_isotropic = perp.contains(w);
    c.l_coisotropic = w.contains(perp);
    c.l_lagrangian = c.l_isotropic && c.l_coisotropic;
    const Subspace perp_k = (l == k) ? perp : l_orthogonal(w, omega, k);
    c.multisymplectic = intersection_dim(w, perp_k) == 0;
    return c;
}

} // namespace detail

/// Quotient of (R^N, omega) by ker flat_omega: the pushed form and the
/// coordinates of the quotient map.
struct Quotient {
    Subspace kernel;
    Matrix complement;  ///< N x q, standard basis vectors completing the kernel
    Matrix projection;  ///< q x N, coordinates of the quotient map
    KForm form;         ///< omega pushed to R^q

    Matrix project(const Matrix& vectors) const { return projection * vectors; }
};

inline Quotient quotient_by_kernel(const KForm& omega) {
    Subspace kernel = flat_kernel(omega);
    const int n = omega.ambient_dim();
    const std::vector<int> picks = linalg::complete_with_standard_basis(kernel.basis());
    const int q = static_cast<int>(picks.size());
    if (q == 0) throw DimensionError("quotient_by_kernel: form is identically zero");
    Matrix complement = Matrix::Zero(n, q);
    for (int j = 0; j < q; ++j) complement(picks[static_cast<std::size_t>(j)], j) = 1.0;
    const Matrix full = linalg::hcat(kernel.basis(), complement);
    const Matrix inverse = full.colPivHouseholderQr().solve(Matrix::Identity(n, n));
    Matrix projection = inverse.bottomRows(q);
    KForm pushed = pullback(complement, omega);
    return Quotient{std::move(kernel), std::move(complement), std::move(projection), std::move(pushed)};
}

/// Isotropy classification of W for (V, omega); with `premultisymplectic`
/// the classification is done on V / ker flat_omega.
inline Classification classify(const Subspace& w, const KForm& omega, int l, bool premultisymplectic) {
    if (w.ambient_dim() != omega.ambient_dim()) throw DimensionError("classify: dimension mismatch");
    const int k = omega.degree() - 1;
    if (l < 1 || l > k) throw DimensionError("classify: l out of range [1, degree-1]");
    if (!premultisymplectic) return detail::classify_nondegenerate(w, omega, l);
    const Quotient quotient = quotient_by_kernel(omega);
    const Subspace pushed_w = Subspace::span_of(quotient.project(w.basis()));
    Classification c = detail::classify_nondegenerate(pushed_w, quotient.form, l);
    c.kernel_dim = quotient.kernel.dim();
    return c;
}

} // namespace jettriple
