#pragma once

/**
 * @file linalg.hpp
 * @brief Rank-revealing helpers shared by the exterior-algebra and dynamics code.
 *
 * Every rank decision in the library goes through these functions so that a
 * single relative threshold applies: singular values below
 * `kRankTolerance * sigma_max` count as zero.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace jettriple {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value threshold used for every rank decision.
inline constexpr double kRankTolerance = 1e-8;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace linalg {

/// Singular values of `a` in decreasing order (empty for an empty matrix).
inline Vector singular_values(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) return Vector(0);
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues();
}

inline int rank(const Matrix& a, double tol = kRankTolerance) {
    const Vector s = singular_values(a);
    if (s.size() == 0 || s(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) ++r;
    return r;
}

/// Orthonormal basis (as columns) of {v : a v = 0}.
inline Matrix nullspace(const Matrix& a, double tol = kRankTolerance) {
    const Eigen::Index n = a.cols();
    if (a.rows() == 0 || n == 0) return Matrix::Identity(n, n);
    // Pad to at least n rows so the full V factor is square.
    Matrix padded = Matrix::Zero(std::max(a.rows(), n), n);
    padded.topRows(a.rows()) = a;
    Eigen::JacobiSVD<Matrix> svd(padded, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    int r = 0;
    if (s.size() > 0 && s(0) > 0.0)
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s(i) > tol * s(0)) ++r;
    return svd.matrixV().rightCols(n - r);
}

/// Orthonormal basis of the column space of `a`.
inline Matrix column_space(const Matrix& a, double tol = kRankTolerance) {
    if (a.rows() == 0 || a.cols() == 0) return Matrix(a.rows(), 0);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    int r = 0;
    if (s.size() > 0 && s(0) > 0.0)
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s(i) > tol * s(0)) ++r;
    return svd.matrixU().leftCols(r);
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() && a.cols() > 0 && b.cols() > 0)
        throw DimensionError("hcat: row mismatch");
    const Eigen::Index rows = a.cols() > 0 ? a.rows() : b.rows();
    Matrix out(rows, a.cols() + b.cols());
    if (a.cols() > 0) out.leftCols(a.cols()) = a;
    if (b.cols() > 0) out.rightCols(b.cols()) = b;
    return out;
}

/// Indices of standard basis vectors that complete span(k) to the whole space.
/// Greedy, lowest index first, with the same rank threshold.
inline std::vector<int> complete_with_standard_basis(const Matrix& k, double tol = kRankTolerance) {
    const Eigen::Index n = k.rows();
    std::vector<int> chosen;
    Matrix current = k;
    int current_rank = rank(current, tol);
    for (Eigen::Index i = 0; i < n && current_rank < n; ++i) {
        Matrix trial = hcat(current, Matrix::Identity(n, n).col(i));
        const int r = rank(trial, tol);
        if (r > current_rank) {
            chosen.push_back(static_cast<int>(i));
            current = std::move(trial);
            current_rank = r;
        }
    }
    return chosen;
}

} // namespace linalg
} // namespace jettriple
