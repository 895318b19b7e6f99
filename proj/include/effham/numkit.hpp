#pragma once

// Dense complex linear algebra shared by the propagator, projection and
// variational code. Sizes are small (spin multiplets, discretized continua of
// a few thousand states), so everything is dense.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "effham/errors.hpp"

namespace effham {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr cplx I_unit{0.0, 1.0};

inline bool all_finite(const ComplexMatrix& a) {
    return a.allFinite();
}

inline void require_square(const ComplexMatrix& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw DimensionError(std::string(who) + ": expected a non-empty square matrix, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    }
}

inline void require_finite(const ComplexMatrix& a, const char* who) {
    if (!all_finite(a)) {
        throw InvalidInputError(std::string(who) + ": non-finite entries");
    }
}

/// Largest absolute entry.
inline double max_abs(const ComplexMatrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Spectral (operator 2-) norm.
inline double spectral_norm(const ComplexMatrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a.adjoint() * a, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// ‖U†U − I‖ in the max-entry norm.
inline double unitarity_defect(const ComplexMatrix& u) {
    const auto n = u.rows();
    return max_abs(u.adjoint() * u - ComplexMatrix::Identity(n, n));
}

inline double hermiticity_defect(const ComplexMatrix& h) {
    return max_abs(h - h.adjoint());
}

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
    return a * b - b * a;
}

/// e^A by scaling-and-squaring with a degree-13 Padé approximant.
inline ComplexMatrix mat_exp(const ComplexMatrix& a) {
    require_square(a, "mat_exp");
    require_finite(a, "mat_exp");
    ComplexMatrix result = a.exp();
    require_finite(result, "mat_exp");
    return result;
}

/// Solve A X = B by LU with partial pivoting. Throws SingularMatrixError
/// (carrying the smallest pivot) when A is singular to working precision.
inline ComplexMatrix solve_linear(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_square(a, "solve_linear");
    if (b.rows() != a.rows()) {
        throw DimensionError("solve_linear: right-hand side has " + std::to_string(b.rows()) +
                             " rows, matrix has " + std::to_string(a.rows()));
    }
    require_finite(a, "solve_linear");
    require_finite(b, "solve_linear");

    Eigen::PartialPivLU<ComplexMatrix> lu(a);
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double min_pivot = pivots.minCoeff();
    const double scale = std::max(max_abs(a), std::numeric_limits<double>::min());
    const double floor = static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon() * scale;
    if (!(min_pivot > floor)) {
        throw SingularMatrixError("solve_linear: matrix is singular to working precision (pivot " +
                                      std::to_string(min_pivot) + ")",
                                  min_pivot);
    }
    return lu.solve(b);
}

inline ComplexMatrix inverse(const ComplexMatrix& a) {
    require_square(a, "inverse");
    return solve_linear(a, ComplexMatrix::Identity(a.rows(), a.cols()));
}

/// 1-norm condition number ‖A‖₁‖A⁻¹‖₁.
inline double condition_number(const ComplexMatrix& a) {
    auto norm1 = [](const ComplexMatrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); };
    try {
        return norm1(a) * norm1(inverse(a));
    } catch (const SingularMatrixError&) {
        return std::numeric_limits<double>::infinity();
    }
}

/// Solve T x = b for a real tridiagonal T (sub, diag, super) by Gaussian
/// elimination with partial pivoting. Exactly singular pivots are replaced by
/// a tiny value, as required by inverse iteration.
inline Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag,
                                         const Eigen::VectorXd& super, Eigen::VectorXd b) {
    const Eigen::Index n = diag.size();
    Eigen::VectorXd d = diag, du = Eigen::VectorXd::Zero(n), du2 = Eigen::VectorXd::Zero(n),
                    dl = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        du[i] = super[i];
        dl[i] = sub[i];
    }
    const double tiny = std::numeric_limits<double>::epsilon() *
                        std::max({diag.cwiseAbs().maxCoeff(), sub.size() ? sub.cwiseAbs().maxCoeff() : 0.0, 1e-300});
    std::vector<bool> swapped(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        if (std::abs(d[i]) >= std::abs(dl[i])) {
            if (d[i] == 0.0) d[i] = tiny;
            const double f = dl[i] / d[i];
            dl[i] = f;
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
        } else {
            swapped[static_cast<std::size_t>(i)] = true;
            const double f = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = f;
            const double tmp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = tmp - f * d[i + 1];
            if (i + 2 < n) {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du[i + 1];
            }
            std::swap(b[i], b[i + 1]);
            b[i + 1] -= f * b[i];
        }
    }
    if (d[n - 1] == 0.0) d[n - 1] = tiny;
    b[n - 1] /= d[n - 1];
    if (n > 1) b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for (Eigen::Index i = n - 3; i >= 0; --i) b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    return b;
}

/// Eigenpairs of a real symmetric tridiagonal matrix: eigenvalues by implicit
/// QL without vectors, eigenvectors by inverse iteration. Vectors whose
/// eigenvalues lie within a relative gap of 1e-5 form a cluster and are
/// Gram-Schmidt orthogonalized against each other. O(n²) without clusters.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> symmetric_tridiagonal_eigen(const Eigen::VectorXd& diag,
                                                                               const Eigen::VectorXd& offdiag) {
    const Eigen::Index n = diag.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, offdiag, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd values = es.eigenvalues();
    Eigen::MatrixXd vectors(n, n);
    const double eps = std::numeric_limits<double>::epsilon();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    const double cluster_gap = 1e-5 * scale;
    Eigen::Index cluster_begin = 0;
    double prev_shift = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k > 0 && values[k] - values[k - 1] > cluster_gap) cluster_begin = k;
        // Distinct shifts even for (numerically) equal eigenvalues.
        const double shift = std::max(values[k] + 4.0 * eps * scale, prev_shift + 10.0 * eps * scale);
        prev_shift = shift;
        const Eigen::VectorXd shifted = diag - Eigen::VectorXd::Constant(n, shift);
        Eigen::VectorXd x(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x[i] = 1.0 + 0.1 * std::sin(1.7 * static_cast<double>(i) + 0.3 + 0.61 * static_cast<double>(k - cluster_begin));
        }
        for (int sweep = 0; sweep < 3; ++sweep) {
            x = solve_tridiagonal(offdiag, shifted, offdiag, x);
            for (Eigen::Index j = cluster_begin; j < k; ++j) x -= vectors.col(j).dot(x) * vectors.col(j);
            x.normalize();
            if (sweep == 1 && cluster_begin == k) break;
        }
        // Sign convention: largest component positive.
        Eigen::Index imax = 0;
        x.cwiseAbs().maxCoeff(&imax);
        if (x[imax] < 0.0) x = -x;
        vectors.col(k) = x;
    }
    return {values, vectors};
}

/// True when every entry outside the three central diagonals is zero.
inline bool is_tridiagonal(const ComplexMatrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if ((i > j + 1 || j > i + 1) && m(i, j) != 0.0) return false;
        }
    }
    return true;
}

}  // namespace effham
