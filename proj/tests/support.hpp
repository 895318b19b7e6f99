#pragma once

#include <cstdint>

#include "effham/field.hpp"
#include "effham/numkit.hpp"

namespace effham::testing {

inline ComplexMatrix random_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    ComplexMatrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = scale * cplx{rng.normal(), rng.normal()};
    }
    return a;
}

inline ComplexMatrix random_hermitian(SeededRng& rng, Eigen::Index n, double scale = 1.0) {
    const ComplexMatrix a = random_matrix(rng, n, n, scale);
    return 0.5 * (a + a.adjoint());
}

/// Truncated Taylor series Σ A^k/k!, an exponential oracle that shares no
/// code with the library routine. Accurate for moderate ‖A‖.
inline ComplexMatrix taylor_exp(const ComplexMatrix& a, int terms = 80) {
    ComplexMatrix sum = ComplexMatrix::Identity(a.rows(), a.cols());
    ComplexMatrix term = sum;
    for (int k = 1; k < terms; ++k) {
        term = term * a / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

}  // namespace effham::testing
