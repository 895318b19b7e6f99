#pragma once

#include <cmath>
#include <string>

#include "effham/errors.hpp"
#include "effham/field.hpp"
#include "effham/numkit.hpp"

namespace effham {

/// Spin-j matrices in the basis m = j, j−1, …, −j (index 0 is m = +j).
class SpinRepresentation {
public:
    /// `twice_j` = 2j, so j = 1/2 is 1 and j = 1 is 2.
    explicit SpinRepresentation(int twice_j = 1) : twice_j_(twice_j) {
        if (twice_j < 1) throw InvalidInputError("SpinRepresentation: j must be >= 1/2");
        const int n = twice_j + 1;
        const double j = 0.5 * twice_j;
        jplus_ = ComplexMatrix::Zero(n, n);
        jz_ = ComplexMatrix::Zero(n, n);
        for (int k = 0; k < n; ++k) {
            const double m = j - k;
            jz_(k, k) = m;
            if (k > 0) jplus_(k - 1, k) = std::sqrt(j * (j + 1) - m * (m + 1));
        }
        jminus_ = jplus_.adjoint();
    }

    static SpinRepresentation from_j(double j) {
        const double twice = 2.0 * j;
        if (!(twice >= 1.0) || std::abs(twice - std::round(twice)) > 1e-12) {
            throw InvalidInputError("SpinRepresentation: j must be a positive half-integer, got " + std::to_string(j));
        }
        return SpinRepresentation(static_cast<int>(std::lround(twice)));
    }

    int twice_j() const { return twice_j_; }
    double j() const { return 0.5 * twice_j_; }
    Eigen::Index dim() const { return twice_j_ + 1; }

    const ComplexMatrix& jplus() const { return jplus_; }
    const ComplexMatrix& jminus() const { return jminus_; }
    const ComplexMatrix& jz() const { return jz_; }
    ComplexMatrix jx() const { return 0.5 * (jplus_ + jminus_); }
    ComplexMatrix jy() const { return (jplus_ - jminus_) / (2.0 * I_unit); }

    /// H = −J·B = −½B₋J₊ − ½B₊J₋ − B₃Jz.
    ComplexMatrix hamiltonian(const Vec3& b) const {
        const cplx bp{b.x, b.y}, bm{b.x, -b.y};
        return -0.5 * bm * jplus_ - 0.5 * bp * jminus_ - b.z * jz_;
    }

private:
    int twice_j_;
    ComplexMatrix jplus_, jminus_, jz_;
};

}  // namespace effham
