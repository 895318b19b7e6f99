#pragma once

// Identity and variational correction for evolution operators. Given any
// trial U_t with U_t(0) = I, the exact U satisfies
//   U(t) = U_t(t) + iU(t) ∫₀ᵗ U⁻¹(t') [iU̇_t(t') − H(t')U_t(t')] dt'
// and replacing U by U_t on the right gives a correction whose error is
// second order in (U_t − U).

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "effham/errors.hpp"
#include "effham/field.hpp"
#include "effham/numkit.hpp"
#include "effham/spin.hpp"

namespace effham {

using MatrixFunction = std::function<ComplexMatrix(double)>;

/// H(t) = −J·B(t) as a matrix function.
inline MatrixFunction spin_hamiltonian(FieldProtocol field, SpinRepresentation rep) {
    return [field = std::move(field), rep = std::move(rep)](double t) { return rep.hamiltonian(field(t)); };
}

/// Operator samples on a uniform time grid.
struct SampledEvolution {
    std::vector<double> times;
    std::vector<ComplexMatrix> values;

    std::size_t size() const { return times.size(); }
};

inline SampledEvolution sample_evolution(const MatrixFunction& u, const std::vector<double>& times) {
    SampledEvolution s;
    s.times = times;
    s.values.reserve(times.size());
    for (double t : times) s.values.push_back(u(t));
    return s;
}

namespace detail {

inline void require_uniform_grid(const std::vector<double>& times, const char* who) {
    if (times.size() < 2) throw GridError(std::string(who) + ": need at least 2 grid points");
    const double h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (!(h > 0.0)) throw GridError(std::string(who) + ": grid must be increasing");
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double expect = times.front() + h * static_cast<double>(i);
        if (std::abs(times[i] - expect) > 1e-9 * h) {
            throw GridError(std::string(who) + ": grid is not uniform at index " + std::to_string(i));
        }
    }
}

inline void require_same_grid(const std::vector<double>& a, const std::vector<double>& b, const char* who) {
    if (a.size() != b.size()) {
        throw GridError(std::string(who) + ": grids differ in length (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
    }
    const double h = a.size() > 1 ? std::abs(a[1] - a[0]) : 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > 1e-9 * h) {
            throw GridError(std::string(who) + ": grids misaligned at index " + std::to_string(i));
        }
    }
}

inline std::size_t grid_index(const std::vector<double>& times, double t, const char* who) {
    const double h = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1) : 1.0;
    const double x = (t - times.front()) / h;
    const long k = std::lround(x);
    if (k < 0 || k >= static_cast<long>(times.size()) || std::abs(x - static_cast<double>(k)) > 1e-9) {
        throw GridError(std::string(who) + ": t = " + std::to_string(t) + " is not a grid point");
    }
    return static_cast<std::size_t>(k);
}

/// Running integral F_k = ∫_{t_0}^{t_k} f on a uniform grid. Even k is plain
/// composite Simpson; odd k adds the last interval from the local quadratic
/// through three neighbouring samples, so every F_k is fourth order.
inline std::vector<ComplexMatrix> cumulative_simpson(const std::vector<ComplexMatrix>& f, double h) {
    const std::size_t n = f.size();
    std::vector<ComplexMatrix> out(n);
    out[0] = ComplexMatrix::Zero(f[0].rows(), f[0].cols());
    if (n == 2) {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    for (std::size_t k = 2; k < n; k += 2) out[k] = out[k - 2] + (h / 3.0) * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
    for (std::size_t k = 1; k < n; k += 2) {
        if (k + 1 < n) {
            out[k] = out[k - 1] + (h / 12.0) * (5.0 * f[k - 1] + 8.0 * f[k] - f[k + 1]);
        } else {
            out[k] = out[k - 1] + (h / 12.0) * (-f[k - 2] + 8.0 * f[k - 1] + 5.0 * f[k]);
        }
    }
    return out;
}

}  // namespace detail

/// Sampled trial operator U_t with its time derivative.
class TrialEvolution {
public:
    enum class DerivativeRule { analytic, centered_difference };

    /// Closed-form trial: both U_t and U̇_t are evaluated exactly.
    static TrialEvolution analytic(std::vector<double> times, const MatrixFunction& u, const MatrixFunction& du,
                                   std::string label) {
        detail::require_uniform_grid(times, "TrialEvolution");
        TrialEvolution tr;
        tr.label_ = std::move(label);
        tr.rule_ = DerivativeRule::analytic;
        for (double t : times) {
            tr.values_.push_back(u(t));
            tr.derivatives_.push_back(du(t));
        }
        tr.times_ = std::move(times);
        tr.finish();
        return tr;
    }

    /// Samples only: U̇_t from second-order centered differences, with
    /// second-order one-sided formulas at the ends.
    static TrialEvolution sampled(std::vector<double> times, std::vector<ComplexMatrix> values, std::string label) {
        detail::require_uniform_grid(times, "TrialEvolution");
        if (values.size() != times.size()) throw GridError("TrialEvolution: sample count does not match the grid");
        if (times.size() < 3) throw GridError("TrialEvolution: centered differences need at least 3 samples");
        TrialEvolution tr;
        tr.label_ = std::move(label);
        tr.rule_ = DerivativeRule::centered_difference;
        const std::size_t n = times.size();
        const double h = times[1] - times[0];
        tr.derivatives_.resize(n);
        tr.derivatives_[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
        tr.derivatives_[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
        for (std::size_t i = 1; i + 1 < n; ++i) tr.derivatives_[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
        tr.times_ = std::move(times);
        tr.values_ = std::move(values);
        tr.finish();
        return tr;
    }

    const std::vector<double>& times() const { return times_; }
    const std::vector<ComplexMatrix>& values() const { return values_; }
    const std::vector<ComplexMatrix>& derivatives() const { return derivatives_; }
    const std::vector<double>& condition_numbers() const { return conditions_; }
    double max_condition() const { return *std::max_element(conditions_.begin(), conditions_.end()); }
    DerivativeRule derivative_rule() const { return rule_; }
    const std::string& label() const { return label_; }
    double spacing() const { return times_[1] - times_[0]; }

private:
    void finish() {
        const ComplexMatrix& u0 = values_.front();
        require_square(u0, "TrialEvolution");
        for (const auto& u : values_) {
            if (u.rows() != u0.rows() || u.cols() != u0.cols()) throw DimensionError("TrialEvolution: ragged samples");
            require_finite(u, "TrialEvolution");
        }
        const double d = max_abs(u0 - ComplexMatrix::Identity(u0.rows(), u0.cols()));
        if (d > 1e-12) {
            throw InvalidInputError("TrialEvolution '" + label_ + "': U_t(0) differs from I by " + std::to_string(d));
        }
        conditions_.clear();
        for (const auto& u : values_) {
            const Eigen::JacobiSVD<ComplexMatrix> svd(u);
            const auto& s = svd.singularValues();
            const double smin = s[s.size() - 1];
            conditions_.push_back(smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity());
        }
    }

    std::vector<double> times_;
    std::vector<ComplexMatrix> values_;
    std::vector<ComplexMatrix> derivatives_;
    std::vector<double> conditions_;
    DerivativeRule rule_ = DerivativeRule::analytic;
    std::string label_;
};

/// L(t') = −iU(t)U⁻¹(t'), with t' ≤ t both grid points of `u`.
inline ComplexMatrix lagrange_adjoint(const SampledEvolution& u, double t, double t_prime) {
    if (u.values.size() != u.times.size() || u.times.empty()) throw GridError("lagrange_adjoint: malformed samples");
    if (t_prime > t) throw InvalidInputError("lagrange_adjoint: requires t' <= t");
    const std::size_t k = detail::grid_index(u.times, t, "lagrange_adjoint");
    const std::size_t kp = detail::grid_index(u.times, t_prime, "lagrange_adjoint");
    // U(t)U⁻¹(t') = (U⁻†(t') U†(t))†, solved without forming the inverse.
    const ComplexMatrix x = solve_linear(u.values[kp].adjoint(), u.values[k].adjoint());
    return -I_unit * x.adjoint();
}

struct IdentityCheck {
    double residual = 0.0;  // max-entry norm of RHS − U(t)
    ComplexMatrix rhs;
    std::size_t intervals = 0;
    double spacing = 0.0;
};

/// Right side of the identity, U_t(t) + iU(t)∫₀ᵗ U⁻¹[iU̇_t − HU_t]dt', by
/// Simpson quadrature on the shared grid, compared with U(t).
inline IdentityCheck identity_check(const SampledEvolution& u, const TrialEvolution& trial, const MatrixFunction& h,
                                    double t) {
    detail::require_same_grid(u.times, trial.times(), "identity_check");
    if (u.values.size() != u.times.size()) throw GridError("identity_check: malformed exact samples");
    const std::size_t k = detail::grid_index(u.times, t, "identity_check");
    std::vector<ComplexMatrix> f;
    f.reserve(k + 1);
    for (std::size_t i = 0; i <= k; ++i) {
        const ComplexMatrix r = I_unit * trial.derivatives()[i] - h(u.times[i]) * trial.values()[i];
        f.push_back(solve_linear(u.values[i], r));
    }
    IdentityCheck out;
    out.intervals = k;
    out.spacing = trial.spacing();
    const ComplexMatrix integral =
        k == 0 ? ComplexMatrix::Zero(f[0].rows(), f[0].cols()) : detail::cumulative_simpson(f, out.spacing)[k];
    out.rhs = trial.values()[k] + I_unit * u.values[k] * integral;
    out.residual = max_abs(out.rhs - u.values[k]);
    return out;
}

struct VariationalResult {
    std::vector<double> times;           // grid up to and including t
    std::vector<ComplexMatrix> u_var;    // corrected operator per sample
    std::vector<ComplexMatrix> residual;   // R(t') = −iU̇_t + HU_t
    std::vector<ComplexMatrix> integrand;  // U_t⁻¹R, the effective generator seen by the trial
    // Filled when a reference is supplied: ‖·‖₂ distances per sample.
    std::vector<double> trial_error;
    std::vector<double> var_error;

    const ComplexMatrix& final_value() const { return u_var.back(); }
};

/// U_var(t) = U_t(t)(1 − i∫₀ᵗ U_t⁻¹[−iU̇_t + HU_t]dt'), single pass.
inline VariationalResult variational_correct(const TrialEvolution& trial, const MatrixFunction& h, double t,
                                             const SampledEvolution* reference = nullptr) {
    const std::size_t k = detail::grid_index(trial.times(), t, "variational_correct");
    constexpr double max_condition = 1e8;
    for (std::size_t i = 0; i <= k; ++i) {
        if (!(trial.condition_numbers()[i] <= max_condition)) {
            throw ConditioningError("variational_correct: trial '" + trial.label() + "' is ill-conditioned at t = " +
                                        std::to_string(trial.times()[i]),
                                    trial.condition_numbers()[i]);
        }
    }
    if (reference) detail::require_same_grid(reference->times, trial.times(), "variational_correct");

    VariationalResult out;
    out.times.assign(trial.times().begin(), trial.times().begin() + static_cast<long>(k + 1));
    for (std::size_t i = 0; i <= k; ++i) {
        const ComplexMatrix& ut = trial.values()[i];
        ComplexMatrix r = -I_unit * trial.derivatives()[i] + h(out.times[i]) * ut;
        out.integrand.push_back(solve_linear(ut, r));
        out.residual.push_back(std::move(r));
    }
    const Eigen::Index n = trial.values().front().rows();
    const ComplexMatrix id = ComplexMatrix::Identity(n, n);
    if (k == 0) {
        out.u_var.push_back(trial.values()[0]);
    } else {
        const auto integral = detail::cumulative_simpson(out.integrand, trial.spacing());
        for (std::size_t i = 0; i <= k; ++i) out.u_var.push_back(trial.values()[i] * (id - I_unit * integral[i]));
    }
    if (reference) {
        for (std::size_t i = 0; i <= k; ++i) {
            out.trial_error.push_back(spectral_norm(trial.values()[i] - reference->values[i]));
            out.var_error.push_back(spectral_norm(out.u_var[i] - reference->values[i]));
        }
    }
    return out;
}

/// Random Hermitian K with ‖K‖₂ = 1, for perturbed trials.
inline ComplexMatrix random_unit_hermitian(std::uint64_t seed, Eigen::Index n) {
    SeededRng rng(seed);
    ComplexMatrix a(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = cplx{rng.normal(), rng.normal()};
    }
    ComplexMatrix k = 0.5 * (a + a.adjoint());
    return k / spectral_norm(k);
}

}  // namespace effham
