#pragma once

// Wei–Norman integration of i dU/dt = H(t) U with H = −J·B(t):
//
//   U(t) = exp(−iμ₃J₊) exp(−iμ₂J₋) exp(−iμ₁Jz)
//
//   dμ₃/dt = −½B₋ − ½μ₃²B₊ + iμ₃B₃      (Riccati, decoupled)
//   dμ₁/dt = −B₃ − iB₊μ₃
//   dμ₂/dt = iμ₂ dμ₁/dt − ½B₊
//
// with μ(t₀) = 0. μ₃ is a stereographic coordinate that blows up when the
// evolution approaches a spin flip; when |μ₃| reaches the restart threshold
// the segment is closed, its unitary is folded into an accumulated factor W,
// and all μ restart from zero: U(t) = U_segment(t) · W.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "effham/errors.hpp"
#include "effham/field.hpp"
#include "effham/numkit.hpp"
#include "effham/ode.hpp"
#include "effham/spin.hpp"

namespace effham {

struct MuValues {
    cplx mu1{};
    cplx mu2{};
    cplx mu3{};
};

/// Gauge restart: at `time` the μ restart from zero; `accumulated` is the
/// spin-1/2 evolution operator U(time) at the switch.
struct GaugeRestart {
    double time = 0.0;
    ComplexMatrix accumulated;
};

/// One restart-free stretch of the trajectory. The ODE state is (μ₃, μ₂, μ₁).
struct MuSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    ComplexMatrix entry_unitary;  // spin-1/2 U(t_start)
    OdeSolution solution;

    MuValues at(double t) const {
        const StateVector y = solution(t);
        return {y[2], y[1], y[0]};
    }
    MuValues end_values() const {
        const StateVector& y = solution.final_state();
        return {y[2], y[1], y[0]};
    }
};

class MuTrajectory {
public:
    MuTrajectory() = default;
    MuTrajectory(TimeSpan span, std::vector<MuSegment> segments, std::vector<double> times)
        : span_(span), segments_(std::move(segments)), times_(std::move(times)) {
        samples_.reserve(times_.size());
        for (double t : times_) samples_.push_back(at(t));
        for (std::size_t k = 1; k < segments_.size(); ++k) {
            restarts_.push_back({segments_[k].t_start, segments_[k].entry_unitary});
        }
    }

    TimeSpan span() const { return span_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<MuValues>& samples() const { return samples_; }
    const std::vector<GaugeRestart>& restarts() const { return restarts_; }
    const std::vector<MuSegment>& segments() const { return segments_; }

    void require_in_span(double t) const {
        if (!span_.contains(t, 1e-12 * (1.0 + std::abs(t)))) {
            throw RangeError("MuTrajectory: t = " + std::to_string(t) + " outside [" + std::to_string(span_.begin) +
                             ", " + std::to_string(span_.end) + "]");
        }
    }

    /// Segment holding t; a restart time belongs to the segment it opens.
    std::size_t segment_index(double t) const {
        require_in_span(t);
        std::size_t k = 0;
        while (k + 1 < segments_.size() && t >= segments_[k + 1].t_start) ++k;
        return k;
    }
    const MuSegment& segment_at(double t) const { return segments_[segment_index(t)]; }

    /// μ values of the segment holding t (dense output).
    MuValues at(double t) const {
        const MuSegment& seg = segment_at(t);
        return seg.at(std::clamp(t, seg.t_start, seg.t_end));
    }

private:
    TimeSpan span_{};
    std::vector<MuSegment> segments_;
    std::vector<double> times_;
    std::vector<MuValues> samples_;
    std::vector<GaugeRestart> restarts_;
};

struct MuOptions {
    std::size_t samples = 201;
    double restart_threshold = 10.0;
};

namespace detail {

inline cplx riccati_rate(cplx mu3, cplx bp, cplx bm, double b3) {
    return -0.5 * bm - 0.5 * mu3 * mu3 * bp + I_unit * mu3 * b3;
}

inline cplx phase_rate(cplx mu3, cplx bp, double b3) {
    return -b3 - I_unit * bp * mu3;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = a;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = b;
    return out;
}

}  // namespace detail

/// Spin-1/2 closed form of the product of exponentials:
///   U = e^{−iμ₁/2}/(1+|μ₃|²) · [[1, −iμ₃e^{i Re μ₁}], [−iμ₃*, e^{i Re μ₁}]].
inline ComplexMatrix spin_half_evolution(const MuValues& mu) {
    const double r = std::norm(mu.mu3);
    const cplx pref = std::exp(-0.5 * I_unit * mu.mu1) / (1.0 + r);
    const cplx ph = std::exp(I_unit * mu.mu1.real());
    ComplexMatrix u(2, 2);
    u << 1.0, -I_unit * mu.mu3 * ph, -I_unit * std::conj(mu.mu3), ph;
    return pref * u;
}

/// exp(−iμ₃J₊) exp(−iμ₂J₋) exp(−iμ₁Jz) in an arbitrary representation.
inline ComplexMatrix product_of_exponentials(const MuValues& mu, const SpinRepresentation& rep) {
    return mat_exp(-I_unit * mu.mu3 * rep.jplus()) * mat_exp(-I_unit * mu.mu2 * rep.jminus()) *
           mat_exp(-I_unit * mu.mu1 * rep.jz());
}

inline MuTrajectory integrate_mu(const FieldProtocol& field, TimeSpan span, const OdeSettings& settings,
                                 const MuOptions& options = {}) {
    if (!(span.end > span.begin)) throw InvalidInputError("integrate_mu: t_span must be increasing");
    if (options.samples < 2) throw InvalidInputError("integrate_mu: need at least 2 samples");
    if (!(options.restart_threshold > 0.0)) throw InvalidInputError("integrate_mu: restart threshold must be > 0");

    auto rhs = [&field](double t, const StateVector& y) {
        const Vec3 b = field(t);
        const cplx bp{b.x, b.y}, bm{b.x, -b.y};
        StateVector d(3);
        const cplx mu3 = y[0];
        const cplx dmu1 = detail::phase_rate(mu3, bp, b.z);
        d[0] = detail::riccati_rate(mu3, bp, bm, b.z);
        d[1] = I_unit * y[1] * dmu1 - 0.5 * bp;
        d[2] = dmu1;
        return d;
    };
    const double threshold = options.restart_threshold;
    const StopEvent past_threshold = [threshold](double, const StateVector& y) { return std::abs(y[0]) - threshold; };

    std::vector<MuSegment> segments;
    ComplexMatrix w = ComplexMatrix::Identity(2, 2);
    double t = span.begin;
    while (true) {
        MuSegment seg;
        seg.t_start = t;
        seg.entry_unitary = w;
        seg.solution = ode_integrate(rhs, StateVector::Zero(3), {t, span.end}, settings, past_threshold);
        seg.t_end = seg.solution.t_end();
        const bool stopped = seg.solution.stopped_by_event();
        if (stopped && !(seg.t_end - t > 1e-12 * (1.0 + std::abs(t)))) {
            throw SingularityError("integrate_mu: |mu3| exceeds the restart threshold immediately after a restart at t = " +
                                       std::to_string(t),
                                   t);
        }
        if (stopped) w = spin_half_evolution(seg.end_values()) * w;
        segments.push_back(std::move(seg));
        if (!stopped) break;
        t = segments.back().t_end;
    }
    return MuTrajectory(span, std::move(segments), detail::linspace(span.begin, span.end, options.samples));
}

/// U(t) = U_segment(t) · W, with the spin-1/2 closed form or, for j > 1/2,
/// matrix exponentials of the representation matrices.
inline ComplexMatrix reconstruct_evolution(const MuTrajectory& mu, const SpinRepresentation& rep, double t) {
    const std::size_t k = mu.segment_index(t);
    const MuSegment& seg = mu.segments()[k];
    const MuValues v = seg.at(std::clamp(t, seg.t_start, seg.t_end));
    if (rep.twice_j() == 1) return spin_half_evolution(v) * seg.entry_unitary;

    ComplexMatrix w = ComplexMatrix::Identity(rep.dim(), rep.dim());
    for (std::size_t i = 0; i < k; ++i) w = product_of_exponentials(mu.segments()[i].end_values(), rep) * w;
    return product_of_exponentials(v, rep) * w;
}

inline StateVector evolve_state(const ComplexMatrix& u, const StateVector& psi0) {
    if (u.rows() != u.cols() || u.cols() != psi0.size()) {
        throw DimensionError("evolve_state: operator is " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()) +
                             ", state has dimension " + std::to_string(psi0.size()));
    }
    return u * psi0;
}

inline ComplexMatrix density_matrix(const StateVector& psi) {
    return psi * psi.adjoint();
}

// --- U = U₁U₂ split (spin-1/2) ---------------------------------------------

enum class Unitarize { no, yes };

/// U₁ = exp(−iμ₃J₊)exp(−iμ₂J₋) with μ₂ = μ₃*/(1+|μ₃|²); U₂ = exp(−iμ₁Jz).
/// `accumulated` is the restart factor W, so U(t) = U₁U₂W.
struct SplitFactors {
    ComplexMatrix u1;
    ComplexMatrix u2;
    ComplexMatrix accumulated;
};

inline ComplexMatrix u1_factor(cplx mu3) {
    const double r = std::norm(mu3);
    ComplexMatrix u1(2, 2);
    u1 << 1.0 / (1.0 + r), -I_unit * mu3, -I_unit * std::conj(mu3) / (1.0 + r), 1.0;
    return u1;
}

inline SplitFactors split_u1_u2(const MuValues& mu, Unitarize mode = Unitarize::no) {
    SplitFactors out;
    out.accumulated = ComplexMatrix::Identity(2, 2);
    out.u1 = u1_factor(mu.mu3);
    out.u2 = ComplexMatrix::Zero(2, 2);
    if (mode == Unitarize::no) {
        out.u2(0, 0) = std::exp(-0.5 * I_unit * mu.mu1);
        out.u2(1, 1) = std::exp(0.5 * I_unit * mu.mu1);
    } else {
        // Move e^{Im μ₁/2} = (1+|μ₃|²)^{1/2} into U₁; U₂ becomes a pure phase.
        const double s = std::sqrt(1.0 + std::norm(mu.mu3));
        out.u1.col(0) *= s;
        out.u1.col(1) /= s;
        out.u2(0, 0) = std::exp(-0.5 * I_unit * mu.mu1.real());
        out.u2(1, 1) = std::exp(0.5 * I_unit * mu.mu1.real());
    }
    return out;
}

inline SplitFactors split_u1_u2(const MuTrajectory& mu, double t, Unitarize mode = Unitarize::no) {
    const MuSegment& seg = mu.segment_at(t);
    SplitFactors out = split_u1_u2(seg.at(std::clamp(t, seg.t_start, seg.t_end)), mode);
    out.accumulated = seg.entry_unitary;
    return out;
}

// --- time-dependent effective Hamiltonian -----------------------------------

/// dU₁/dt from μ₃ and dμ₃/dt (μ₂ tied to μ₃ as in U₁).
inline ComplexMatrix u1_derivative(cplx mu3, cplx dmu3) {
    const double r = std::norm(mu3);
    const double dr = 2.0 * std::real(std::conj(mu3) * dmu3);
    const double q = 1.0 + r;
    ComplexMatrix d(2, 2);
    d << -dr / (q * q), -I_unit * dmu3, -I_unit * (std::conj(dmu3) * q - std::conj(mu3) * dr) / (q * q), 0.0;
    return d;
}

inline ComplexMatrix u1_inverse(cplx mu3) {
    const double r = std::norm(mu3);
    ComplexMatrix inv(2, 2);
    inv << 1.0, I_unit * mu3, I_unit * std::conj(mu3) / (1.0 + r), 1.0 / (1.0 + r);
    return inv;
}

/// U₁⁻¹HU₁ written out entrywise.
inline ComplexMatrix rotated_hamiltonian_explicit(cplx mu3, const Vec3& b) {
    const cplx z = mu3, zc = std::conj(mu3), bp{b.x, b.y}, bm{b.x, -b.y};
    const double r = std::norm(z), q = 1.0 + r, b3 = b.z;
    ComplexMatrix a(2, 2);
    a(0, 0) = (I_unit * zc * bm - I_unit * z * bp - b3 * (1.0 - r)) / (2.0 * q);
    a(0, 1) = I_unit * z * b3 - 0.5 * bm - 0.5 * z * z * bp;
    a(1, 0) = (-2.0 * I_unit * zc * b3 - bp - zc * zc * bm) / (2.0 * q * q);
    a(1, 1) = (I_unit * z * bp - I_unit * zc * bm + (1.0 - r) * b3) / (2.0 * q);
    return a;
}

/// iU₁⁻¹ dU₁/dt written out entrywise, with dμ₃/dt from the Riccati equation.
inline ComplexMatrix connection_explicit(cplx mu3, const Vec3& b) {
    const cplx z = mu3, zc = std::conj(mu3), bp{b.x, b.y}, bm{b.x, -b.y};
    const double r = std::norm(z), q = 1.0 + r, b3 = b.z;
    ComplexMatrix g(2, 2);
    g(0, 0) = (I_unit * zc * bm + I_unit * z * r * bp + 2.0 * r * b3) / (2.0 * q);
    g(0, 1) = I_unit * z * b3 - 0.5 * bm - 0.5 * z * z * bp;
    g(1, 0) = (-2.0 * I_unit * zc * b3 - bp - zc * zc * bm) / (2.0 * q * q);
    g(1, 1) = -zc * (I_unit * z * z * bp + I_unit * bm + 2.0 * z * b3) / (2.0 * q);
    return g;
}

struct TdEffectiveHamiltonian {
    double t = 0.0;                   // evaluation time (shifted inside the span if needed)
    ComplexMatrix numerical;          // U₁⁻¹HU₁ − iU₁⁻¹U̇₁, U̇₁ by finite differences
    ComplexMatrix analytic;           // same with U̇₁ from the Riccati equation
    ComplexMatrix closed_form;        // (−B₃ − iμ₃B₊) σz/2
    ComplexMatrix rotated_hamiltonian;
    ComplexMatrix connection;         // iU₁⁻¹U̇₁ (analytic)
    double numerical_offdiag = 0.0;   // max |off-diagonal| of `numerical`
    double numerical_mismatch = 0.0;  // max |numerical − closed_form|
    double analytic_mismatch = 0.0;   // max |diag(analytic) − diag(closed_form)|
};

namespace detail {

// Short fixed-step RK4 flow of the Riccati equation.
inline cplx riccati_flow(const FieldProtocol& field, cplx mu3, double t0, double t1, int substeps = 8) {
    const double h = (t1 - t0) / substeps;
    auto f = [&field](double t, cplx z) {
        const Vec3 b = field(t);
        return riccati_rate(z, {b.x, b.y}, {b.x, -b.y}, b.z);
    };
    double t = t0;
    for (int i = 0; i < substeps; ++i) {
        const cplx k1 = f(t, mu3);
        const cplx k2 = f(t + 0.5 * h, mu3 + 0.5 * h * k1);
        const cplx k3 = f(t + 0.5 * h, mu3 + 0.5 * h * k2);
        const cplx k4 = f(t + h, mu3 + h * k3);
        mu3 += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return mu3;
}

inline double max_offdiag(const ComplexMatrix& m) {
    return std::max(std::abs(m(0, 1)), std::abs(m(1, 0)));
}

}  // namespace detail

inline TdEffectiveHamiltonian effective_hamiltonian_td(const MuTrajectory& mu, const FieldProtocol& field, double t) {
    mu.require_in_span(t);
    const TimeSpan span = mu.span();
    const double b_scale = 1.0 + field(t).norm();
    const double h = std::min(1e-3 / b_scale, 0.25 * span.length());
    TdEffectiveHamiltonian out;
    out.t = std::clamp(t, span.begin + h, span.end - h);

    const Vec3 b = field(out.t);
    const cplx bp{b.x, b.y}, bm{b.x, -b.y};
    const cplx mu3 = mu.at(out.t).mu3;
    const ComplexMatrix h_full = SpinRepresentation(1).hamiltonian(b);
    const ComplexMatrix u1 = u1_factor(mu3);
    const ComplexMatrix u1_inv = u1_inverse(mu3);
    out.rotated_hamiltonian = u1_inv * h_full * u1;

    const cplx dmu3 = detail::riccati_rate(mu3, bp, bm, b.z);
    out.connection = I_unit * u1_inv * u1_derivative(mu3, dmu3);
    out.analytic = out.rotated_hamiltonian - out.connection;

    // Centered differences at h and h/2, Richardson-combined.
    auto centered = [&](double step) -> ComplexMatrix {
        const ComplexMatrix up = u1_factor(detail::riccati_flow(field, mu3, out.t, out.t + step));
        const ComplexMatrix dn = u1_factor(detail::riccati_flow(field, mu3, out.t, out.t - step));
        return (up - dn) / (2.0 * step);
    };
    const ComplexMatrix du1 = (4.0 * centered(0.5 * h) - centered(h)) / 3.0;
    out.numerical = out.rotated_hamiltonian - I_unit * u1_inv * du1;

    const cplx dmu1 = detail::phase_rate(mu3, bp, b.z);
    out.closed_form = ComplexMatrix::Zero(2, 2);
    out.closed_form(0, 0) = 0.5 * dmu1;
    out.closed_form(1, 1) = -0.5 * dmu1;

    out.numerical_offdiag = detail::max_offdiag(out.numerical);
    out.numerical_mismatch = max_abs(out.numerical - out.closed_form);
    out.analytic_mismatch = std::max(std::abs(out.analytic(0, 0) - out.closed_form(0, 0)),
                                     std::abs(out.analytic(1, 1) - out.closed_form(1, 1)));
    return out;
}

// --- dynamical / geometric phase --------------------------------------------

/// Phases of the first basis component of U(t)(1,0)ᵀ, i.e. −½ × the μ₁-unit
/// quantities: total = −½ Re μ₁, dynamical = −½ ∫ Re[(U₁⁻¹HU₁)₁₁ − (U₁⁻¹HU₁)₂₂],
/// geometric = −½ ∫ Re[(−iU₁⁻¹U̇₁)₁₁ − (−iU₁⁻¹U̇₁)₂₂]. Values accumulate over
/// gauge segments.
struct PhaseSplit {
    double total_phase = 0.0;
    double dynamical_phase = 0.0;
    double geometric_phase = 0.0;
    double re_mu1_total = 0.0;  // Σ over segments of Re μ₁ at segment end
    std::vector<double> times;
    std::vector<double> dynamical_rate;  // Re[(U₁⁻¹HU₁)₁₁ − (U₁⁻¹HU₁)₂₂] per sample
    std::vector<double> geometric_rate;  // Re[(−iU₁⁻¹U̇₁)₁₁ − (−iU₁⁻¹U̇₁)₂₂] per sample

    double additivity_defect() const { return std::abs(total_phase - dynamical_phase - geometric_phase); }
};

namespace detail {

struct PhaseRates {
    double dynamical;
    double geometric;
};

inline PhaseRates phase_rates(cplx mu3, const Vec3& b) {
    const cplx bp{b.x, b.y}, bm{b.x, -b.y};
    const ComplexMatrix u1_inv = u1_inverse(mu3);
    const ComplexMatrix a = u1_inv * SpinRepresentation(1).hamiltonian(b) * u1_factor(mu3);
    const ComplexMatrix g =
        -I_unit * u1_inv * u1_derivative(mu3, riccati_rate(mu3, bp, bm, b.z));
    return {std::real(a(0, 0) - a(1, 1)), std::real(g(0, 0) - g(1, 1))};
}

// 8-point Gauss–Legendre nodes/weights on [−1, 1].
inline constexpr std::array<double, 8> gl_nodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> gl_weights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                  0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                  0.2223810344533745, 0.1012285362903763};

}  // namespace detail

inline PhaseSplit phase_split(const MuTrajectory& mu, const FieldProtocol& field) {
    PhaseSplit out;
    double dyn = 0.0, geo = 0.0;
    for (const MuSegment& seg : mu.segments()) {
        for (const DenseStep& step : seg.solution.steps()) {
            const double a = step.t0, b = step.t1;
            const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
            for (std::size_t i = 0; i < detail::gl_nodes.size(); ++i) {
                const double t = mid + half * detail::gl_nodes[i];
                const auto r = detail::phase_rates(step(t)[0], field(t));
                dyn += detail::gl_weights[i] * half * r.dynamical;
                geo += detail::gl_weights[i] * half * r.geometric;
            }
        }
        out.re_mu1_total += seg.end_values().mu1.real();
    }
    out.total_phase = -0.5 * out.re_mu1_total;
    out.dynamical_phase = -0.5 * dyn;
    out.geometric_phase = -0.5 * geo;

    out.times = mu.times();
    for (std::size_t i = 0; i < mu.times().size(); ++i) {
        const auto r = detail::phase_rates(mu.samples()[i].mu3, field(mu.times()[i]));
        out.dynamical_rate.push_back(r.dynamical);
        out.geometric_rate.push_back(r.geometric);
    }
    return out;
}

// --- independent oracle -----------------------------------------------------

/// exp(−iHΔ) for H = −B·σ/2 (spin 1/2): cos(|B|Δ/2) I + i sin(|B|Δ/2) B̂·σ.
inline ComplexMatrix spin_half_step(const Vec3& b, double dt) {
    const double mag = b.norm();
    ComplexMatrix u = ComplexMatrix::Identity(2, 2);
    if (mag == 0.0) return u;
    const double c = std::cos(0.5 * mag * dt), s = std::sin(0.5 * mag * dt);
    const double nx = b.x / mag, ny = b.y / mag, nz = b.z / mag;
    u(0, 0) = cplx(c, s * nz);
    u(1, 1) = cplx(c, -s * nz);
    u(0, 1) = I_unit * s * cplx(nx, -ny);
    u(1, 0) = I_unit * s * cplx(nx, ny);
    return u;
}

/// Midpoint-exponential stepping U ← exp(−iH(t+Δ/2)Δ) U.
inline ComplexMatrix direct_propagate(const FieldProtocol& field, const SpinRepresentation& rep, TimeSpan span,
                                      std::size_t n_steps) {
    if (n_steps < 1) throw InvalidInputError("direct_propagate: n_steps must be >= 1");
    const double dt = span.length() / static_cast<double>(n_steps);
    ComplexMatrix u = ComplexMatrix::Identity(rep.dim(), rep.dim());
    for (std::size_t i = 0; i < n_steps; ++i) {
        const Vec3 b = field(span.begin + (static_cast<double>(i) + 0.5) * dt);
        if (rep.twice_j() == 1) {
            u = spin_half_step(b, dt) * u;
        } else {
            u = mat_exp(-I_unit * dt * rep.hamiltonian(b)) * u;
        }
    }
    return u;
}

/// Richardson combination (4U(2n) − U(n))/3 of two midpoint runs.
inline ComplexMatrix direct_propagate_extrapolated(const FieldProtocol& field, const SpinRepresentation& rep,
                                                   TimeSpan span, std::size_t n_steps) {
    return (4.0 * direct_propagate(field, rep, span, 2 * n_steps) - direct_propagate(field, rep, span, n_steps)) / 3.0;
}

// --- trajectory diagnostics -------------------------------------------------

struct ConstraintDefects {
    double mu2 = 0.0;  // max |μ₂ − μ₃*/(1+|μ₃|²)|
    double mu1 = 0.0;  // max |e^{Im μ₁} − (1+|μ₃|²)| / (1+|μ₃|²)
};

inline ConstraintDefects constraint_defects(const MuValues& v) {
    const double q = 1.0 + std::norm(v.mu3);
    return {std::abs(v.mu2 - std::conj(v.mu3) / q), std::abs(std::exp(v.mu1.imag()) - q) / q};
}

/// Worst violation of the unitarity constraints over samples and every
/// accepted step end point.
inline ConstraintDefects constraint_defects(const MuTrajectory& mu) {
    ConstraintDefects worst;
    auto fold = [&worst](const MuValues& v) {
        const auto d = constraint_defects(v);
        worst.mu2 = std::max(worst.mu2, d.mu2);
        worst.mu1 = std::max(worst.mu1, d.mu1);
    };
    for (const auto& v : mu.samples()) fold(v);
    for (const auto& seg : mu.segments()) {
        for (const auto& step : seg.solution.steps()) {
            const StateVector y = step(step.t1);
            fold({y[2], y[1], y[0]});
        }
    }
    return worst;
}

}  // namespace effham
