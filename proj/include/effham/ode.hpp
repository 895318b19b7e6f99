#pragma once

// Dormand–Prince 5(4) integrator for complex state vectors with PI step
// control, Hairer's 4th-order continuous extension, and an optional stop
// event used by the gauge-restart logic of the propagator.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "effham/errors.hpp"
#include "effham/numkit.hpp"

namespace effham {

struct OdeSettings {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0.0;  // 0 selects an automatic first step
    std::size_t max_steps = 10'000'000;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
            throw InvalidInputError("OdeSettings: tolerances must be strictly positive");
        }
        if (!(max_step > 0.0)) throw InvalidInputError("OdeSettings: max_step must be positive");
        if (initial_step < 0.0 || !std::isfinite(initial_step)) {
            throw InvalidInputError("OdeSettings: initial_step must be finite and non-negative");
        }
    }
};

struct TimeSpan {
    double begin = 0.0;
    double end = 0.0;

    double length() const { return end - begin; }
    bool contains(double t, double slack = 0.0) const {
        const double lo = std::min(begin, end), hi = std::max(begin, end);
        return t >= lo - slack && t <= hi + slack;
    }
};

/// One accepted step together with its interpolating polynomial. The
/// polynomial is parameterised over [t0, t0 + h]; `t1` may be shorter when
/// the step was cut by a stop event.
struct DenseStep {
    double t0 = 0.0;
    double h = 0.0;
    double t1 = 0.0;
    std::array<StateVector, 5> coeff;

    StateVector operator()(double t) const {
        const double s = (t - t0) / h;
        const double s1 = 1.0 - s;
        return coeff[0] + s * (coeff[1] + s1 * (coeff[2] + s * (coeff[3] + s1 * coeff[4])));
    }
};

struct OdeSolutionBuilder;

class OdeSolution {
public:
    OdeSolution() = default;
    OdeSolution(double t0, StateVector y0) : t_begin_(t0), t_end_(t0), y_end_(y0), y_begin_(std::move(y0)) {}

    double t_begin() const { return t_begin_; }
    double t_end() const { return t_end_; }
    const StateVector& initial_state() const { return y_begin_; }
    const StateVector& final_state() const { return y_end_; }
    const std::vector<DenseStep>& steps() const { return steps_; }
    bool stopped_by_event() const { return stopped_; }
    std::size_t rejected_steps() const { return rejected_; }

    bool covers(double t) const { return TimeSpan{t_begin_, t_end_}.contains(t, 1e-12 * (1.0 + std::abs(t))); }

    /// Dense-output evaluation; exact step end points are returned verbatim.
    StateVector operator()(double t) const {
        if (!covers(t)) {
            throw RangeError("OdeSolution: t = " + std::to_string(t) + " outside [" + std::to_string(t_begin_) +
                             ", " + std::to_string(t_end_) + "]");
        }
        if (steps_.empty() || t == t_begin_) return y_begin_;
        if (t == t_end_) return y_end_;
        const bool forward = t_end_ > t_begin_;
        auto it = std::lower_bound(steps_.begin(), steps_.end(), t, [forward](const DenseStep& s, double v) {
            return forward ? s.t1 < v : s.t1 > v;
        });
        if (it == steps_.end()) it = std::prev(steps_.end());
        return (*it)(t);
    }

    std::vector<StateVector> sample(std::span<const double> times) const {
        std::vector<StateVector> out;
        out.reserve(times.size());
        for (double t : times) out.push_back((*this)(t));
        return out;
    }

private:
    friend struct OdeSolutionBuilder;

    double t_begin_ = 0.0;
    double t_end_ = 0.0;
    StateVector y_end_;
    StateVector y_begin_;
    std::vector<DenseStep> steps_;
    bool stopped_ = false;
    std::size_t rejected_ = 0;
};

namespace detail {

// Dormand–Prince tableau.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                            a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                            d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                            d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

// RMS over real and imaginary parts as separate components, so that a small
// part is not controlled relative to a large partner.
inline double error_norm(const StateVector& err, const StateVector& y0, const StateVector& y1,
                         const OdeSettings& s) {
    double acc = 0.0;
    auto add = [&](double e, double a, double b) {
        const double q = e / (s.abs_tol + s.rel_tol * std::max(std::abs(a), std::abs(b)));
        acc += q * q;
    };
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        add(err[i].real(), y0[i].real(), y1[i].real());
        add(err[i].imag(), y0[i].imag(), y1[i].imag());
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(2 * err.size(), 1)));
}

}  // namespace detail

using StopEvent = std::function<double(double, const StateVector&)>;

struct OdeSolutionBuilder {
    OdeSolution sol;
    void push(DenseStep step) { sol.steps_.push_back(std::move(step)); }
    void reject() { ++sol.rejected_; }
    OdeSolution finish(double t_end, StateVector y_end, bool stopped) {
        sol.t_end_ = t_end;
        sol.y_end_ = std::move(y_end);
        sol.stopped_ = stopped;
        if (!sol.steps_.empty()) sol.steps_.back().t1 = t_end;
        return std::move(sol);
    }
};

/// Integrates y' = f(t, y) over `span` (either direction). If `stop` is given,
/// integration ends at the first time it changes sign from negative to
/// non-negative; the crossing is located on the dense output.
template <class Rhs>
OdeSolution ode_integrate(Rhs&& f, const StateVector& y0, TimeSpan span, const OdeSettings& settings,
                          const StopEvent& stop = {}) {
    using T = detail::Dopri5;
    settings.validate();
    if (!y0.allFinite()) throw InvalidInputError("ode_integrate: non-finite initial state");
    if (!std::isfinite(span.begin) || !std::isfinite(span.end)) {
        throw InvalidInputError("ode_integrate: non-finite time span");
    }

    OdeSolutionBuilder out{OdeSolution(span.begin, y0)};
    if (span.end == span.begin) return std::move(out.sol);

    const double dir = span.end > span.begin ? 1.0 : -1.0;
    const double total = std::abs(span.length());
    const double max_step = std::min(settings.max_step, total);

    double t = span.begin;
    StateVector y = y0;
    StateVector k1 = f(t, y);
    if (!k1.allFinite()) throw SingularityError("ode_integrate: derivative not finite at start", t);

    double h;
    if (settings.initial_step > 0.0) {
        h = std::min(settings.initial_step, max_step);
    } else {
        // Hairer's starting-step heuristic.
        StateVector sc = (settings.abs_tol + settings.rel_tol * y.array().abs()).cast<cplx>();
        const double dnf = (k1.array() / sc.array()).abs2().sum();
        const double dny = (y.array() / sc.array()).abs2().sum();
        double h0 = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
        h0 = std::min(h0, max_step);
        const StateVector y1 = y + dir * h0 * k1;
        const StateVector k2 = f(t + dir * h0, y1);
        const double der2 = k2.allFinite() ? std::sqrt(((k2 - k1).array() / sc.array()).abs2().sum()) / h0 : 1e30;
        const double der12 = std::max(der2, std::sqrt(dnf));
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der12, 0.2);
        h = std::min({100 * h0, h1, max_step});
    }

    constexpr double safe = 0.9, beta = 0.04, facc1 = 1.0 / 0.2, facc2 = 1.0 / 10.0;
    const double expo1 = 0.2 - beta * 0.75;
    double facold = 1e-4;
    bool last_rejected = false;
    double g_prev = stop ? stop(t, y) : -1.0;

    std::size_t n_steps = 0;
    while (dir * (span.end - t) > 0.0) {
        if (++n_steps > settings.max_steps) {
            throw SingularityError("ode_integrate: step budget exhausted at t = " + std::to_string(t), t);
        }
        if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
            throw SingularityError("ode_integrate: step size underflow at t = " + std::to_string(t), t);
        }
        bool final_step = false;
        if (dir * (t + dir * h - span.end) >= 0.0 || std::abs(span.end - (t + dir * h)) < 1e-12 * h) {
            h = std::abs(span.end - t);
            final_step = true;
        }
        const double hs = dir * h;

        const StateVector k2 = f(t + T::c2 * hs, y + hs * T::a21 * k1);
        const StateVector k3 = f(t + T::c3 * hs, y + hs * (T::a31 * k1 + T::a32 * k2));
        const StateVector k4 = f(t + T::c4 * hs, y + hs * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
        const StateVector k5 =
            f(t + T::c5 * hs, y + hs * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
        const StateVector k6 = f(t + hs, y + hs * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 +
                                                   T::a65 * k5));
        const StateVector y1 =
            y + hs * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
        const StateVector k7 = f(t + hs, y1);

        double err = std::numeric_limits<double>::infinity();
        if (y1.allFinite() && k7.allFinite()) {
            const StateVector e =
                hs * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
            err = detail::error_norm(e, y, y1, settings);
        }

        if (!(err <= 1.0)) {
            out.reject();
            const double fac11 = std::isfinite(err) ? std::pow(err, expo1) : facc1;
            h /= std::min(facc1, fac11 / safe);
            last_rejected = true;
            continue;
        }

        DenseStep step;
        step.t0 = t;
        step.h = hs;
        step.t1 = t + hs;
        const StateVector ydiff = y1 - y;
        const StateVector bspl = hs * k1 - ydiff;
        step.coeff[0] = y;
        step.coeff[1] = ydiff;
        step.coeff[2] = bspl;
        step.coeff[3] = ydiff - hs * k7 - bspl;
        step.coeff[4] = hs * (T::d1 * k1 + T::d3 * k3 + T::d4 * k4 + T::d5 * k5 + T::d6 * k6 + T::d7 * k7);

        const double t_new = final_step ? span.end : t + hs;

        if (stop) {
            const double g_new = stop(t_new, y1);
            if (g_prev < 0.0 && g_new >= 0.0) {
                double lo = t, hi = t_new;
                for (int it = 0; it < 200 && std::abs(hi - lo) > 4 * std::numeric_limits<double>::epsilon() *
                                                                     std::max(1.0, std::abs(hi));
                     ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (stop(mid, step(mid)) >= 0.0) hi = mid; else lo = mid;
                }
                StateVector y_stop = step(hi);
                out.push(std::move(step));
                return out.finish(hi, std::move(y_stop), true);
            }
            g_prev = g_new;
        }

        out.push(std::move(step));
        t = t_new;
        y = y1;
        k1 = k7;

        const double fac11 = std::pow(err, expo1);
        double fac = fac11 / std::pow(facold, beta);
        fac = std::max(facc2, std::min(facc1, fac / safe));
        double h_new = h / fac;
        if (last_rejected) h_new = std::min(h_new, h);
        facold = std::max(err, 1e-4);
        last_rejected = false;
        h = std::min(h_new, max_step);
    }

    return out.finish(span.end, std::move(y), false);
}

}  // namespace effham
