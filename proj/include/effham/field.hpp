#pragma once

// Time-dependent magnetic fields B(t) driving H(t) = −J·B(t). Units: energy
// with ħ = 1 and the magnetic moment absorbed into B.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "effham/errors.hpp"
#include "effham/numkit.hpp"
#include "effham/ode.hpp"

namespace effham {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Natural cubic spline through (t_i, v_i).
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> t, std::vector<double> v) : t_(std::move(t)), v_(std::move(v)) {
        const std::size_t n = t_.size();
        if (n < 2 || v_.size() != n) throw InvalidInputError("CubicSpline: need >= 2 matching knots");
        for (std::size_t i = 1; i < n; ++i) {
            if (!(t_[i] > t_[i - 1])) throw InvalidInputError("CubicSpline: knots must be strictly increasing");
        }
        m_.assign(n, 0.0);
        if (n == 2) return;
        // Tridiagonal solve for second derivatives, natural end conditions.
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = t_[i] - t_[i - 1], h1 = t_[i + 1] - t_[i];
            const double a = h0 / 6.0, b = (h0 + h1) / 3.0, cc = h1 / 6.0;
            const double rhs = (v_[i + 1] - v_[i]) / h1 - (v_[i] - v_[i - 1]) / h0;
            const double denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = d[i] - c[i] * m_[i + 1];
            if (i == 1) break;
        }
    }

    double operator()(double t) const {
        const std::size_t n = t_.size();
        std::size_t k = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin());
        k = std::clamp<std::size_t>(k, 1, n - 1);
        const double h = t_[k] - t_[k - 1];
        const double a = (t_[k] - t) / h, b = (t - t_[k - 1]) / h;
        return a * v_[k - 1] + b * v_[k] + ((a * a * a - a) * m_[k - 1] + (b * b * b - b) * m_[k]) * h * h / 6.0;
    }

    double front() const { return t_.front(); }
    double back() const { return t_.back(); }

private:
    std::vector<double> t_, v_, m_;
};

class FieldProtocol {
public:
    struct Constant {
        Vec3 b;
    };
    /// Frame in which a rotating-cone field is expressed. `lab`: cone axis
    /// along z. `field_aligned`: rotated about y so that B(0) points along +z.
    /// `cyclic`: rotated so that the rotating-frame field B(0) + ωẑ points
    /// along +z, making the basis state (1,0) the cyclic state whose Bloch
    /// vector traces a closed cone in one period.
    enum class ConeFrame { lab, field_aligned, cyclic };

    /// B0 (sinθ cos ωt, sinθ sin ωt, cosθ), then rotated per `frame`.
    struct RotatingCone {
        double b0 = 1.0;
        double theta = 0.0;
        double omega = 0.0;
        ConeFrame frame = ConeFrame::cyclic;

        double tilt() const {
            switch (frame) {
                case ConeFrame::lab: return 0.0;
                case ConeFrame::field_aligned: return theta;
                case ConeFrame::cyclic: return std::atan2(b0 * std::sin(theta), b0 * std::cos(theta) + omega);
            }
            return 0.0;
        }
    };
    /// B(t) = start + rate·t.
    struct LinearRamp {
        Vec3 start;
        Vec3 rate;
    };
    struct Tabulated {
        std::vector<double> times;
        std::vector<Vec3> values;
        CubicSpline sx, sy, sz;
    };

    FieldProtocol() : spec_(Constant{}) {}

    static FieldProtocol constant(Vec3 b) { return FieldProtocol(Constant{b}); }
    static FieldProtocol zero() { return constant({}); }
    static FieldProtocol rotating_cone(double b0, double theta, double omega, ConeFrame frame = ConeFrame::cyclic) {
        if (!std::isfinite(b0) || !std::isfinite(theta) || !std::isfinite(omega)) {
            throw InvalidInputError("rotating-cone: non-finite parameter");
        }
        return FieldProtocol(RotatingCone{b0, theta, omega, frame});
    }
    static FieldProtocol linear_ramp(Vec3 start, Vec3 rate) { return FieldProtocol(LinearRamp{start, rate}); }
    static FieldProtocol tabulated(std::vector<double> times, std::vector<Vec3> values) {
        if (times.size() != values.size()) throw InvalidInputError("tabulated field: size mismatch");
        std::vector<double> x, y, z;
        for (const auto& v : values) {
            if (!v.finite()) throw InvalidInputError("tabulated field: non-finite sample");
            x.push_back(v.x);
            y.push_back(v.y);
            z.push_back(v.z);
        }
        Tabulated tab{times, std::move(values), CubicSpline(times, x), CubicSpline(times, y), CubicSpline(times, z)};
        return FieldProtocol(std::move(tab));
    }

    Vec3 operator()(double t) const {
        return std::visit(
            [t](const auto& s) -> Vec3 {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Constant>) {
                    return s.b;
                } else if constexpr (std::is_same_v<S, RotatingCone>) {
                    const double st = std::sin(s.theta), ct = std::cos(s.theta);
                    const double x = s.b0 * st * std::cos(s.omega * t);
                    const double y = s.b0 * st * std::sin(s.omega * t);
                    const double z = s.b0 * ct;
                    const double tilt = s.tilt();
                    if (tilt == 0.0) return {x, y, z};
                    const double sa = std::sin(tilt), ca = std::cos(tilt);
                    return {x * ca - z * sa, y, x * sa + z * ca};
                } else if constexpr (std::is_same_v<S, LinearRamp>) {
                    return {s.start.x + s.rate.x * t, s.start.y + s.rate.y * t, s.start.z + s.rate.z * t};
                } else {
                    if (t < s.times.front() - 1e-12 || t > s.times.back() + 1e-12) {
                        throw RangeError("tabulated field evaluated outside its samples");
                    }
                    return {s.sx(t), s.sy(t), s.sz(t)};
                }
            },
            spec_);
    }

    cplx b_plus(double t) const {
        const Vec3 b = (*this)(t);
        return {b.x, b.y};
    }
    cplx b_minus(double t) const {
        const Vec3 b = (*this)(t);
        return {b.x, -b.y};
    }

    std::string kind() const {
        return std::visit(
            [](const auto& s) -> std::string {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Constant>) return "constant";
                else if constexpr (std::is_same_v<S, RotatingCone>) return "rotating-cone";
                else if constexpr (std::is_same_v<S, LinearRamp>) return "linear-ramp";
                else return "tabulated";
            },
            spec_);
    }

    const auto& spec() const { return spec_; }

    /// ∫|B| dt by composite Simpson on n intervals.
    double integrated_magnitude(TimeSpan span, int n = 2000) const {
        const double h = span.length() / n;
        double acc = (*this)(span.begin).norm() + (*this)(span.end).norm();
        for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * (*this)(span.begin + i * h).norm();
        return std::abs(acc * h / 3.0);
    }

private:
    using Spec = std::variant<Constant, RotatingCone, LinearRamp, Tabulated>;
    explicit FieldProtocol(Spec s) : spec_(std::move(s)) {}
    Spec spec_;
};

/// Seeded variates built directly on mt19937_64 output (no std
/// distributions), so streams are identical across standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box–Muller, one variate per call.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 gen_;
};

/// Random smooth field tabulated on `n_knots` points: a sum of a few low
/// harmonics per component, rescaled so that ∫|B| dt equals `integrated`.
/// `transverse` scales the z component before normalisation; values < 1
/// favour near-complete spin flips (and hence gauge restarts).
inline FieldProtocol random_smooth_field(std::uint64_t seed, TimeSpan span, double integrated, int n_knots = 41,
                                         int n_harmonics = 3, double transverse = 1.0) {
    SeededRng rng(seed);
    struct Term {
        double amp, freq, phase;
    };
    std::vector<std::vector<Term>> comps(3);
    std::vector<double> offset(3);
    for (int c = 0; c < 3; ++c) {
        offset[c] = rng.uniform(-1.0, 1.0);
        for (int k = 1; k <= n_harmonics; ++k) {
            comps[c].push_back({rng.uniform(-1.0, 1.0) / k, k * std::numbers::pi / span.length(),
                                rng.uniform(0.0, 2.0 * std::numbers::pi)});
        }
    }
    std::vector<double> times;
    std::vector<Vec3> values;
    for (int i = 0; i < n_knots; ++i) {
        const double t = span.begin + span.length() * i / (n_knots - 1);
        double v[3];
        for (int c = 0; c < 3; ++c) {
            v[c] = offset[c];
            for (const auto& term : comps[c]) v[c] += term.amp * std::cos(term.freq * (t - span.begin) + term.phase);
        }
        times.push_back(t);
        values.push_back({v[0], v[1], transverse * v[2]});
    }
    const double raw = FieldProtocol::tabulated(times, values).integrated_magnitude(span);
    const double scale = raw > 0.0 ? integrated / raw : 0.0;
    for (auto& v : values) v = {v.x * scale, v.y * scale, v.z * scale};
    return FieldProtocol::tabulated(std::move(times), std::move(values));
}

}  // namespace effham
