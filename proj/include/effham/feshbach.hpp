#pragma once

// Projection-operator effective Hamiltonians for time-independent problems:
//
//   H_eff(E) = PHP + PHQ (E − QHQ)⁻¹ QHP
//
// acting on the closed (P) space, plus bound-state and resonance searches on
// finite models of a discretized continuum, and a time-domain survival
// oracle for the widths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "effham/errors.hpp"
#include "effham/numkit.hpp"

namespace effham {

using Index = Eigen::Index;

class PartitionedHamiltonian {
public:
    PartitionedHamiltonian() = default;

    /// `p_indices` need not be sorted; Q is the complement.
    PartitionedHamiltonian(ComplexMatrix h, std::vector<Index> p_indices) : h_(std::move(h)), p_(std::move(p_indices)) {
        require_square(h_, "PartitionedHamiltonian");
        require_finite(h_, "PartitionedHamiltonian");
        const double defect = hermiticity_defect(h_);
        if (defect > 1e-12 * std::max(1.0, max_abs(h_))) {
            throw InvalidInputError("PartitionedHamiltonian: H is not Hermitian (defect " + std::to_string(defect) + ")");
        }
        std::sort(p_.begin(), p_.end());
        if (std::adjacent_find(p_.begin(), p_.end()) != p_.end()) {
            throw InvalidInputError("PartitionedHamiltonian: duplicate P index");
        }
        if (p_.empty()) throw InvalidInputError("PartitionedHamiltonian: P-space is empty");
        if (p_.front() < 0 || p_.back() >= h_.rows()) throw RangeError("PartitionedHamiltonian: P index out of range");
        std::size_t k = 0;
        for (Index i = 0; i < h_.rows(); ++i) {
            if (k < p_.size() && p_[k] == i) ++k; else q_.push_back(i);
        }
    }

    const ComplexMatrix& h() const { return h_; }
    const std::vector<Index>& p_indices() const { return p_; }
    const std::vector<Index>& q_indices() const { return q_; }
    Index dim() const { return h_.rows(); }
    Index p_dim() const { return static_cast<Index>(p_.size()); }
    Index q_dim() const { return static_cast<Index>(q_.size()); }

    ComplexMatrix php() const { return h_(p_, p_); }
    ComplexMatrix phq() const { return h_(p_, q_); }
    ComplexMatrix qhp() const { return h_(q_, p_); }
    ComplexMatrix qhq() const { return h_(q_, q_); }

    /// Embed P- and Q-space pieces into a full-space vector.
    StateVector assemble(const StateVector& p_part, const StateVector& q_part) const {
        if (p_part.size() != p_dim() || q_part.size() != q_dim()) throw DimensionError("assemble: piece size mismatch");
        StateVector full(dim());
        full(p_) = p_part;
        full(q_) = q_part;
        return full;
    }

private:
    ComplexMatrix h_;
    std::vector<Index> p_, q_;
};

/// H_eff(E) = PHP + PHQ (E − QHQ)⁻¹ QHP via an LU solve on the Q block.
inline ComplexMatrix effective_hamiltonian(const PartitionedHamiltonian& ph, cplx energy) {
    ComplexMatrix heff = ph.php();
    if (ph.q_dim() > 0) {
        const ComplexMatrix resolvent_lhs =
            energy * ComplexMatrix::Identity(ph.q_dim(), ph.q_dim()) - ph.qhq();
        try {
            heff += ph.phq() * solve_linear(resolvent_lhs, ph.qhp());
        } catch (const SingularMatrixError& e) {
            throw SingularMatrixError("effective_hamiltonian: E = " + std::to_string(energy.real()) + "+" +
                                          std::to_string(energy.imag()) + "i hits the QHQ spectrum",
                                      e.pivot());
        }
    }
    if (heff.rows() != ph.p_dim() || heff.cols() != ph.p_dim()) {
        throw DimensionError("effective_hamiltonian: result is not |P|x|P|");
    }
    return heff;
}

/// Qψ = (E − QHQ)⁻¹ QHP Pψ.
inline StateVector q_component(const PartitionedHamiltonian& ph, cplx energy, const StateVector& p_psi) {
    if (p_psi.size() != ph.p_dim()) throw DimensionError("q_component: P-space vector has wrong dimension");
    if (ph.q_dim() == 0) return StateVector(0);
    const ComplexMatrix lhs = energy * ComplexMatrix::Identity(ph.q_dim(), ph.q_dim()) - ph.qhq();
    return solve_linear(lhs, ph.qhp() * p_psi);
}

/// Eigen-decomposition of a Hermitian matrix, using the real symmetric
/// solver when every entry is real.
struct HermitianEigen {
    RealVector values;
    ComplexMatrix vectors;
};

inline HermitianEigen hermitian_eigen(const ComplexMatrix& m, bool with_vectors = true) {
    const auto opts = with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly;
    HermitianEigen out;
    const bool real = m.imag().cwiseAbs().maxCoeff() == 0.0;
    if (real && m.rows() > 2 && is_tridiagonal(m)) {
        const Eigen::VectorXd diag = m.real().diagonal();
        const Eigen::VectorXd off = m.real().diagonal(-1);
        if (!with_vectors) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
            es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
            out.values = es.eigenvalues();
        } else {
            auto [values, vectors] = symmetric_tridiagonal_eigen(diag, off);
            out.values = std::move(values);
            out.vectors = vectors.cast<cplx>();
        }
    } else if (real) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.real(), opts);
        out.values = es.eigenvalues();
        if (with_vectors) out.vectors = es.eigenvectors().cast<cplx>();
    } else {
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, opts);
        out.values = es.eigenvalues();
        if (with_vectors) out.vectors = es.eigenvectors();
    }
    return out;
}

/// Spectral form of the Q-space resolvent, for repeated evaluations:
/// H_eff(z) = PHP + C diag(1/(z − q_k)) C†, with QHQ = V diag(q) V† and
/// C = PHQ·V.
class SpectralResolvent {
public:
    SpectralResolvent() = default;
    explicit SpectralResolvent(const PartitionedHamiltonian& ph) : php_(ph.php()) {
        if (ph.q_dim() > 0) {
            const HermitianEigen es = hermitian_eigen(ph.qhq());
            q_levels_ = es.values;
            coupling_ = ph.phq() * es.vectors;
        } else {
            coupling_ = ComplexMatrix::Zero(php_.rows(), 0);
        }
    }

    const RealVector& q_levels() const { return q_levels_; }
    const ComplexMatrix& php() const { return php_; }

    ComplexMatrix operator()(cplx z) const {
        ComplexMatrix heff = php_;
        if (q_levels_.size() == 0) return heff;
        Eigen::VectorXcd d(q_levels_.size());
        for (Index k = 0; k < q_levels_.size(); ++k) {
            const cplx gap = z - q_levels_[k];
            if (gap == 0.0) throw SingularMatrixError("SpectralResolvent: z on a QHQ level", 0.0);
            d[k] = 1.0 / gap;
        }
        heff.noalias() += coupling_ * d.asDiagonal() * coupling_.adjoint();
        return heff;
    }

    /// Mean level spacing of QHQ around `e` (from the nearest few levels).
    double level_spacing(double e, int neighbours = 4) const {
        const Index n = q_levels_.size();
        if (n < 2) return std::numeric_limits<double>::infinity();
        const auto* begin = q_levels_.data();
        Index k = std::lower_bound(begin, begin + n, e) - begin;
        Index lo = std::max<Index>(0, k - neighbours), hi = std::min<Index>(n - 1, k + neighbours);
        if (hi == lo) lo = std::max<Index>(0, hi - 1);
        return (q_levels_[hi] - q_levels_[lo]) / static_cast<double>(hi - lo);
    }

private:
    ComplexMatrix php_;
    RealVector q_levels_;
    ComplexMatrix coupling_;
};

struct EnergyWindow {
    double lo = 0.0;
    double hi = 0.0;
};

namespace detail {

inline RealVector hermitian_eigenvalues(const ComplexMatrix& m) {
    return hermitian_eigen(0.5 * (m + m.adjoint()), false).values;
}

}  // namespace detail

/// Real self-consistent energies λ_k(E) = E of H_eff(E) in `window`. Between
/// consecutive QHQ levels every sorted branch λ_k(E) − E is strictly
/// decreasing, so each branch has at most one root per interval; roots are
/// bracketed at the interval ends and bisected.
inline std::vector<double> bound_state_search(const PartitionedHamiltonian& ph, EnergyWindow window,
                                              double tol = 1e-13) {
    if (!(window.hi > window.lo)) throw InvalidInputError("bound_state_search: empty window");
    std::vector<double> poles;
    if (ph.q_dim() > 0) {
        const RealVector q = detail::hermitian_eigenvalues(ph.qhq());
        for (Index k = 0; k < q.size(); ++k) {
            if (q[k] > window.lo && q[k] < window.hi) poles.push_back(q[k]);
        }
    }
    const double scale = 1.0 + max_abs(ph.h());
    const double guard = 1e-9 * scale;

    std::vector<double> edges{window.lo};
    edges.insert(edges.end(), poles.begin(), poles.end());
    edges.push_back(window.hi);

    auto branch = [&ph](double e, Index k) { return detail::hermitian_eigenvalues(effective_hamiltonian(ph, e))[k] - e; };

    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        double a = edges[i], b = edges[i + 1];
        if (i > 0) a += guard;
        if (i + 2 < edges.size()) b -= guard;
        if (!(b > a)) continue;
        RealVector fa, fb;
        try {
            fa = detail::hermitian_eigenvalues(effective_hamiltonian(ph, a)) - RealVector::Constant(ph.p_dim(), a);
            fb = detail::hermitian_eigenvalues(effective_hamiltonian(ph, b)) - RealVector::Constant(ph.p_dim(), b);
        } catch (const SingularMatrixError&) {
            continue;
        }
        for (Index k = 0; k < ph.p_dim(); ++k) {
            if (fa[k] == 0.0) {
                roots.push_back(a);
                continue;
            }
            if (!(fa[k] > 0.0 && fb[k] < 0.0)) continue;
            double lo = a, hi = b;
            while (hi - lo > tol * std::max(1.0, std::abs(lo))) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                if (branch(mid, k) > 0.0) lo = mid; else hi = mid;
            }
            roots.push_back(0.5 * (lo + hi));
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

// --- finite models of a discretized continuum -------------------------------

struct FeshbachModel {
    enum class Kind { two_channel, grid_1d };

    Kind kind = Kind::two_channel;
    std::string name;
    PartitionedHamiltonian hamiltonian;
    ComplexMatrix h0;  // H = H0 + V
    ComplexMatrix v;
    double band_min = 0.0;  // extent of the QHQ spectrum
    double band_max = 0.0;
    double level_spacing = 0.0;  // nominal δE of the discretized continuum
    std::shared_ptr<const SpectralResolvent> resolvent;
    // grid-1d only
    std::vector<double> grid;
    std::vector<double> potential;
    double inner_radius = 0.0;
    double well_bottom = 0.0;
    double barrier_top = 0.0;
};

/// Discrete states at `bound_energies` (P-space) coupled to a uniform
/// continuum grid E_k = E_min + (k + ½)δE on [E_min, E_max] (Q-space) through
/// ⟨b|V|k⟩ = scale_b · v(E_k).
inline FeshbachModel make_two_channel(const std::vector<double>& bound_energies, double e_min, double e_max,
                                      int n_continuum, const std::function<double(double)>& coupling,
                                      std::vector<double> coupling_scale = {}) {
    if (bound_energies.empty()) throw InvalidInputError("two-channel: need at least one bound state");
    if (!(e_max > e_min) || n_continuum < 2) throw InvalidInputError("two-channel: bad continuum band");
    if (coupling_scale.empty()) coupling_scale.assign(bound_energies.size(), 1.0);
    if (coupling_scale.size() != bound_energies.size()) throw InvalidInputError("two-channel: coupling scale size");

    const Index nb = static_cast<Index>(bound_energies.size());
    const Index n = nb + n_continuum;
    const double de = (e_max - e_min) / n_continuum;
    FeshbachModel m;
    m.kind = FeshbachModel::Kind::two_channel;
    m.h0 = ComplexMatrix::Zero(n, n);
    m.v = ComplexMatrix::Zero(n, n);
    for (Index b = 0; b < nb; ++b) m.h0(b, b) = bound_energies[b];
    for (Index k = 0; k < n_continuum; ++k) {
        const double ek = e_min + (static_cast<double>(k) + 0.5) * de;
        m.h0(nb + k, nb + k) = ek;
        const double vk = coupling(ek);
        if (!std::isfinite(vk)) throw InvalidInputError("two-channel: non-finite coupling");
        for (Index b = 0; b < nb; ++b) {
            m.v(b, nb + k) = coupling_scale[b] * vk;
            m.v(nb + k, b) = coupling_scale[b] * vk;
        }
    }
    std::vector<Index> p(nb);
    for (Index b = 0; b < nb; ++b) p[b] = b;
    m.hamiltonian = PartitionedHamiltonian(m.h0 + m.v, p);
    m.resolvent = std::make_shared<const SpectralResolvent>(m.hamiltonian);
    m.band_min = e_min + 0.5 * de;
    m.band_max = e_max - 0.5 * de;
    m.level_spacing = de;
    return m;
}

/// Radial grid r_i = i·h (i = 1..n), H = −½ d²/dr² (three-point) + V(r),
/// ψ = 0 at r = 0 and r = (n+1)h. P-space: r ≤ r_c. H0 is the kinetic part.
inline FeshbachModel make_grid_1d(double spacing, int n_points, const std::function<double(double)>& potential,
                                  double inner_radius) {
    if (!(spacing > 0.0) || n_points < 3) throw InvalidInputError("grid-1d: bad grid");
    FeshbachModel m;
    m.kind = FeshbachModel::Kind::grid_1d;
    const Index n = n_points;
    const double t = 0.5 / (spacing * spacing);
    m.h0 = ComplexMatrix::Zero(n, n);
    m.v = ComplexMatrix::Zero(n, n);
    std::vector<Index> p;
    for (Index i = 0; i < n; ++i) {
        const double r = spacing * static_cast<double>(i + 1);
        const double vr = potential(r);
        if (!std::isfinite(vr)) throw InvalidInputError("grid-1d: non-finite potential");
        m.grid.push_back(r);
        m.potential.push_back(vr);
        m.h0(i, i) = 2.0 * t;
        if (i + 1 < n) {
            m.h0(i, i + 1) = -t;
            m.h0(i + 1, i) = -t;
        }
        m.v(i, i) = vr;
        if (r <= inner_radius) p.push_back(i);
    }
    if (p.empty() || static_cast<Index>(p.size()) == n) {
        throw InvalidInputError("grid-1d: inner radius must split the grid");
    }
    m.hamiltonian = PartitionedHamiltonian(m.h0 + m.v, p);
    m.inner_radius = inner_radius;
    m.well_bottom = *std::min_element(m.potential.begin(), m.potential.begin() + static_cast<long>(p.size()));
    m.barrier_top = *std::max_element(m.potential.begin(), m.potential.begin() + static_cast<long>(p.size()));
    m.resolvent = std::make_shared<const SpectralResolvent>(m.hamiltonian);
    const RealVector& q = m.resolvent->q_levels();
    m.band_min = q[0];
    m.band_max = q[q.size() - 1];
    m.level_spacing = m.resolvent->level_spacing(0.5 * (m.band_min + m.band_max));
    return m;
}

// --- resonance search -------------------------------------------------------

struct ResonanceResult {
    double energy = 0.0;          // E_r
    double width = 0.0;           // Γ
    double shift = 0.0;           // E_r − matched PHP eigenvalue
    double php_eigenvalue = 0.0;
    std::size_t branch = 0;
    struct Diagnostics {
        double residual = 0.0;  // |Re λ(E_r + iη) − E_r|
        double eta = 0.0;
        double width_at_2eta = 0.0;
        double level_spacing = 0.0;
        std::vector<std::string> warnings;
    } diagnostics;
};

struct ResonanceOptions {
    double eta_factor = 3.0;  // η = eta_factor · δE
    int scan_points = 201;
    double tol = 1e-12;
};

/// One point of the energy scan: E, and for each tracked branch λ(E + iη).
struct ScanPoint {
    double energy = 0.0;
    std::vector<cplx> eigenvalues;
};

struct ResonanceScan {
    double eta = 0.0;
    double level_spacing = 0.0;
    std::vector<ScanPoint> points;
    std::vector<ResonanceResult> resonances;
};

namespace detail {

struct Eigenpairs {
    Eigen::VectorXcd values;
    ComplexMatrix vectors;  // columns normalised
};

inline Eigenpairs eigenpairs(const ComplexMatrix& m) {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(m);
    if (es.info() != Eigen::Success) throw InvalidInputError("resonance_search: eigen-decomposition failed");
    Eigenpairs out{es.eigenvalues(), es.eigenvectors()};
    out.vectors.colwise().normalize();
    return out;
}

/// Greedy overlap matching: result[k] = column of `next` continuing branch k.
inline std::vector<Index> match_branches(const ComplexMatrix& prev, const ComplexMatrix& next) {
    const Index n = prev.cols();
    const Eigen::MatrixXd overlap = (prev.adjoint() * next).cwiseAbs();
    std::vector<Index> result(n, -1);
    std::vector<bool> row_used(n, false), col_used(n, false);
    for (Index round = 0; round < n; ++round) {
        double best = -1.0;
        Index bi = 0, bj = 0;
        for (Index i = 0; i < n; ++i) {
            if (row_used[i]) continue;
            for (Index j = 0; j < n; ++j) {
                if (!col_used[j] && overlap(i, j) > best) {
                    best = overlap(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        row_used[bi] = col_used[bj] = true;
        result[bi] = bj;
    }
    return result;
}

inline Index best_overlap(const StateVector& v, const ComplexMatrix& candidates) {
    Index best = 0;
    (candidates.adjoint() * v).cwiseAbs().maxCoeff(&best);
    return best;
}

}  // namespace detail

/// Scans H_eff(E + iη) over the window, tracks each P-space branch by
/// eigenvector overlap, and reports the self-consistent points
/// Re λ(E_r + iη) = E_r with Γ = −2 Im λ(E_r + iη).
inline ResonanceScan resonance_search(const FeshbachModel& model, EnergyWindow window,
                                      const ResonanceOptions& opts = {}) {
    if (!(window.hi > window.lo)) throw InvalidInputError("resonance_search: empty window");
    if (opts.scan_points < 3) throw InvalidInputError("resonance_search: need at least 3 scan points");
    if (!(opts.eta_factor > 0.0)) throw InvalidInputError("resonance_search: eta factor must be positive");
    if (window.hi < model.band_min || window.lo > model.band_max) {
        throw NoContinuumError("resonance_search: window [" + std::to_string(window.lo) + ", " +
                               std::to_string(window.hi) + "] lies outside the continuum band [" +
                               std::to_string(model.band_min) + ", " + std::to_string(model.band_max) + "]");
    }
    const PartitionedHamiltonian& ph = model.hamiltonian;
    const SpectralResolvent local = model.resolvent ? SpectralResolvent{} : SpectralResolvent(ph);
    const SpectralResolvent& resolvent = model.resolvent ? *model.resolvent : local;

    ResonanceScan scan;
    scan.level_spacing = resolvent.level_spacing(0.5 * (window.lo + window.hi));
    scan.eta = opts.eta_factor * scan.level_spacing;
    const double eta = scan.eta;

    const Index np = ph.p_dim();
    std::vector<ComplexMatrix> branch_vectors;  // per scan point, columns in branch order
    std::vector<Eigen::VectorXcd> branch_values;

    for (int i = 0; i < opts.scan_points; ++i) {
        const double e = window.lo + (window.hi - window.lo) * i / (opts.scan_points - 1);
        detail::Eigenpairs ep = detail::eigenpairs(resolvent({e, eta}));
        ComplexMatrix vecs(np, np);
        Eigen::VectorXcd vals(np);
        if (i == 0) {
            std::vector<Index> order(np);
            for (Index k = 0; k < np; ++k) order[k] = k;
            std::sort(order.begin(), order.end(),
                      [&ep](Index a, Index b) { return ep.values[a].real() < ep.values[b].real(); });
            for (Index k = 0; k < np; ++k) {
                vecs.col(k) = ep.vectors.col(order[k]);
                vals[k] = ep.values[order[k]];
            }
        } else {
            const auto match = detail::match_branches(branch_vectors.back(), ep.vectors);
            for (Index k = 0; k < np; ++k) {
                vecs.col(k) = ep.vectors.col(match[k]);
                vals[k] = ep.values[match[k]];
            }
        }
        branch_vectors.push_back(std::move(vecs));
        branch_values.push_back(vals);
        ScanPoint pt{e, std::vector<cplx>(vals.data(), vals.data() + np)};
        scan.points.push_back(std::move(pt));
    }

    // Branch eigenpair at an arbitrary E, continuing the branch vector `ref`.
    auto follow = [&](double e, double im, const StateVector& ref) {
        detail::Eigenpairs ep = detail::eigenpairs(resolvent({e, im}));
        const Index j = detail::best_overlap(ref, ep.vectors);
        return std::pair<cplx, StateVector>{ep.values[j], ep.vectors.col(j)};
    };

    const detail::Eigenpairs php_pairs = detail::eigenpairs(ph.php());

    for (Index k = 0; k < np; ++k) {
        for (int i = 0; i + 1 < opts.scan_points; ++i) {
            const double ea = scan.points[i].energy, eb = scan.points[i + 1].energy;
            const double fa = branch_values[i][k].real() - ea;
            const double fb = branch_values[i + 1][k].real() - eb;
            if (!(fa >= 0.0 && fb < 0.0) && !(fa <= 0.0 && fb > 0.0)) continue;
            if (fa == 0.0 && i > 0) continue;

            double lo = ea, hi = eb, flo = fa;
            StateVector ref = branch_vectors[i].col(k);
            while (hi - lo > opts.tol * std::max(1.0, std::abs(lo))) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                auto [lam, vec] = follow(mid, eta, ref);
                const double fm = lam.real() - mid;
                if ((fm > 0.0) == (flo > 0.0)) {
                    lo = mid;
                    flo = fm;
                    ref = vec;
                } else {
                    hi = mid;
                }
            }
            ResonanceResult res;
            res.energy = 0.5 * (lo + hi);
            res.branch = static_cast<std::size_t>(k);
            auto [lam, vec] = follow(res.energy, eta, ref);
            res.width = -2.0 * lam.imag();
            res.diagnostics.residual = std::abs(lam.real() - res.energy);
            res.diagnostics.eta = eta;
            res.diagnostics.level_spacing = scan.level_spacing;
            res.diagnostics.width_at_2eta = -2.0 * follow(res.energy, 2.0 * eta, vec).first.imag();
            if (opts.eta_factor < 1.0) res.diagnostics.warnings.push_back("eta below the continuum level spacing");
            if (res.width < 0.0) {
                res.diagnostics.warnings.push_back("negative width clipped to zero");
                res.width = 0.0;
            }
            const Index j = detail::best_overlap(vec, php_pairs.vectors);
            res.php_eigenvalue = php_pairs.values[j].real();
            res.shift = res.energy - res.php_eigenvalue;
            scan.resonances.push_back(std::move(res));
        }
    }
    std::sort(scan.resonances.begin(), scan.resonances.end(),
              [](const ResonanceResult& a, const ResonanceResult& b) { return a.energy < b.energy; });
    return scan;
}

// --- time-domain oracle -----------------------------------------------------

struct DecayFit {
    double rate = 0.0;           // fitted −d ln P / dt
    double residual = 0.0;       // RMS deviation of ln P from the fit
    double window_start = 0.0;   // fit window in time
    double window_end = 0.0;
    std::size_t fit_points = 0;
    double recurrence_time = 0.0;  // 2π/δE near the initial state's energy
    bool beyond_recurrence = false;
    bool revival_detected = false;
    bool non_exponential = false;
    std::vector<double> times;
    std::vector<double> survival;
};

struct DecayOptions {
    double fit_upper = 0.9;   // fit P between these survival levels
    double fit_lower = 1e-3;
    double residual_threshold = 0.05;
};

/// Survival probability |⟨φ|e^{−iHt}|φ⟩|² of a P-space state φ under the full
/// discretized H, evaluated exactly through the spectral decomposition of H
/// on a uniform time grid, and an exponential fit of its decay.
inline DecayFit decay_oracle(const FeshbachModel& model, const StateVector& p_state, double t_final,
                             std::size_t n_steps, const DecayOptions& opts = {}) {
    const PartitionedHamiltonian& ph = model.hamiltonian;
    if (p_state.size() != ph.p_dim()) throw DimensionError("decay_oracle: initial state must live in P-space");
    if (!(t_final > 0.0) || n_steps < 2) throw InvalidInputError("decay_oracle: need T > 0 and >= 2 steps");
    const double nrm = p_state.norm();
    if (!(nrm > 0.0)) throw InvalidInputError("decay_oracle: zero initial state");

    StateVector phi = ph.assemble(p_state / nrm, StateVector::Zero(ph.q_dim()));
    const HermitianEigen es = hermitian_eigen(ph.h());
    const RealVector& levels = es.values;
    const RealVector weights = (es.vectors.adjoint() * phi).cwiseAbs2();

    DecayFit fit;
    const double e0 = std::real(phi.dot(ph.h() * phi));
    const double de = model.resolvent ? model.resolvent->level_spacing(e0) : SpectralResolvent(ph).level_spacing(e0);
    fit.recurrence_time = 2.0 * std::numbers::pi / de;
    fit.beyond_recurrence = t_final > fit.recurrence_time;

    for (std::size_t s = 0; s <= n_steps; ++s) {
        const double t = t_final * static_cast<double>(s) / static_cast<double>(n_steps);
        cplx amp = 0.0;
        for (Index k = 0; k < levels.size(); ++k) amp += weights[k] * std::exp(-I_unit * levels[k] * t);
        fit.times.push_back(t);
        fit.survival.push_back(std::norm(amp));
    }

    // Fit window: first contiguous run with fit_lower <= P <= fit_upper.
    std::size_t first = fit.survival.size(), last = first;
    for (std::size_t s = 0; s < fit.survival.size(); ++s) {
        if (fit.survival[s] <= opts.fit_upper) {
            first = s;
            break;
        }
    }
    for (std::size_t s = first; s < fit.survival.size(); ++s) {
        if (fit.survival[s] < opts.fit_lower) break;
        last = s;
    }
    if (first < fit.survival.size() && last != fit.survival.size() && last > first + 1) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(last - first + 1);
        for (std::size_t s = first; s <= last; ++s) {
            const double x = fit.times[s], y = std::log(fit.survival[s]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / n;
        double ss = 0.0;
        for (std::size_t s = first; s <= last; ++s) {
            const double d = std::log(fit.survival[s]) - (intercept + slope * fit.times[s]);
            ss += d * d;
        }
        fit.rate = -slope;
        fit.residual = std::sqrt(ss / n);
        fit.window_start = fit.times[first];
        fit.window_end = fit.times[last];
        fit.fit_points = last - first + 1;
        fit.non_exponential = fit.residual > opts.residual_threshold;
    }

    // Revival: survival climbs well back above its running minimum.
    double running_min = 1.0;
    for (double p : fit.survival) {
        running_min = std::min(running_min, p);
        if (running_min < 0.5 && p > std::max(10.0 * running_min, running_min + 0.05)) {
            fit.revival_detected = true;
            break;
        }
    }
    return fit;
}

}  // namespace effham
