#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "effham/su2_propagator.hpp"
#include "support.hpp"

using namespace effham;

namespace {

OdeSettings tight() {
    OdeSettings s;
    s.rel_tol = 1e-12;
    s.abs_tol = 1e-14;
    return s;
}

ComplexMatrix sigma_z() {
    ComplexMatrix s = ComplexMatrix::Zero(2, 2);
    s(0, 0) = 1.0;
    s(1, 1) = -1.0;
    return s;
}

}  // namespace

TEST(Field, PlusMinusConjugate) {
    const auto f = FieldProtocol::rotating_cone(1.3, 0.7, 0.4, FieldProtocol::ConeFrame::lab);
    for (double t : {0.0, 0.9, 4.2}) {
        EXPECT_EQ(f.b_minus(t), std::conj(f.b_plus(t)));
        EXPECT_NEAR(f(t).norm(), 1.3, 1e-14);
    }
}

TEST(Field, TabulatedReproducesKnotsAndRejectsOutside) {
    const auto f = FieldProtocol::tabulated({0.0, 1.0, 2.0, 3.0}, {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {0, 0, -1}});
    EXPECT_NEAR(f(1.0).x, 1.0, 1e-15);
    EXPECT_NEAR(f(2.0).y, 1.0, 1e-15);
    EXPECT_THROW(f(3.5), RangeError);
}

TEST(Field, RandomFieldHasRequestedIntegratedMagnitude) {
    const auto f = random_smooth_field(4, {0.0, 3.0}, 12.5);
    EXPECT_NEAR(f.integrated_magnitude({0.0, 3.0}), 12.5, 1e-9);
}

TEST(Spin, CommutationRelations) {
    for (int twice_j = 1; twice_j <= 5; ++twice_j) {
        const SpinRepresentation rep(twice_j);
        EXPECT_LT(max_abs(commutator(rep.jz(), rep.jplus()) - rep.jplus()), 1e-12);
        EXPECT_LT(max_abs(commutator(rep.jz(), rep.jminus()) + rep.jminus()), 1e-12);
        EXPECT_LT(max_abs(commutator(rep.jplus(), rep.jminus()) - 2.0 * rep.jz()), 1e-12);
    }
    EXPECT_THROW(SpinRepresentation::from_j(0.75), InvalidInputError);
}

TEST(IntegrateMu, ZeroField) {
    const auto mu = integrate_mu(FieldProtocol::zero(), {0.0, 3.0}, {});
    for (const auto& v : mu.samples()) {
        EXPECT_EQ(v.mu1, cplx(0.0));
        EXPECT_EQ(v.mu2, cplx(0.0));
        EXPECT_EQ(v.mu3, cplx(0.0));
    }
}

TEST(IntegrateMu, LongitudinalField) {
    const double b3 = 0.8;
    const auto mu = integrate_mu(FieldProtocol::constant({0, 0, b3}), {0.0, 2.0}, {});
    for (std::size_t i = 0; i < mu.times().size(); ++i) {
        const double t = mu.times()[i];
        EXPECT_EQ(mu.samples()[i].mu3, cplx(0.0));
        EXPECT_EQ(mu.samples()[i].mu2, cplx(0.0));
        EXPECT_NEAR(std::abs(mu.samples()[i].mu1 - cplx(-b3 * t)), 0.0, 1e-12);
    }
}

TEST(IntegrateMu, TransverseFieldClosedForm) {
    const double b0 = 1.0;
    const auto mu = integrate_mu(FieldProtocol::constant({b0, 0, 0}), {0.0, 1.4}, tight());
    for (std::size_t i = 0; i < mu.times().size(); ++i) {
        const double t = mu.times()[i];
        const auto& v = mu.samples()[i];
        EXPECT_LT(std::abs(v.mu3 - cplx(-std::tan(0.5 * b0 * t))), 1e-9);
        EXPECT_NEAR(v.mu1.imag(), -2.0 * std::log(std::cos(0.5 * b0 * t)), 1e-9);
    }
    const auto at_quarter = integrate_mu(FieldProtocol::constant({b0, 0, 0}), {0.0, std::numbers::pi / 2}, tight());
    EXPECT_LT(std::abs(at_quarter.samples().back().mu3 - cplx(-1.0)), 1e-10);
}

TEST(Reconstruct, ZeroMuIsIdentity) {
    for (int twice_j : {1, 2, 3}) {
        const SpinRepresentation rep(twice_j);
        EXPECT_LT(max_abs(product_of_exponentials({}, rep) - ComplexMatrix::Identity(rep.dim(), rep.dim())), 1e-15);
    }
    EXPECT_EQ(max_abs(spin_half_evolution({}) - ComplexMatrix::Identity(2, 2)), 0.0);
}

TEST(Reconstruct, LongitudinalFieldIsDiagonalPhase) {
    const double b3 = 0.8, t = 2.0;
    const auto mu = integrate_mu(FieldProtocol::constant({0, 0, b3}), {0.0, t}, {});
    const SpinRepresentation rep(1);
    const ComplexMatrix u = reconstruct_evolution(mu, rep, t);
    EXPECT_LT(std::abs(u(0, 0) - std::exp(I_unit * b3 * t / 2.0)), 1e-12);
    EXPECT_LT(std::abs(u(1, 1) - std::exp(-I_unit * b3 * t / 2.0)), 1e-12);
    EXPECT_LT(max_abs(u - mat_exp(-I_unit * t * rep.hamiltonian({0, 0, b3}))), 1e-12);
}

TEST(Reconstruct, PiRotationAcrossRestart) {
    // B₀t = π drives μ₃ to infinity, so this passes through a gauge restart.
    const double b0 = 1.0, t = std::numbers::pi;
    const auto mu = integrate_mu(FieldProtocol::constant({b0, 0, 0}), {0.0, t}, tight());
    EXPECT_GE(mu.restarts().size(), 1u);
    const SpinRepresentation rep(1);
    const ComplexMatrix u = reconstruct_evolution(mu, rep, t);
    EXPECT_NEAR(std::abs(u(0, 1)), 1.0, 1e-10);
    EXPECT_LT(max_abs(u - mat_exp(I_unit * std::numbers::pi * rep.jx())), 1e-9);
    EXPECT_LT(max_abs(u - direct_propagate_extrapolated(FieldProtocol::constant({b0, 0, 0}), rep, {0.0, t}, 2000)), 1e-9);
}

TEST(Reconstruct, OutsideSpanThrows) {
    const auto mu = integrate_mu(FieldProtocol::zero(), {0.0, 1.0}, {});
    EXPECT_THROW(reconstruct_evolution(mu, SpinRepresentation(1), 1.5), RangeError);
}

TEST(Reconstruct, SegmentStartsAtZero) {
    const auto f = FieldProtocol::constant({1.0, 0.0, 0.02});
    const auto mu = integrate_mu(f, {0.0, 10.0}, {});
    ASSERT_GE(mu.segments().size(), 2u);
    for (const auto& seg : mu.segments()) {
        const MuValues v = seg.at(seg.t_start);
        EXPECT_EQ(v.mu1, cplx(0.0));
        EXPECT_EQ(v.mu2, cplx(0.0));
        EXPECT_EQ(v.mu3, cplx(0.0));
    }
}

TEST(EvolveState, IdentityAndDensity) {
    StateVector psi(2);
    psi << 0.6, cplx(0.0, 0.8);
    EXPECT_EQ(max_abs(evolve_state(ComplexMatrix::Identity(2, 2), psi) - psi), 0.0);
    const ComplexMatrix rho = density_matrix(psi);
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-15);
    EXPECT_LT(max_abs(rho * rho - rho), 1e-15);
    EXPECT_THROW(evolve_state(ComplexMatrix::Identity(3, 3), psi), DimensionError);
}

TEST(EvolveState, RabiHalfFlipAndDensityForm) {
    const double b0 = 1.0, t = std::numbers::pi / 2;
    const auto mu = integrate_mu(FieldProtocol::constant({b0, 0, 0}), {0.0, t}, tight());
    StateVector psi0(2);
    psi0 << 1.0, 0.0;
    const StateVector psi = evolve_state(reconstruct_evolution(mu, SpinRepresentation(1), t), psi0);
    EXPECT_NEAR(std::norm(psi[1]), 0.5, 1e-10);
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
    const cplx z = mu.samples().back().mu3;
    ComplexMatrix expect(2, 2);
    expect << 1.0, I_unit * z, -I_unit * std::conj(z), std::norm(z);
    expect /= 1.0 + std::norm(z);
    EXPECT_LT(max_abs(density_matrix(psi) - expect), 1e-10);
}

TEST(Split, TrivialAndHandValue) {
    const auto id = split_u1_u2(MuValues{});
    EXPECT_EQ(max_abs(id.u1 - ComplexMatrix::Identity(2, 2)), 0.0);
    EXPECT_EQ(max_abs(id.u2 - ComplexMatrix::Identity(2, 2)), 0.0);

    const MuValues v{cplx(0.0, std::log(2.0)), cplx(-0.5), cplx(-1.0)};
    const auto s = split_u1_u2(v);
    ComplexMatrix u1(2, 2);
    u1 << 0.5, I_unit, 0.5 * I_unit, 1.0;
    EXPECT_LT(max_abs(s.u1 - u1), 1e-15);
    EXPECT_NEAR(s.u2(0, 0).real(), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(s.u2(1, 1).real(), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_LT(max_abs(s.u1 * s.u2 - spin_half_evolution(v)), 1e-15);
    EXPECT_NEAR(std::abs(s.u1.determinant() - 1.0), 0.0, 1e-15);
}

TEST(Split, ProductMatchesReconstructionOnRandomField) {
    const auto f = random_smooth_field(21, {0.0, 3.0}, 14.0, 41, 3, 0.2);
    const auto mu = integrate_mu(f, {0.0, 3.0}, {});
    const SpinRepresentation rep(1);
    for (double t : mu.times()) {
        for (auto mode : {Unitarize::no, Unitarize::yes}) {
            const auto s = split_u1_u2(mu, t, mode);
            EXPECT_LT(max_abs(s.u1 * s.u2 * s.accumulated - reconstruct_evolution(mu, rep, t)), 1e-10);
        }
        const auto s = split_u1_u2(mu, t, Unitarize::yes);
        EXPECT_LT(unitarity_defect(s.u1), 1e-9);
        EXPECT_LT(unitarity_defect(s.u2), 1e-12);
    }
}

TEST(EffectiveHamiltonianTd, ExplicitEntriesMatchMatrixProducts) {
    SeededRng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const cplx z{rng.normal(), rng.normal()};
        const Vec3 b{rng.normal(), rng.normal(), rng.normal()};
        const cplx bp{b.x, b.y}, bm{b.x, -b.y};
        const ComplexMatrix inv = u1_inverse(z);
        EXPECT_LT(max_abs(inv * u1_factor(z) - ComplexMatrix::Identity(2, 2)), 1e-13);
        const ComplexMatrix rotated = inv * SpinRepresentation(1).hamiltonian(b) * u1_factor(z);
        EXPECT_LT(max_abs(rotated_hamiltonian_explicit(z, b) - rotated), 1e-12);
        const ComplexMatrix conn = I_unit * inv * u1_derivative(z, detail::riccati_rate(z, bp, bm, b.z));
        EXPECT_LT(max_abs(connection_explicit(z, b) - conn), 1e-12);
        // Off-diagonal entries cancel in the difference.
        const ComplexMatrix heff = rotated_hamiltonian_explicit(z, b) - connection_explicit(z, b);
        EXPECT_LT(std::abs(heff(0, 1)), 1e-12);
        EXPECT_LT(std::abs(heff(1, 0)), 1e-12);
        const cplx dmu1 = -b.z - I_unit * bp * z;
        EXPECT_LT(std::abs(heff(0, 0) - 0.5 * dmu1), 1e-12);
    }
}

TEST(EffectiveHamiltonianTd, LongitudinalAndZeroField) {
    const double b3 = 0.7;
    const auto f = FieldProtocol::constant({0, 0, b3});
    const auto mu = integrate_mu(f, {0.0, 2.0}, {});
    const auto h = effective_hamiltonian_td(mu, f, 1.0);
    EXPECT_LT(max_abs(h.analytic + 0.5 * b3 * sigma_z()), 1e-14);
    EXPECT_LT(max_abs(h.numerical + 0.5 * b3 * sigma_z()), 1e-10);

    const auto z = FieldProtocol::zero();
    const auto h0 = effective_hamiltonian_td(integrate_mu(z, {0.0, 1.0}, {}), z, 0.5);
    EXPECT_EQ(max_abs(h0.analytic), 0.0);
    EXPECT_EQ(max_abs(h0.numerical), 0.0);
}

TEST(EffectiveHamiltonianTd, RabiQuarterPeriod) {
    const double b0 = 1.0, t = std::numbers::pi / 2;
    const auto f = FieldProtocol::constant({b0, 0, 0});
    const auto mu = integrate_mu(f, {0.0, 2.0}, tight());
    const auto h = effective_hamiltonian_td(mu, f, t);
    EXPECT_LT(max_abs(h.closed_form - 0.5 * I_unit * b0 * sigma_z()), 1e-9);
    EXPECT_LT(h.analytic_mismatch, 1e-12);
    EXPECT_LT(h.numerical_offdiag, 1e-7);
}

TEST(EffectiveHamiltonianTd, EndpointsShiftInside) {
    const auto f = FieldProtocol::constant({1.0, 0.2, 0.3});
    const auto mu = integrate_mu(f, {0.0, 1.0}, {});
    const auto h = effective_hamiltonian_td(mu, f, 0.0);
    EXPECT_GT(h.t, 0.0);
    EXPECT_LT(h.numerical_offdiag, 1e-7);
}

TEST(PhaseSplit, LongitudinalAndZero) {
    const double b3 = 0.9, t = 3.0;
    const auto f = FieldProtocol::constant({0, 0, b3});
    const auto p = phase_split(integrate_mu(f, {0.0, t}, {}), f);
    EXPECT_NEAR(p.total_phase, 0.5 * b3 * t, 1e-12);
    EXPECT_NEAR(p.dynamical_phase, 0.5 * b3 * t, 1e-12);
    EXPECT_EQ(p.geometric_phase, 0.0);
    // First-component phase convention: U₀₀ = e^{i·total}.
    const auto u = reconstruct_evolution(integrate_mu(f, {0.0, t}, {}), SpinRepresentation(1), t);
    EXPECT_NEAR(std::arg(u(0, 0)), p.total_phase, 1e-12);

    const auto z = FieldProtocol::zero();
    const auto p0 = phase_split(integrate_mu(z, {0.0, 1.0}, {}), z);
    EXPECT_EQ(p0.total_phase, 0.0);
    EXPECT_EQ(p0.dynamical_phase, 0.0);
    EXPECT_EQ(p0.geometric_phase, 0.0);
}

TEST(DirectPropagate, ConstantAndZeroField) {
    const SpinRepresentation rep(2);
    const Vec3 b{0.3, -0.5, 0.8};
    const ComplexMatrix u = direct_propagate(FieldProtocol::constant(b), rep, {0.0, 2.0}, 7);
    EXPECT_LT(max_abs(u - mat_exp(-2.0 * I_unit * rep.hamiltonian(b))), 1e-13);
    EXPECT_LT(max_abs(direct_propagate(FieldProtocol::zero(), rep, {0.0, 2.0}, 5) - ComplexMatrix::Identity(3, 3)), 1e-15);
    EXPECT_LT(unitarity_defect(direct_propagate(random_smooth_field(3, {0.0, 2.0}, 6.0), SpinRepresentation(1), {0.0, 2.0}, 50)),
              1e-12);
}

TEST(DirectPropagate, SecondOrderConvergence) {
    const auto f = random_smooth_field(5, {0.0, 2.0}, 8.0);
    const SpinRepresentation rep(1);
    const ComplexMatrix ref = direct_propagate_extrapolated(f, rep, {0.0, 2.0}, 8000);
    const double e1 = max_abs(direct_propagate(f, rep, {0.0, 2.0}, 100) - ref);
    const double e2 = max_abs(direct_propagate(f, rep, {0.0, 2.0}, 200) - ref);
    EXPECT_NEAR(e1 / e2, 4.0, 0.2);
}

TEST(Invariants, RandomFieldsAcrossRepresentations) {
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        const TimeSpan span{0.0, 3.0};
        const auto f = random_smooth_field(seed, span, 16.0, 41, 3, seed % 2 ? 0.2 : 1.0);
        const auto mu = integrate_mu(f, span, {});
        const auto cd = constraint_defects(mu);
        EXPECT_LE(cd.mu2, 1e-9);
        EXPECT_LE(cd.mu1, 1e-8);
        for (int twice_j : {1, 2}) {
            const SpinRepresentation rep(twice_j);
            for (double t : {0.7, 1.9, 3.0}) EXPECT_LE(unitarity_defect(reconstruct_evolution(mu, rep, t)), 1e-9);
            EXPECT_LE(max_abs(reconstruct_evolution(mu, rep, span.end) - direct_propagate_extrapolated(f, rep, span, 4000)),
                      1e-7);
        }
        EXPECT_LE(phase_split(mu, f).additivity_defect(), 1e-8);
        for (int i = 0; i < 10; ++i) EXPECT_LE(effective_hamiltonian_td(mu, f, 0.15 + 0.3 * i).numerical_offdiag, 1e-7);
    }
}

TEST(Invariants, HigherSpinNeedsTighterTolerance) {
    // Entries of the j = 3/2 factors grow like |μ₃|³, amplifying μ₁ drift.
    OdeSettings s;
    s.rel_tol = 1e-11;
    s.abs_tol = 1e-13;
    const SpinRepresentation rep(3);
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        const TimeSpan span{0.0, 3.0};
        const auto f = random_smooth_field(seed, span, 16.0, 41, 3, seed % 2 ? 0.2 : 1.0);
        const auto mu = integrate_mu(f, span, s);
        for (double t : {0.7, 1.9, 3.0}) EXPECT_LE(unitarity_defect(reconstruct_evolution(mu, rep, t)), 1e-9);
        EXPECT_LE(max_abs(reconstruct_evolution(mu, rep, span.end) - direct_propagate_extrapolated(f, rep, span, 4000)),
                  1e-7);
    }
}

TEST(IntegrateMu, InvalidArguments) {
    EXPECT_THROW(integrate_mu(FieldProtocol::zero(), {1.0, 0.0}, {}), InvalidInputError);
    MuOptions o;
    o.samples = 1;
    EXPECT_THROW(integrate_mu(FieldProtocol::zero(), {0.0, 1.0}, {}, o), InvalidInputError);
}
