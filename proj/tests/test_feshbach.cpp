#include <cmath>

#include <gtest/gtest.h>

#include "effham/feshbach.hpp"
#include "effham/presets.hpp"
#include "support.hpp"

using namespace effham;
using effham::testing::random_hermitian;

namespace {

PartitionedHamiltonian two_by_two(double ea, double eb, double v) {
    ComplexMatrix h(2, 2);
    h << ea, v, v, eb;
    return PartitionedHamiltonian(h, {0});
}

RealVector dense_eigenvalues(const ComplexMatrix& h) {
    return Eigen::SelfAdjointEigenSolver<ComplexMatrix>(h).eigenvalues();
}

}  // namespace

TEST(Partition, ComplementAndValidation) {
    SeededRng rng(1);
    const ComplexMatrix h = random_hermitian(rng, 5, 1.0);
    const PartitionedHamiltonian ph(h, {3, 1});
    EXPECT_EQ(ph.p_indices(), (std::vector<Index>{1, 3}));
    EXPECT_EQ(ph.q_indices(), (std::vector<Index>{0, 2, 4}));
    ComplexMatrix bad = h;
    bad(0, 1) += 0.1;
    EXPECT_THROW(PartitionedHamiltonian(bad, {0}), InvalidInputError);
    EXPECT_THROW(PartitionedHamiltonian(h, {1, 1}), InvalidInputError);
    EXPECT_THROW(PartitionedHamiltonian(h, {}), InvalidInputError);
    EXPECT_THROW(PartitionedHamiltonian(h, {5}), RangeError);
}

TEST(EffectiveHamiltonian, DecoupledAndHandValue) {
    for (double e : {-3.0, 0.2, 7.5}) {
        EXPECT_EQ(effective_hamiltonian(two_by_two(0.3, 1.0, 0.0), e)(0, 0), cplx(0.3));
    }
    EXPECT_NEAR(std::abs(effective_hamiltonian(two_by_two(0.0, 1.0, 0.5), 0.0)(0, 0) - cplx(-0.25)), 0.0, 1e-15);
}

TEST(EffectiveHamiltonian, SingularAtQLevel) {
    EXPECT_THROW(effective_hamiltonian(two_by_two(0.0, 1.0, 0.5), 1.0), SingularMatrixError);
    // Off the real axis the resolvent is regular.
    EXPECT_NO_THROW(effective_hamiltonian(two_by_two(0.0, 1.0, 0.5), cplx(1.0, 1e-3)));
}

TEST(EffectiveHamiltonian, HermitianBelowQSpectrum) {
    SeededRng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const PartitionedHamiltonian ph(random_hermitian(rng, 7, 1.0), {0, 1, 2});
        const double below = dense_eigenvalues(ph.qhq()).minCoeff() - 0.5;
        const ComplexMatrix heff = effective_hamiltonian(ph, below);
        EXPECT_EQ(heff.rows(), 3);
        EXPECT_EQ(heff.cols(), 3);
        EXPECT_LE(hermiticity_defect(heff), 1e-12);
    }
}

TEST(EffectiveHamiltonian, SecondOrderBound) {
    SeededRng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const PartitionedHamiltonian ph(random_hermitian(rng, 8, 1.0), {0, 1});
        const RealVector q = dense_eigenvalues(ph.qhq());
        for (double d : {0.5, 2.0, 10.0}) {
            const double e = q.maxCoeff() + d;
            const double lhs = spectral_norm(effective_hamiltonian(ph, e) - ph.php());
            const double phq = spectral_norm(ph.phq());
            EXPECT_LE(lhs, phq * phq / d * (1.0 + 1e-12));
        }
    }
}

TEST(QComponent, ZeroCouplingAndTwoByTwoEigenvector) {
    StateVector p(1);
    p << 1.0;
    EXPECT_EQ(q_component(two_by_two(0.0, 1.0, 0.0), 0.4, p).norm(), 0.0);

    const PartitionedHamiltonian ph = two_by_two(0.0, 1.0, 1.0);
    const double e = (1.0 + std::sqrt(5.0)) / 2.0;
    const StateVector psi = ph.assemble(p, q_component(ph, e, p));
    EXPECT_LT((ph.h() * psi - e * psi).norm(), 1e-10);
}

TEST(QComponent, RandomSixBySix) {
    SeededRng rng(4);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const ComplexMatrix h = random_hermitian(rng, 6, 1.0);
        const PartitionedHamiltonian ph(h, {0, 1});
        const Eigen::SelfAdjointEigenSolver<ComplexMatrix> full(h);
        const RealVector poles = dense_eigenvalues(ph.qhq());
        for (Index k = 0; k < 6; ++k) {
            const double e = full.eigenvalues()[k];
            if ((poles.array() - e).abs().minCoeff() < 1e-6) continue;
            // P-space eigenvector of H_eff(E) with eigenvalue E.
            const Eigen::SelfAdjointEigenSolver<ComplexMatrix> reduced(effective_hamiltonian(ph, e));
            Index j = 0;
            (reduced.eigenvalues().array() - e).abs().minCoeff(&j);
            const StateVector pp = reduced.eigenvectors().col(j);
            const StateVector psi = ph.assemble(pp, q_component(ph, e, pp));
            EXPECT_LE((h * psi - e * psi).norm(), 1e-9);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(BoundStateSearch, DecoupledReturnsPhpEigenvalues) {
    const auto roots = bound_state_search(two_by_two(0.3, 1.0, 0.0), {-1.0, 0.9});
    ASSERT_EQ(roots.size(), 1u);
    EXPECT_NEAR(roots[0], 0.3, 1e-12);
}

TEST(BoundStateSearch, TwoByTwoRoots) {
    // [[0, v], [v, 1]] with v² = 1/2 has eigenvalues (1 ± √3)/2.
    const double v = std::sqrt(2.0) / 2.0;
    const auto roots = bound_state_search(two_by_two(0.0, 1.0, v), {-2.0, 3.0});
    ASSERT_EQ(roots.size(), 2u);
    EXPECT_NEAR(roots[0], (1.0 - std::sqrt(3.0)) / 2.0, 1e-12);
    EXPECT_NEAR(roots[1], (1.0 + std::sqrt(3.0)) / 2.0, 1e-12);
}

TEST(BoundStateSearch, EmptyWindowRejected) {
    EXPECT_THROW(bound_state_search(two_by_two(0.0, 1.0, 0.5), {1.0, 1.0}), InvalidInputError);
    EXPECT_TRUE(bound_state_search(two_by_two(0.0, 1.0, 0.5), {5.0, 6.0}).empty());
}

TEST(BoundStateSearch, BoundStateBelowBand) {
    const FeshbachModel m = make_two_channel({-1.3}, -1.0, 1.0, 400, [](double) { return 0.05; });
    const auto roots = bound_state_search(m.hamiltonian, {-2.0, -1.0 - 1e-3});
    ASSERT_EQ(roots.size(), 1u);
    EXPECT_NEAR(roots[0], dense_eigenvalues(m.hamiltonian.h()).minCoeff(), 1e-8);
}

TEST(BoundStateSearch, RandomMatricesMatchDenseSpectrum) {
    SeededRng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const ComplexMatrix h = random_hermitian(rng, 8, 1.0);
        const PartitionedHamiltonian ph(h, {0, 1});
        const RealVector exact = dense_eigenvalues(h);
        const auto roots = bound_state_search(ph, {exact.minCoeff() - 1.0, exact.maxCoeff() + 1.0});
        EXPECT_EQ(roots.size(), 8u);
        for (double r : roots) EXPECT_LE((exact.array() - r).abs().minCoeff(), 1e-10);
    }
}

TEST(TwoChannel, LevelsAndCouplings) {
    const FeshbachModel m = make_two_channel({0.1}, -1.0, 1.0, 10, [](double e) { return 0.1 * (1.0 + e); });
    EXPECT_EQ(m.hamiltonian.p_dim(), 1);
    EXPECT_EQ(m.hamiltonian.q_dim(), 10);
    EXPECT_NEAR(m.level_spacing, 0.2, 1e-14);
    const RealVector q = dense_eigenvalues(m.hamiltonian.qhq());
    for (Index k = 1; k < q.size(); ++k) EXPECT_GT(q[k], q[k - 1]);
    EXPECT_THROW(make_two_channel({}, -1.0, 1.0, 10, [](double) { return 0.0; }), InvalidInputError);
    EXPECT_THROW(make_two_channel({0.0}, 1.0, -1.0, 10, [](double) { return 0.0; }), InvalidInputError);
}

TEST(Grid1d, PartitionByRadius) {
    const FeshbachModel m = make_grid_1d(0.5, 20, [](double r) { return r < 2.0 ? -1.0 : 0.0; }, 2.2);
    EXPECT_EQ(m.hamiltonian.p_dim(), 4);
    EXPECT_DOUBLE_EQ(m.well_bottom, -1.0);
    EXPECT_THROW(make_grid_1d(0.5, 20, [](double) { return 0.0; }, 100.0), InvalidInputError);
}

TEST(Resonance, DecouplingLimit) {
    const FeshbachModel m = make_two_channel({0.05}, -1.0, 1.0, 800, [](double) { return 1e-7; });
    const auto scan = resonance_search(m, {-0.2, 0.2});
    ASSERT_EQ(scan.resonances.size(), 1u);
    const auto& r = scan.resonances[0];
    EXPECT_LT(r.width, 1e-8);
    EXPECT_NEAR(r.energy, 0.05, 1e-6);
    EXPECT_NEAR(r.php_eigenvalue, 0.05, 1e-15);
    EXPECT_LE(r.diagnostics.residual, 1e-10);
}

TEST(Resonance, GoldenRuleWidth) {
    const double v = 0.004, de = 2.0 / 1000;
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 1000, [v](double) { return v; });
    const auto scan = resonance_search(m, {-0.3, 0.3});
    ASSERT_EQ(scan.resonances.size(), 1u);
    EXPECT_NEAR(scan.resonances[0].width / (2.0 * std::numbers::pi * v * v / de), 1.0, 0.05);
    EXPECT_GE(scan.resonances[0].width, 0.0);
}

TEST(Resonance, WindowOutsideBand) {
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 100, [](double) { return 0.01; });
    EXPECT_THROW(resonance_search(m, {2.0, 3.0}), NoContinuumError);
    EXPECT_THROW(resonance_search(m, {0.3, 0.3}), InvalidInputError);
}

TEST(Resonance, WarnsWhenEtaBelowSpacing) {
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 400, [](double) { return 0.01; });
    ResonanceOptions o;
    o.eta_factor = 0.5;
    const auto scan = resonance_search(m, {-0.2, 0.2}, o);
    ASSERT_FALSE(scan.resonances.empty());
    EXPECT_FALSE(scan.resonances[0].diagnostics.warnings.empty());
}

TEST(Decay, ZeroCouplingDoesNotDecay) {
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 200, [](double) { return 0.0; });
    StateVector p(1);
    p << 1.0;
    const DecayFit fit = decay_oracle(m, p, 50.0, 100);
    for (double s : fit.survival) EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(fit.rate, 0.0);
    EXPECT_EQ(fit.fit_points, 0u);
}

TEST(Decay, RecurrenceRevivalFlagged) {
    // δE = 0.02, recurrence at 2π/δE ≈ 314.
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 100, [](double) { return 0.01; });
    StateVector p(1);
    p << 1.0;
    const DecayFit fit = decay_oracle(m, p, 400.0, 4000);
    EXPECT_TRUE(fit.beyond_recurrence);
    EXPECT_TRUE(fit.revival_detected);
    const DecayFit early = decay_oracle(m, p, 150.0, 1500);
    EXPECT_FALSE(early.beyond_recurrence);
    EXPECT_FALSE(early.revival_detected);
}

TEST(Decay, MatchesMidpointPropagation) {
    // Spectral survival equals direct step-by-step propagation for constant H.
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 60, [](double) { return 0.03; });
    StateVector p(1);
    p << 1.0;
    const DecayFit fit = decay_oracle(m, p, 20.0, 10);
    const ComplexMatrix step = mat_exp(-I_unit * 2.0 * m.hamiltonian.h());
    StateVector psi = m.hamiltonian.assemble(p, StateVector::Zero(m.hamiltonian.q_dim()));
    const StateVector phi = psi;
    for (std::size_t s = 1; s < fit.survival.size(); ++s) {
        psi = step * psi;
        EXPECT_NEAR(fit.survival[s], std::norm(phi.dot(psi)), 1e-10);
    }
}

TEST(Decay, InvalidInitialState) {
    const FeshbachModel m = make_two_channel({0.0}, -1.0, 1.0, 60, [](double) { return 0.03; });
    EXPECT_THROW(decay_oracle(m, StateVector::Zero(2), 10.0, 10), DimensionError);
    EXPECT_THROW(decay_oracle(m, StateVector::Zero(1), 10.0, 10), InvalidInputError);
}

TEST(Presets, CatalogAndOverrides) {
    std::vector<std::string> names;
    for (const auto& p : list_presets()) names.push_back(p.name);
    EXPECT_EQ(names, (std::vector<std::string>{"two-channel-flat", "shape-barrier-1d", "feshbach-narrow-pair"}));
    EXPECT_THROW(find_preset("nope"), ConfigError);
    EXPECT_THROW(build_preset("two-channel-flat", {{"nope", 1.0}}), ConfigError);
    EXPECT_THROW(build_preset("two-channel-flat", {{"n_continuum", 2.5}}), ConfigError);
    const PresetModel pm = build_preset("two-channel-flat", {{"n_continuum", 50}});
    EXPECT_EQ(pm.model.hamiltonian.q_dim(), 50);
    EXPECT_EQ(pm.model.name, "two-channel-flat");
}

TEST(Presets, ShapeResonanceInsideWell) {
    const PresetModel pm = build_preset("shape-barrier-1d");
    const auto scan = resonance_search(pm.model, pm.window);
    ASSERT_FALSE(scan.resonances.empty());
    for (const auto& r : scan.resonances) {
        EXPECT_GT(r.energy, pm.model.well_bottom);
        EXPECT_LT(r.energy, pm.model.barrier_top);
        // Box continuum dense relative to the width.
        EXPECT_LE(pm.model.resolvent->level_spacing(r.energy), r.width / 10.0);
    }
}
