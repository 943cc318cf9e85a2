#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "pcs/dynamics.hpp"
#include "pcs/observables.hpp"
#include "pcs/operators.hpp"
#include "pcs/rng.hpp"
#include "pcs/states.hpp"
#include "test_util.hpp"

using namespace pcs;

namespace {

SimParams base_params() {
    SimParams p;
    p.model = ModelKind::effective;
    p.effective = EffectiveParams{0.2, Complex(2.0, 0.0)};
    p.gamma = 10.0;
    p.dt = 0.005;
    p.t_final = 200.0;
    p.n_traj = 1000;
    p.master_seed = 1;
    p.output_every = 20;
    p.fidelity_target.reset();
    return p;
}

double max_entry_distance(const DensityOperator& a, const DensityOperator& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

double frobenius_distance(const DensityOperator& a, const DensityOperator& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) s += std::norm(a.data()[i] - b.data()[i]);
    return std::sqrt(s);
}

// Reference integrator built on the public full-space RHS only.
DensityOperator dense_rk4_reference(DensityOperator rho, const SparseOperator& H, double gamma,
                                    double dt, int steps) {
    const auto axpy = [](DensityOperator& acc, const DensityOperator& d, double w) {
        for (size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += w * d.data()[i];
    };
    for (int s = 0; s < steps; ++s) {
        const DensityOperator k1 = lindblad_rhs(rho, H, gamma);
        DensityOperator tmp = rho;
        axpy(tmp, k1, dt / 2.0);
        const DensityOperator k2 = lindblad_rhs(tmp, H, gamma);
        tmp = rho;
        axpy(tmp, k2, dt / 2.0);
        const DensityOperator k3 = lindblad_rhs(tmp, H, gamma);
        tmp = rho;
        axpy(tmp, k3, dt);
        const DensityOperator k4 = lindblad_rhs(tmp, H, gamma);
        axpy(rho, k1, dt / 6.0);
        axpy(rho, k2, dt / 3.0);
        axpy(rho, k3, dt / 3.0);
        axpy(rho, k4, dt / 6.0);
        rho.rescale(1.0 / rho.trace().real());
        rho.hermitize();
    }
    return rho;
}

}  // namespace

TEST_CASE("counter rng streams") {
    CounterRng a(42, 0), b(42, 0), c(42, 1);
    CHECK(a.key() == b.key());
    CHECK(a.key() != c.key());
    for (int i = 0; i < 100; ++i) {
        const double u = a.next_uniform();
        CHECK(u == b.next_uniform());
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("lindblad_rhs closed forms") {
    SUBCASE("undriven dark state has zero derivative") {
        const SpaceConfig space(4);
        const auto H = build_effective_hamiltonian(space, EffectiveParams{0.2, Complex(0.0)});
        const DensityOperator rho =
            DensityOperator::pure(fock_state(space, AtomLevel::ground, 0, 0));
        const DensityOperator d = lindblad_rhs(rho, H, 10.0);
        double worst = 0.0;
        for (const Complex& v : d.data()) worst = std::max(worst, std::abs(v));
        CHECK(worst == 0.0);
    }
    SUBCASE("pure decay rate of the inversion") {
        const SpaceConfig space(2);
        const double gamma = 10.0;
        const auto H = SparseOperator::zero(space);
        const DensityOperator rho =
            DensityOperator::pure(fock_state(space, AtomLevel::excited, 0, 0));
        const DensityOperator d = lindblad_rhs(rho, H, gamma);
        // d<sz>/dt = tr(sz drho/dt)
        const auto sz = atom_op(space, AtomPauli::sigma_z);
        Complex deriv = 0.0;
        sz.for_each_entry([&](int r, int c, Complex v) { deriv += v * d(c, r); });
        CHECK(deriv.real() == doctest::Approx(-2.0 * gamma).epsilon(1e-12));
        CHECK(std::abs(deriv.imag()) < 1e-14);
    }
    SUBCASE("steady state annihilates the generator") {
        const SpaceConfig space(20);
        const Complex xi(2.0, 0.0);
        const StateVector pcs = pcs_state(space, PcsLabel{xi, 1}, AtomLevel::ground);
        StateVector shifted = apply_to_state(pair_annihilation(space), pcs);
        double res2 = 0.0;
        for (int i = 0; i < space.dim(); ++i) res2 += std::norm(shifted[i] - xi * pcs[i]);
        const double residual = std::sqrt(res2);

        const auto H = build_effective_hamiltonian(space, EffectiveParams{0.2, xi});
        const DensityOperator d = lindblad_rhs(DensityOperator::pure(pcs), H, 10.0);
        double worst = 0.0;
        for (const Complex& v : d.data()) worst = std::max(worst, std::abs(v));
        CHECK(worst < 10.0 * std::max(residual, 1e-14));
    }
    SUBCASE("output is traceless and Hermitian") {
        const SpaceConfig space(3);
        CounterRng rng(31, 0);
        const auto H = build_effective_hamiltonian(space, EffectiveParams{0.4, Complex(1.0, 0.7)});
        for (int trial = 0; trial < 4; ++trial) {
            DensityOperator rho(space);
            double wsum = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double w = rng.next_uniform();
                wsum += w;
                const StateVector psi = tst::random_state(space, rng);
                for (int i = 0; i < space.dim(); ++i)
                    for (int j = 0; j < space.dim(); ++j)
                        rho(i, j) += w * psi[i] * std::conj(psi[j]);
            }
            rho.rescale(1.0 / wsum);
            const DensityOperator d = lindblad_rhs(rho, H, 5.0);
            CHECK(std::abs(d.trace()) < 1e-13);
            double herm = 0.0;
            for (int i = 0; i < space.dim(); ++i)
                for (int j = 0; j < space.dim(); ++j)
                    herm = std::max(herm, std::abs(d(i, j) - std::conj(d(j, i))));
            CHECK(herm < 1e-13);
        }
    }
    SUBCASE("dimension mismatch") {
        const SpaceConfig small(2), big(3);
        const auto H = SparseOperator::zero(big);
        const DensityOperator rho =
            DensityOperator::pure(fock_state(small, AtomLevel::ground, 0, 0));
        CHECK_THROWS_AS(lindblad_rhs(rho, H, 1.0), SimError);
    }
}

TEST_CASE("master equation: frozen and decaying closed forms") {
    SUBCASE("free evolution with no generator is constant") {
        const SpaceConfig space(3);
        SimParams p = base_params();
        p.effective.alpha = 0.0;
        p.gamma = 0.0;
        p.dt = 0.01;
        p.t_final = 1.0;
        p.output_every = 10;
        const StateVector psi0 = fock_state(space, AtomLevel::excited, 2, 1);
        const DensityOperator rho0 = DensityOperator::pure(psi0);
        const MasterResult res = integrate_master_equation(rho0, p);
        CHECK(max_entry_distance(res.final_rho, rho0) < 1e-14);
    }
    SUBCASE("two-level decay closed form") {
        const SpaceConfig space(1);
        SimParams p = base_params();
        p.effective.alpha = 0.0;
        p.gamma = 10.0;
        p.dt = 0.005;
        p.t_final = 0.1;  // gamma t = 1
        p.output_every = 1;
        const DensityOperator rho0 =
            DensityOperator::pure(fock_state(space, AtomLevel::excited, 0, 0));
        const MasterResult res = integrate_master_equation(rho0, p);
        for (size_t k = 0; k < res.series.size(); ++k) {
            const double expect = 2.0 * std::exp(-p.gamma * res.series.times[k]) - 1.0;
            CHECK(std::abs(res.series.sz[k] - expect) < 1e-6);
        }
        CHECK(std::abs(res.series.sz.back() - (2.0 * std::exp(-1.0) - 1.0)) < 1e-6);
    }
}

TEST_CASE("master equation agrees with the dense public-RHS reference") {
    const SpaceConfig space(5);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.3, Complex(0.6, 0.3)};
    p.gamma = 4.0;
    p.dt = 0.01;
    p.t_final = 0.3;
    p.output_every = 10;

    // Mixed initial state on the q in {1} sector plus an excited component.
    const StateVector a = fock_state(space, AtomLevel::excited, 2, 1);
    const StateVector b = fock_state(space, AtomLevel::ground, 1, 0);
    DensityOperator rho0(space);
    for (int i = 0; i < space.dim(); ++i)
        for (int j = 0; j < space.dim(); ++j)
            rho0(i, j) = 0.6 * a[i] * std::conj(a[j]) + 0.4 * b[i] * std::conj(b[j]);

    const MasterResult res = integrate_master_equation(rho0, p);
    const auto H = build_model_hamiltonian(space, p);
    const DensityOperator ref = dense_rk4_reference(rho0, H, p.gamma, p.dt, 30);
    CHECK(max_entry_distance(res.final_rho, ref) < 1e-12);
}

TEST_CASE("master equation conserves what it must") {
    const SpaceConfig space(8);
    SimParams p = base_params();
    p.t_final = 2.0;
    p.effective.xi = Complex(1.0, 0.0);
    p.fidelity_target = PcsLabel{Complex(1.0, 0.0), 1};
    const DensityOperator rho0 =
        DensityOperator::pure(fock_state(space, AtomLevel::excited, 2, 1));
    const MasterResult res = integrate_master_equation(rho0, p);

    REQUIRE(res.series.size() > 0);
    for (size_t k = 0; k < res.series.size(); ++k) {
        CHECK(std::abs(res.series.trace[k] - 1.0) < 1e-9);
        CHECK(res.series.purity[k] <= 1.0 + 1e-9);
        CHECK(std::abs(res.series.q_mean[k] - 1.0) < 1e-6);
        CHECK(std::abs(res.series.pol_re[k]) < 1e-9);
    }
    // strictly increasing sample times, equal column lengths
    for (size_t k = 1; k < res.series.size(); ++k)
        CHECK(res.series.times[k] > res.series.times[k - 1]);
    CHECK(res.series.sz.size() == res.series.size());
    CHECK(res.series.fidelity_pcs.size() == res.series.size());
    // fidelity climbs toward the dark state
    CHECK(res.series.fidelity_pcs.back() > res.series.fidelity_pcs.front());
}

TEST_CASE("master equation validation and guards") {
    const SpaceConfig space(2);
    SimParams p = base_params();
    const DensityOperator rho0 =
        DensityOperator::pure(fock_state(space, AtomLevel::ground, 0, 0));

    SUBCASE("stability guard") {
        SimParams bad = p;
        bad.dt = 0.02;  // dt * gamma = 0.2
        bad.t_final = 0.2;
        CHECK_THROWS_AS(integrate_master_equation(rho0, bad), SimError);
    }
    SUBCASE("t_final must sit on the step grid") {
        SimParams bad = p;
        bad.dt = 0.005;
        bad.t_final = 0.0123;
        CHECK_THROWS_AS(integrate_master_equation(rho0, bad), SimError);
    }
    SUBCASE("initial trace must be 1") {
        DensityOperator bad(space);
        bad(0, 0) = 0.9;
        SimParams q = p;
        q.t_final = 0.1;
        CHECK_THROWS_AS(integrate_master_equation(bad, q), SimError);
    }
    SUBCASE("snapshot outside the run interval") {
        SimParams q = p;
        q.t_final = 0.1;
        SnapshotSink sink{{0.2}, [](double, const DensityOperator&) {}};
        CHECK_THROWS_AS(integrate_master_equation(rho0, q, &sink), SimError);
    }
}

TEST_CASE("master equation emits snapshots at requested times") {
    const SpaceConfig space(6);
    SimParams p = base_params();
    p.effective.xi = Complex(1.0, 0.0);
    p.t_final = 1.0;
    std::vector<double> seen;
    std::vector<double> totals;
    SnapshotSink sink{{0.0, 0.25, 1.0}, [&](double t, const DensityOperator& rho) {
                          seen.push_back(t);
                          totals.push_back(motional_marginal(rho).total());
                      }};
    const DensityOperator rho0 =
        DensityOperator::pure(fock_state(space, AtomLevel::excited, 2, 1));
    integrate_master_equation(rho0, p, &sink);
    REQUIRE(seen.size() == 3);
    CHECK(seen[0] == 0.0);
    CHECK(seen[1] == 0.25);
    CHECK(seen[2] == 1.0);
    for (double s : totals) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("halving dt converges at fourth order scale") {
    const SpaceConfig space(20);
    SimParams p = base_params();
    p.t_final = 2.0;
    const DensityOperator rho0 =
        DensityOperator::pure(fock_state(space, AtomLevel::excited, 7, 6));
    const MasterResult coarse = integrate_master_equation(rho0, p);
    SimParams fine = p;
    fine.dt = p.dt / 2.0;
    const MasterResult fined = integrate_master_equation(rho0, fine);
    CHECK(std::abs(coarse.series.sz.back() - fined.series.sz.back()) < 1e-6);
}

TEST_CASE("trajectory: unitary path matches a dense reference") {
    const SpaceConfig space(6);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.4, Complex(1.0, 0.0)};
    p.gamma = 0.0;
    p.dt = 0.004;
    p.t_final = 1.0;
    p.output_every = 50;

    const StateVector psi0 = fock_state(space, AtomLevel::ground, 2, 1);
    const TrajectoryResult tr = mc_trajectory(psi0, p, 0);
    CHECK(tr.jump_times.empty());

    // dense RK4 on the full space
    const auto H = build_model_hamiltonian(space, p);
    std::vector<Complex> y(psi0.amplitudes().begin(), psi0.amplitudes().end());
    const auto deriv = [&](const std::vector<Complex>& v) {
        auto hv = H.apply_raw(v);
        for (Complex& x : hv) x *= Complex(0.0, -1.0);
        return hv;
    };
    const int steps = 250;
    for (int s = 0; s < steps; ++s) {
        const auto k1 = deriv(y);
        std::vector<Complex> t2(y);
        for (size_t i = 0; i < y.size(); ++i) t2[i] += 0.5 * p.dt * k1[i];
        const auto k2 = deriv(t2);
        std::vector<Complex> t3(y);
        for (size_t i = 0; i < y.size(); ++i) t3[i] += 0.5 * p.dt * k2[i];
        const auto k3 = deriv(t3);
        std::vector<Complex> t4(y);
        for (size_t i = 0; i < y.size(); ++i) t4[i] += p.dt * k3[i];
        const auto k4 = deriv(t4);
        for (size_t i = 0; i < y.size(); ++i)
            y[i] += p.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    double n2 = 0.0;
    for (const Complex& v : y) n2 += std::norm(v);
    CHECK(std::abs(n2 - 1.0) < 1e-9);  // unitary to integrator error
    const double inv = 1.0 / std::sqrt(n2);
    double worst = 0.0;
    for (int i = 0; i < space.dim(); ++i)
        worst = std::max(worst, std::abs(tr.final_state[i] - inv * y[static_cast<size_t>(i)]));
    CHECK(worst < 1e-10);
}

TEST_CASE("trajectory: dark state sits still") {
    const SpaceConfig space(3);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(0.0)};
    p.dt = 0.005;
    p.t_final = 1.0;
    p.output_every = 20;
    const StateVector psi0 = fock_state(space, AtomLevel::ground, 0, 0);
    const TrajectoryResult tr = mc_trajectory(psi0, p, 3);
    CHECK(tr.jump_times.empty());
    CHECK(std::abs(tr.final_state[space.flat_index(AtomLevel::ground, 0, 0)] - Complex(1.0)) <
          1e-12);
    for (size_t k = 0; k < tr.series.size(); ++k)
        CHECK(tr.series.sz[k] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("trajectory: reproducible by (seed, index)") {
    const SpaceConfig space(4);
    SimParams p = base_params();
    p.effective.xi = Complex(1.0, 0.0);
    p.t_final = 2.0;
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 1, 0);
    const TrajectoryResult a = mc_trajectory(psi0, p, 5);
    const TrajectoryResult b = mc_trajectory(psi0, p, 5);
    CHECK(a.seed_used == b.seed_used);
    REQUIRE(a.jump_times.size() == b.jump_times.size());
    for (size_t i = 0; i < a.jump_times.size(); ++i) CHECK(a.jump_times[i] == b.jump_times[i]);
    for (size_t k = 0; k < a.series.size(); ++k) CHECK(a.series.sz[k] == b.series.sz[k]);

    const TrajectoryResult c = mc_trajectory(psi0, p, 6);
    CHECK(c.seed_used != a.seed_used);
}

TEST_CASE("jump-time statistics reproduce the exponential law") {
    // H = 0, initial |e,0,0>: each trajectory jumps exactly once, at a time
    // exponentially distributed with rate gamma.
    const SpaceConfig space(1);
    SimParams p = base_params();
    p.effective.alpha = 0.0;
    p.gamma = 10.0;
    p.dt = 0.001;
    p.t_final = 1.2;
    p.output_every = 1200;
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 0, 0);

    const int n = 10000;
    std::vector<double> times;
    times.reserve(static_cast<size_t>(n));
    int multi_jump = 0;
    for (int i = 0; i < n; ++i) {
        const TrajectoryResult tr = mc_trajectory(psi0, p, i);
        if (tr.jump_times.size() > 1) ++multi_jump;
        if (!tr.jump_times.empty()) times.push_back(tr.jump_times.front());
    }
    CHECK(multi_jump == 0);
    CHECK(static_cast<int>(times.size()) >= n - 5);  // P(no jump by 1.2) ~ 6e-6

    std::sort(times.begin(), times.end());
    double ks = 0.0;
    const double nn = static_cast<double>(times.size());
    for (size_t i = 0; i < times.size(); ++i) {
        const double f = 1.0 - std::exp(-p.gamma * times[i]);
        const double lo = static_cast<double>(i) / nn;
        const double hi = static_cast<double>(i + 1) / nn;
        ks = std::max({ks, std::abs(f - lo), std::abs(f - hi)});
    }
    CHECK(ks < 0.02);
}

TEST_CASE("ensemble: single trajectory degenerates to that trajectory") {
    const SpaceConfig space(4);
    SimParams p = base_params();
    p.effective.xi = Complex(1.0, 0.0);
    p.t_final = 1.0;
    p.n_traj = 1;
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 1, 0);
    const EnsembleResult ens = mc_ensemble(psi0, p);
    const TrajectoryResult tr = mc_trajectory(psi0, p, 0);
    REQUIRE(ens.mean.size() == tr.series.size());
    for (size_t k = 0; k < tr.series.size(); ++k) {
        CHECK(ens.mean.sz[k] == tr.series.sz[k]);
        CHECK(ens.std_err.sz[k] == 0.0);
    }
    CHECK(ens.jumps.total == static_cast<long>(tr.jump_times.size()));
}

TEST_CASE("ensemble matches the master equation within 3 standard errors") {
    const SpaceConfig space(6);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(1.0, 0.0)};
    p.t_final = 2.0;
    p.n_traj = 200;
    p.master_seed = 11;
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 2, 1);

    const EnsembleResult ens = mc_ensemble(psi0, p);
    const MasterResult me = integrate_master_equation(DensityOperator::pure(psi0), p);
    REQUIRE(ens.mean.size() == me.series.size());
    // Every sample within 4 standard errors; a systematic unravelling bias
    // would instead push most normalized gaps past the median bound.
    std::vector<double> pulls;
    for (size_t k = 1; k < ens.mean.size(); ++k) {
        const double gap = std::abs(ens.mean.sz[k] - me.series.sz[k]);
        CHECK(gap <= 4.0 * ens.std_err.sz[k] + 1e-9);
        pulls.push_back(gap / std::max(ens.std_err.sz[k], 1e-300));
    }
    std::sort(pulls.begin(), pulls.end());
    CHECK(pulls[pulls.size() / 2] < 1.5);
}

TEST_CASE("ensemble density estimate converges at the Monte-Carlo rate") {
    const SpaceConfig space(5);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(1.0, 0.0)};
    p.t_final = 1.0;
    p.master_seed = 7;
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 2, 1);
    const MasterResult me = integrate_master_equation(DensityOperator::pure(psi0), p);

    SimParams p100 = p;
    p100.n_traj = 100;
    SimParams p1600 = p;
    p1600.n_traj = 1600;
    const double d100 = frobenius_distance(mc_ensemble(psi0, p100).rho_final, me.final_rho);
    const double d1600 = frobenius_distance(mc_ensemble(psi0, p1600).rho_final, me.final_rho);
    const double ratio = d100 / d1600;  // expected sqrt(16) = 4
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("ensemble reduction is byte-stable across worker counts") {
    const SpaceConfig space(4);
    SimParams p = base_params();
    p.effective.xi = Complex(1.0, 0.0);
    p.t_final = 1.0;
    p.n_traj = 37;  // not a multiple of the reduce block
    const StateVector psi0 = fock_state(space, AtomLevel::excited, 1, 0);

    setenv("PCS_SIM_THREADS", "1", 1);
    const EnsembleResult one = mc_ensemble(psi0, p);
    setenv("PCS_SIM_THREADS", "2", 1);
    const EnsembleResult two = mc_ensemble(psi0, p);
    setenv("PCS_SIM_THREADS", "5", 1);
    const EnsembleResult five = mc_ensemble(psi0, p);
    unsetenv("PCS_SIM_THREADS");

    REQUIRE(one.mean.size() == two.mean.size());
    for (size_t k = 0; k < one.mean.size(); ++k) {
        CHECK(one.mean.sz[k] == two.mean.sz[k]);
        CHECK(one.mean.sz[k] == five.mean.sz[k]);
        CHECK(one.std_err.sz[k] == two.std_err.sz[k]);
        CHECK(one.mean.pol_im[k] == two.mean.pol_im[k]);
        CHECK(one.mean.purity[k] == two.mean.purity[k]);
    }
    for (size_t i = 0; i < one.rho_final.data().size(); ++i)
        CHECK(one.rho_final.data()[i] == two.rho_final.data()[i]);
    CHECK(one.jumps.total == two.jumps.total);
    CHECK(one.jumps.total == five.jumps.total);
}

TEST_CASE("ensemble propagates trajectory failures with the index") {
    const SpaceConfig space(1);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(3.0, 0.0)};  // drives straight at the boundary
    p.gamma = 0.0;
    p.dt = 0.005;
    p.t_final = 50.0;
    p.n_traj = 2;
    const StateVector psi0 = fock_state(space, AtomLevel::ground, 0, 0);
    CHECK_THROWS_WITH_AS(mc_ensemble(psi0, p),
                         doctest::Contains("trajectory 0"), SimError);
}

TEST_CASE("steady-state detector") {
    SUBCASE("ideal dark state passes a tight tolerance") {
        const SpaceConfig space(20);
        const Complex xi(2.0, 0.0);
        const auto H = build_effective_hamiltonian(space, EffectiveParams{0.2, xi});
        const DensityOperator rho =
            DensityOperator::pure(pcs_state(space, PcsLabel{xi, 1}, AtomLevel::ground));
        CHECK(detect_steady_state(rho, H, 10.0, 1e-6));
    }
    SUBCASE("decaying state fails") {
        const SpaceConfig space(2);
        const auto H = SparseOperator::zero(space);
        const DensityOperator rho =
            DensityOperator::pure(fock_state(space, AtomLevel::excited, 0, 0));
        CHECK_FALSE(detect_steady_state(rho, H, 10.0, 1e-4));
    }
    SUBCASE("commutator criterion is required too") {
        // A charge-diagonal mixture kills the dissipator but not [H, rho].
        const SpaceConfig space(4);
        const Complex xi(1.0, 0.0);
        const auto H = build_effective_hamiltonian(space, EffectiveParams{0.5, xi});
        const DensityOperator rho =
            DensityOperator::pure(fock_state(space, AtomLevel::ground, 1, 1));
        // sigma_- annihilates it, so the dissipator vanishes; H does not.
        CHECK_FALSE(detect_steady_state(rho, H, 10.0, 1e-4));
    }
    SUBCASE("nonpositive tolerance is rejected") {
        const SpaceConfig space(2);
        const auto H = SparseOperator::zero(space);
        const DensityOperator rho =
            DensityOperator::pure(fock_state(space, AtomLevel::ground, 0, 0));
        CHECK_THROWS_AS(detect_steady_state(rho, H, 1.0, 0.0), SimError);
    }
}

TEST_CASE("quench: vacuum dark state stays dark") {
    const SpaceConfig space(2);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(2.0, 0.0)};
    p.t_final = 1.0;
    const StateVector psi0 = fock_state(space, AtomLevel::ground, 0, 0);

    SUBCASE("unitary path") {
        SimParams q = p;
        q.gamma = 0.0;
        const ObservableSeries s = quench_carrier(psi0, q);
        for (size_t k = 0; k < s.size(); ++k)
            CHECK(s.sz[k] == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("dissipative path") {
        const ObservableSeries s = quench_carrier(DensityOperator::pure(psi0), p);
        for (size_t k = 0; k < s.size(); ++k)
            CHECK(s.sz[k] == doctest::Approx(-1.0).epsilon(1e-9));
    }
}

TEST_CASE("quench: charge-0 oscillation is exactly periodic") {
    // Charge-0 blocks {|g,l,l>, |e,l-1,l-1>} Rabi-flop at angular frequency
    // 2*alpha*l, so <sz> has period pi/alpha while the state itself acquires
    // a (-1)^l block parity there (xi -> -xi) and only fully revives at
    // 2 pi / alpha. alpha is chosen so both land on the sample grid.
    const double alpha = std::acos(-1.0) / 10.0;
    const SpaceConfig space(16);
    const Complex xi(2.0, 0.0);
    SimParams p = base_params();
    p.effective = EffectiveParams{alpha, xi};
    p.gamma = 0.0;
    p.dt = 0.002;
    p.t_final = 20.0;
    p.output_every = 10;
    p.fidelity_target = PcsLabel{xi, 0};
    const StateVector psi0 = pcs_state(space, PcsLabel{xi, 0}, AtomLevel::ground);

    const ObservableSeries s = quench_carrier(psi0, p);
    CHECK(s.sz.front() == doctest::Approx(-1.0).epsilon(1e-10));

    size_t k_half = 0, k_full = 0;
    for (size_t k = 0; k < s.size(); ++k) {
        if (std::abs(s.times[k] - 10.0) < 1e-9) k_half = k;
        if (std::abs(s.times[k] - 20.0) < 1e-9) k_full = k;
    }
    REQUIRE(k_half > 0);
    REQUIRE(k_full > k_half);

    CHECK(std::abs(s.sz[k_half] - s.sz.front()) < 1e-4);
    CHECK(std::abs(s.sz[k_full] - s.sz.front()) < 1e-4);
    // overlap of the parity-flipped state with the target:
    // |<PCS(-xi)|PCS(xi)>|^2 = (J0(4)/I0(4))^2 for q = 0, |xi| = 2
    const double j0 = std::cyl_bessel_j(0.0, 4.0);
    const double expect_half = (j0 / bessel_i(0, 4.0)) * (j0 / bessel_i(0, 4.0));
    CHECK(s.fidelity_pcs[k_half] == doctest::Approx(expect_half).epsilon(1e-3));
    CHECK(s.fidelity_pcs[k_full] > 1.0 - 1e-4);
    // the excursion in between is macroscopic, so the return is a revival,
    // not stasis
    double peak = -1.0;
    for (double v : s.sz) peak = std::max(peak, v);
    CHECK(peak > -0.5);
}

TEST_CASE("quench: decay suppresses the oscillation contrast") {
    const SpaceConfig space(16);
    SimParams p = base_params();
    p.effective = EffectiveParams{0.2, Complex(2.0, 0.0)};
    p.dt = 0.002;
    p.t_final = 18.0;
    p.output_every = 25;
    const StateVector psi0 = pcs_state(space, PcsLabel{Complex(2.0, 0.0), 0}, AtomLevel::ground);

    SimParams undamped = p;
    undamped.gamma = 0.0;
    const ObservableSeries free_run = quench_carrier(psi0, undamped);
    const ObservableSeries damped = quench_carrier(DensityOperator::pure(psi0), p);

    const auto contrast = [](const ObservableSeries& s) {
        double lo = 1.0, hi = -1.0;
        for (size_t k = 0; k < s.size(); ++k) {
            if (s.times[k] < 2.0) continue;  // skip the initial collapse
            lo = std::min(lo, s.sz[k]);
            hi = std::max(hi, s.sz[k]);
        }
        return hi - lo;
    };
    CHECK(contrast(damped) < 0.5 * contrast(free_run));
}

TEST_CASE("model selector wires the full Hamiltonian") {
    const SpaceConfig space(4);
    SimParams p = base_params();
    p.model = ModelKind::full;
    p.drive.omega0 = 0.005;
    p.drive.omega1 = 1.0;
    p.drive.omega2 = 1.0;
    p.drive.phi2 = std::acos(-1.0);
    p.drive.eta = 0.05;
    const auto H = build_model_hamiltonian(space, p);
    const auto expect = build_full_hamiltonian(space, p.drive);
    CHECK(tst::max_abs_diff(tst::dense_of(H), tst::dense_of(expect)) == 0.0);

    // |g,0,0> is dark for the beam terms; with the carrier on it is not.
    SimParams q = p;
    q.gamma = 2.0;
    q.dt = 0.01;
    q.t_final = 1.0;
    const StateVector psi0 = fock_state(space, AtomLevel::ground, 0, 0);
    const MasterResult res = integrate_master_equation(DensityOperator::pure(psi0), q);
    for (size_t k = 0; k < res.series.size(); ++k)
        CHECK(std::abs(res.series.trace[k] - 1.0) < 1e-9);

    SimParams dark = q;
    dark.drive.omega0 = 0.0;
    const MasterResult still = integrate_master_equation(DensityOperator::pure(psi0), dark);
    CHECK(still.series.sz.back() == doctest::Approx(-1.0).epsilon(1e-12));
}
