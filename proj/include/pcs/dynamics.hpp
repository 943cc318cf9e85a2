#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pcs/density.hpp"
#include "pcs/hamiltonian.hpp"
#include "pcs/sparse.hpp"
#include "pcs/state.hpp"
#include "pcs/states.hpp"

namespace pcs {

enum class ModelKind { effective, full };

struct SimParams {
    ModelKind model = ModelKind::effective;
    EffectiveParams effective{0.2, Complex(2.0, 0.0)};
    DriveParams drive{};
    double gamma = 10.0;
    double dt = 0.005;
    double t_final = 200.0;
    int n_traj = 1000;
    std::uint64_t master_seed = 1;
    int output_every = 20;
    // When set, the fidelity channel tracks overlap with |g> tensor this
    // pair coherent state; otherwise the channel is NaN.
    std::optional<PcsLabel> fidelity_target;
};

// Sampled observables on a shared time grid. Channels that are undefined for
// a given run kind (e.g. ensemble purity between density estimates) hold NaN.
struct ObservableSeries {
    std::vector<double> times;
    std::vector<double> sz;
    std::vector<double> pol_re;
    std::vector<double> pol_im;
    std::vector<double> trace;
    std::vector<double> purity;
    std::vector<double> q_mean;
    std::vector<double> leak;
    std::vector<double> fidelity_pcs;

    size_t size() const noexcept { return times.size(); }
};

struct TrajectoryResult {
    StateVector final_state;
    std::vector<double> jump_times;
    ObservableSeries series;
    std::uint64_t seed_used;
};

struct JumpStats {
    double mean_per_traj = 0.0;
    int min_per_traj = 0;
    int max_per_traj = 0;
    long total = 0;
};

struct MasterResult {
    DensityOperator final_rho;
    ObservableSeries series;
};

struct EnsembleResult {
    DensityOperator rho_final;  // average of |psi><psi| at t_final
    ObservableSeries mean;
    ObservableSeries std_err;  // standard error of the mean; 0 when n_traj = 1
    JumpStats jumps;
};

// Mid-run density snapshots. The deterministic integrator emits at the step
// nearest each requested time; the ensemble path emits at the nearest sample.
struct SnapshotSink {
    std::vector<double> times;
    std::function<void(double, const DensityOperator&)> emit;
};

// Hamiltonian selected by p.model, built from the matching parameter set.
SparseOperator build_model_hamiltonian(const SpaceConfig& space, const SimParams& p);

// Exact master-equation right-hand side on the full space:
// -i[H, rho] + gamma (sigma_- rho sigma_+ - {sigma_+ sigma_-, rho}/2).
DensityOperator lindblad_rhs(const DensityOperator& rho, const SparseOperator& H, double gamma);

// Fixed-step 4th-order integration. The evolution is confined to the exact
// support closure of the initial state under the Hamiltonian and jump
// operator, which turns the reference-scale run into a small dense problem
// without any approximation: amplitudes outside the closure stay exactly
// zero. Trace is renormalized and the Hermitian part enforced every step.
MasterResult integrate_master_equation(const DensityOperator& rho0, const SimParams& p,
                                       const SnapshotSink* snapshots = nullptr);

// Quantum-jump unravelling: propagate under H - i(gamma/2) sigma_+ sigma_-
// with the same stepper, jump when the squared norm crosses a pre-drawn
// uniform threshold (crossing located by bisection to 1e-3 dt), apply
// sigma_-, renormalize, redraw. gamma = 0 runs skip the jump machinery.
TrajectoryResult mc_trajectory(const StateVector& psi0, const SimParams& p, int traj_index);

// Trajectory ensemble. Per-trajectory streams are keyed by (master_seed,
// index) and reduced in index order, so results are byte-stable for any
// worker-thread count. Thread count comes from PCS_SIM_THREADS (default 1).
EnsembleResult mc_ensemble(const StateVector& psi0, const SimParams& p,
                           const SnapshotSink* snapshots = nullptr);

// True iff both the master-equation derivative and [H, rho] have max-entry
// norm below tol.
bool detect_steady_state(const DensityOperator& rho, const SparseOperator& H, double gamma,
                         double tol);

// Continue evolving with the constant drive removed (xi = 0 effective,
// omega0 = 0 full). A pure input with gamma = 0 takes the unitary
// state-vector path; anything else integrates the master equation.
ObservableSeries quench_carrier(const DensityOperator& steady, const SimParams& p,
                                const SnapshotSink* snapshots = nullptr);
ObservableSeries quench_carrier(const StateVector& steady, const SimParams& p,
                                const SnapshotSink* snapshots = nullptr);

}  // namespace pcs
