#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include "pcs/density.hpp"
#include "pcs/space.hpp"
#include "pcs/state.hpp"

namespace pcs {

// Target state label: eigenvalue xi of the pair annihilation operator and
// conserved occupation difference q. Negative q is handled by swapping the
// mode labels before construction, so only q >= 0 is accepted here.
struct PcsLabel {
    Complex xi;
    int q = 0;
};

// Joint excitation-number probabilities over (n, m).
class MotionalDistribution {
public:
    explicit MotionalDistribution(int cutoff)
        : cutoff_(cutoff),
          probs_(static_cast<size_t>(cutoff + 1) * static_cast<size_t>(cutoff + 1)) {}

    int cutoff() const noexcept { return cutoff_; }
    double& at(int n, int m) {
        return probs_[static_cast<size_t>(n) * static_cast<size_t>(cutoff_ + 1) +
                      static_cast<size_t>(m)];
    }
    double at(int n, int m) const {
        return probs_[static_cast<size_t>(n) * static_cast<size_t>(cutoff_ + 1) +
                      static_cast<size_t>(m)];
    }
    double total() const noexcept;

    // Rows `n,m,p`, nonzero entries only, row-major order.
    void write_csv(std::ostream& out) const;

private:
    int cutoff_;
    std::vector<double> probs_;
};

// Modified Bessel function of the first kind, integer order, by direct
// series summation. Accurate to better than 1e-12 relative for x <= 50.
double bessel_i(int q, double x);

StateVector fock_state(const SpaceConfig& space, AtomLevel s, int n, int m);

// Normalized eigenstate of the pair annihilation operator with the given
// atom factor. Amplitudes sit on |l+q, l> with weight xi^l / sqrt(l!(l+q)!)
// times the closed-form normalization; the truncated tail must carry less
// than 1e-10 probability or construction fails.
StateVector pcs_state(const SpaceConfig& space, const PcsLabel& label, AtomLevel atom);

double fidelity_state(const StateVector& psi, const StateVector& phi);
double fidelity_density(const DensityOperator& rho, const StateVector& psi);

// Tr(rho^2) via the entry magnitude sum, valid for Hermitian rho.
double purity(const DensityOperator& rho);

MotionalDistribution motional_marginal(const StateVector& psi);
MotionalDistribution motional_marginal(const DensityOperator& rho);

}  // namespace pcs
