#pragma once

#include <vector>

#include "pcs/density.hpp"
#include "pcs/space.hpp"
#include "pcs/state.hpp"

namespace pcs {

// Times at which the joint excitation-number distribution is dumped.
struct SnapshotRequest {
    std::vector<double> times;
};

struct Polarization {
    double re;  // <sigma_- + sigma_+>
    double im;  // i <sigma_- - sigma_+>
};

struct ChargeStats {
    double mean;
    double variance;
};

double inversion(const StateVector& psi);
double inversion(const DensityOperator& rho);

// Sign convention is fixed by sigma_- = |g><e| (entry at ground row, excited
// column): the atom state (|g> + i|e>)/sqrt(2) maps to (re, im) = (0, -1).
Polarization polarization(const StateVector& psi);
Polarization polarization(const DensityOperator& rho);

ChargeStats charge_stats(const StateVector& psi);
ChargeStats charge_stats(const DensityOperator& rho);

}  // namespace pcs
