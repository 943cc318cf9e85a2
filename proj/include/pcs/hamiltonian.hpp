#pragma once

#include <complex>
#include <utility>

#include "pcs/sparse.hpp"
#include "pcs/space.hpp"

namespace pcs {

// Raw two-beam-plus-carrier drive. Frequencies and rates share one inverse
// time unit. j_max truncates the Lamb-Dicke series; the dropped term has
// magnitude eta^(2 j_max + 2) / (j_max! (j_max+2)!), so the default 3 is
// plenty for eta <= 0.25. Callers that only probe the leading order (the
// reduction diagnostic) pass j_max = 0 deliberately.
struct DriveParams {
    double omega0 = 0.0;
    double omega1 = 0.0;
    double omega2 = 0.0;
    double phi0 = 0.0;
    double phi1 = 0.0;
    double phi2 = 0.0;
    double eta = 0.1;
    int j_max = 3;
};

// Leading-order model: coupling alpha and complex drive xi. alpha = 0 turns
// the Hamiltonian off entirely (pure decay), which the relaxation tests use.
struct EffectiveParams {
    double alpha = 0.0;
    Complex xi;
};

// Normal-mode combinations A = (a + b)/sqrt(2), B = (-a + b)/sqrt(2),
// returned as (A_lower, B_lower).
std::pair<SparseOperator, SparseOperator> rotated_mode_ops(const SpaceConfig& space);

// alpha [a b - xi] sigma_+  +  h.c.
//
// Sign convention: this is the leading-order Hamiltonian written with alpha
// real and positive. The j = 0 slice of the full drive series below equals
// MINUS this operator once alpha = omega1 eta^2 exp(-eta^2/2) and
// xi = omega0 / (omega1 eta^2) exp(-i phi0); the overall sign rides in the
// phases of the raw drives and is physically inert. reduction_check applies
// the compensating sign so the two builders can be compared entrywise.
SparseOperator build_effective_hamiltonian(const SpaceConfig& space, const EffectiveParams& p);

// Lamb-Dicke series drive Hamiltonian: two sideband beams expressed through
// the rotated modes plus a carrier, coupled to sigma_-, with the Hermitian
// conjugate added from primitive factors so boundary losses are tracked on
// both sides.
SparseOperator build_full_hamiltonian(const SpaceConfig& space, const DriveParams& d);

// Max entrywise |full(j_max=0) + effective| with the effective parameters
// derived from d (see the sign note above). Requires phi1 = 0, phi2 = pi,
// omega1 = omega2 > 0.
double reduction_check(const SpaceConfig& space, const DriveParams& d);

}  // namespace pcs
