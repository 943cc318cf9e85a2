#pragma once

#include "pcs/density.hpp"
#include "pcs/sparse.hpp"
#include "pcs/space.hpp"
#include "pcs/state.hpp"

namespace pcs {

enum class Mode { a, b };
enum class LadderDirection { lower, raise };
enum class AtomPauli { sigma_plus, sigma_minus, sigma_z };

inline int flat_index(const SpaceConfig& space, AtomLevel s, int n, int m) {
    return space.flat_index(s, n, m);
}
inline BasisLabel unflat_index(const SpaceConfig& space, int index) {
    return space.unflat_index(index);
}

// Single-mode ladder operator acting as identity on the other tensor factors.
// Raising at n = cutoff drops the amplitude and records a boundary loss of
// weight cutoff+1, matching |<n+1|a†|n>|^2 just past the edge.
SparseOperator ladder_op(const SpaceConfig& space, Mode mode, LadderDirection direction);

SparseOperator atom_op(const SpaceConfig& space, AtomPauli which);

// lower(a) composed with lower(b): |n,m> -> sqrt(n m) |n-1,m-1>.
SparseOperator pair_annihilation(const SpaceConfig& space);

// raise(a) composed with raise(b), with the composed boundary losses.
SparseOperator pair_creation(const SpaceConfig& space);

// Diagonal occupation difference n - m.
SparseOperator charge_op(const SpaceConfig& space);

StateVector apply_to_state(const SparseOperator& op, const StateVector& psi);

// op_left * rho * op_right, unnormalized. The result inherits rho's leak plus
// the ket-side boundary losses of op_left weighted by the diagonal of rho.
DensityOperator apply_to_density(const SparseOperator& op_left, const DensityOperator& rho,
                                 const SparseOperator& op_right);

}  // namespace pcs
