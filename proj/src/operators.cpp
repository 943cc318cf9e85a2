#include "pcs/operators.hpp"

#include <cmath>

namespace pcs {

SparseOperator ladder_op(const SpaceConfig& space, Mode mode, LadderDirection direction) {
    const int top = space.cutoff();
    SparseOperator::Builder b(space);
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited}) {
        for (int n = 0; n <= top; ++n) {
            for (int m = 0; m <= top; ++m) {
                const int src = space.flat_index(s, n, m);
                const int occ = (mode == Mode::a) ? n : m;
                if (direction == LadderDirection::lower) {
                    if (occ == 0) continue;
                    const int dst = (mode == Mode::a) ? space.flat_index(s, n - 1, m)
                                                      : space.flat_index(s, n, m - 1);
                    b.add(dst, src, std::sqrt(static_cast<double>(occ)));
                } else {
                    if (occ == top) {
                        b.add_boundary_loss(src, static_cast<double>(top) + 1.0);
                        continue;
                    }
                    const int dst = (mode == Mode::a) ? space.flat_index(s, n + 1, m)
                                                      : space.flat_index(s, n, m + 1);
                    b.add(dst, src, std::sqrt(static_cast<double>(occ) + 1.0));
                }
            }
        }
    }
    return std::move(b).build();
}

SparseOperator atom_op(const SpaceConfig& space, AtomPauli which) {
    SparseOperator::Builder b(space);
    const int block = space.modes_dim();
    for (int k = 0; k < block; ++k) {
        const int g = k;
        const int e = block + k;
        switch (which) {
            case AtomPauli::sigma_minus: b.add(g, e, 1.0); break;
            case AtomPauli::sigma_plus: b.add(e, g, 1.0); break;
            case AtomPauli::sigma_z:
                b.add(g, g, -1.0);
                b.add(e, e, 1.0);
                break;
        }
    }
    return std::move(b).build();
}

SparseOperator pair_annihilation(const SpaceConfig& space) {
    return ladder_op(space, Mode::a, LadderDirection::lower)
        .multiply(ladder_op(space, Mode::b, LadderDirection::lower));
}

SparseOperator pair_creation(const SpaceConfig& space) {
    return ladder_op(space, Mode::a, LadderDirection::raise)
        .multiply(ladder_op(space, Mode::b, LadderDirection::raise));
}

SparseOperator charge_op(const SpaceConfig& space) {
    SparseOperator::Builder b(space);
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited})
        for (int n = 0; n <= space.cutoff(); ++n)
            for (int m = 0; m <= space.cutoff(); ++m)
                b.add(space.flat_index(s, n, m), space.flat_index(s, n, m),
                      static_cast<double>(n - m));
    return std::move(b).build();
}

StateVector apply_to_state(const SparseOperator& op, const StateVector& psi) {
    StateVector out = psi;
    op.apply(out);
    return out;
}

DensityOperator apply_to_density(const SparseOperator& op_left, const DensityOperator& rho,
                                 const SparseOperator& op_right) {
    require_same_space(op_left.space(), rho.space());
    require_same_space(rho.space(), op_right.space());
    const int n = rho.dim();

    DensityOperator tmp(rho.space());
    op_left.for_each_entry([&](int r, int k, Complex v) {
        for (int j = 0; j < n; ++j) tmp(r, j) += v * rho(k, j);
    });

    DensityOperator out(rho.space());
    op_right.for_each_entry([&](int k, int c, Complex v) {
        for (int i = 0; i < n; ++i) out(i, c) += tmp(i, k) * v;
    });

    double lost = 0.0;
    for (const auto& l : op_left.boundary_loss())
        lost += l.weight * std::max(0.0, rho(l.col, l.col).real());
    out.add_leak(rho.leak() + lost);
    return out;
}

}  // namespace pcs
