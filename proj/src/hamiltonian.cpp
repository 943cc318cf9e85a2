#include "pcs/hamiltonian.hpp"

#include <cmath>
#include <numbers>

#include "pcs/operators.hpp"

namespace pcs {

namespace {

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;

SparseOperator op_pow(const SparseOperator& op, int k) {
    SparseOperator out = SparseOperator::identity(op.space());
    for (int i = 0; i < k; ++i) out = out.multiply(op);
    return out;
}

void validate_drive(const DriveParams& d) {
    if (!(d.eta > 0.0) || !(d.eta < 1.0))
        throw SimError(ErrorCode::validation, "lamb-dicke parameter must lie in (0, 1)");
    if (d.j_max < 0) throw SimError(ErrorCode::validation, "series order must be nonnegative");
    if (d.omega0 < 0.0 || d.omega1 < 0.0 || d.omega2 < 0.0)
        throw SimError(ErrorCode::validation, "rabi frequencies must be nonnegative");
}

}  // namespace

std::pair<SparseOperator, SparseOperator> rotated_mode_ops(const SpaceConfig& space) {
    const auto a = ladder_op(space, Mode::a, LadderDirection::lower);
    const auto b = ladder_op(space, Mode::b, LadderDirection::lower);
    return {a.scaled_sum(b, 1.0).scaled(kInvSqrt2), a.scaled(-1.0).scaled_sum(b, 1.0).scaled(kInvSqrt2)};
}

SparseOperator build_effective_hamiltonian(const SpaceConfig& space, const EffectiveParams& p) {
    if (p.alpha < 0.0)
        throw SimError(ErrorCode::validation, "effective coupling must be nonnegative");
    const auto sp = atom_op(space, AtomPauli::sigma_plus);
    const auto sm = atom_op(space, AtomPauli::sigma_minus);
    const auto lower_pair = pair_annihilation(space).multiply(sp);
    const auto raise_pair = sm.multiply(pair_creation(space));
    return lower_pair.scaled(p.alpha)
        .scaled_sum(sp, -p.alpha * p.xi)
        .scaled_sum(raise_pair, p.alpha)
        .scaled_sum(sm, -p.alpha * std::conj(p.xi));
}

// Rebuilds the entry set as (H + H^dag)/2 so conjugate pairs are equal to the
// last bit (the h.c. chains below multiply in a different association order,
// which costs an ulp). Boundary losses are kept verbatim.
static SparseOperator symmetrized(const SparseOperator& h) {
    SparseOperator::Builder b(h.space());
    h.for_each_entry([&](int r, int c, Complex v) {
        b.add(r, c, 0.5 * v);
        b.add(c, r, 0.5 * std::conj(v));
    });
    for (const auto& l : h.boundary_loss()) b.add_boundary_loss(l.col, l.weight);
    return std::move(b).build();
}

SparseOperator build_full_hamiltonian(const SpaceConfig& space, const DriveParams& d) {
    validate_drive(d);

    const auto raise_a = ladder_op(space, Mode::a, LadderDirection::raise);
    const auto raise_b = ladder_op(space, Mode::b, LadderDirection::raise);
    const auto lower_a = ladder_op(space, Mode::a, LadderDirection::lower);
    const auto [low_A, low_B] = rotated_mode_ops(space);
    const auto raise_A = raise_a.scaled_sum(raise_b, 1.0).scaled(kInvSqrt2);
    const auto raise_B = raise_a.scaled(-1.0).scaled_sum(raise_b, 1.0).scaled(kInvSqrt2);

    const auto sm = atom_op(space, AtomPauli::sigma_minus);
    const auto sp = atom_op(space, AtomPauli::sigma_plus);
    const Complex e0 = std::polar(d.omega0, d.phi0);
    const Complex e1 = std::polar(d.omega1, d.phi1);
    const Complex e2 = std::polar(d.omega2, d.phi2);
    const double envelope = std::exp(-0.5 * d.eta * d.eta);

    SparseOperator h = SparseOperator::zero(space);
    double fact_j = 1.0;      // j!
    double fact_j2 = 2.0;     // (j+2)!
    double eta_2j = 1.0;      // eta^(2j)
    for (int j = 0; j <= d.j_max; ++j) {
        if (j > 0) {
            fact_j *= static_cast<double>(j);
            fact_j2 *= static_cast<double>(j + 2);
            eta_2j *= d.eta * d.eta;
        }
        // (i eta)^(2j+2) / (j!(j+2)!) is real with sign (-1)^(j+1)
        const double side_coef =
            envelope * ((j % 2 == 0) ? -1.0 : 1.0) * eta_2j * d.eta * d.eta / (fact_j * fact_j2);
        // (i eta)^(2j) / (j! j!) is real with sign (-1)^j
        const double carr_coef =
            envelope * ((j % 2 == 0) ? 1.0 : -1.0) * eta_2j / (fact_j * fact_j);

        const auto chain_A = op_pow(low_A, j).multiply(op_pow(raise_A, j + 2));
        const auto chain_B = op_pow(low_B, j).multiply(op_pow(raise_B, j + 2));
        const auto chain_c = op_pow(lower_a, j).multiply(op_pow(raise_a, j));

        auto side = chain_A.scaled(side_coef * e1).scaled_sum(chain_B, side_coef * e2);
        auto carr = chain_c.scaled(carr_coef * e0);
        h = h.scaled_sum(side.scaled_sum(carr, 1.0).multiply(sm), 1.0);

        // h.c. from primitive factors: (X^j (X^dag)^(j+2))^dag = X^(j+2) (X^dag)^j,
        // and the carrier chain is self-adjoint under truncation.
        const auto chain_A_dag = op_pow(low_A, j + 2).multiply(op_pow(raise_A, j));
        const auto chain_B_dag = op_pow(low_B, j + 2).multiply(op_pow(raise_B, j));
        auto side_dag = chain_A_dag.scaled(side_coef * std::conj(e1))
                            .scaled_sum(chain_B_dag, side_coef * std::conj(e2));
        auto carr_dag = chain_c.scaled(carr_coef * std::conj(e0));
        h = h.scaled_sum(side_dag.scaled_sum(carr_dag, 1.0).multiply(sp), 1.0);
    }
    return symmetrized(h);
}

double reduction_check(const SpaceConfig& space, const DriveParams& d) {
    if (std::abs(d.phi1) > 1e-12)
        throw SimError(ErrorCode::validation, "reduction requires phi1 = 0");
    if (std::abs(d.phi2 - std::numbers::pi) > 1e-12)
        throw SimError(ErrorCode::validation, "reduction requires phi2 = pi");
    if (std::abs(d.omega1 - d.omega2) > 1e-12 * std::max(1.0, d.omega1))
        throw SimError(ErrorCode::validation, "reduction requires equal sideband drives");
    if (!(d.omega1 > 0.0))
        throw SimError(ErrorCode::validation, "reduction requires a nonzero sideband drive");

    DriveParams leading = d;
    leading.j_max = 0;
    const auto full = build_full_hamiltonian(space, leading);

    EffectiveParams p;
    p.alpha = d.omega1 * d.eta * d.eta * std::exp(-0.5 * d.eta * d.eta);
    p.xi = std::polar(d.omega0 / (d.omega1 * d.eta * d.eta), -d.phi0);
    const auto eff = build_effective_hamiltonian(space, p);

    // full(j_max = 0) should equal minus the effective operator
    return full.scaled_sum(eff, 1.0).max_abs_entry();
}

}  // namespace pcs
