#include "pcs/states.hpp"

#include <cmath>
#include <ostream>

#include "pcs/format.hpp"

namespace pcs {

double bessel_i(int q, double x) {
    if (q < 0) throw SimError(ErrorCode::domain, "bessel order must be nonnegative");
    if (x < 0.0) throw SimError(ErrorCode::domain, "bessel argument must be nonnegative");
    if (x == 0.0) return q == 0 ? 1.0 : 0.0;
    const double half = 0.5 * x;
    double term = 1.0;
    for (int i = 1; i <= q; ++i) term *= half / static_cast<double>(i);
    double sum = term;
    for (int k = 1;; ++k) {
        term *= half * half / (static_cast<double>(k) * static_cast<double>(k + q));
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return sum;
}

StateVector fock_state(const SpaceConfig& space, AtomLevel s, int n, int m) {
    StateVector psi(space);
    psi[space.flat_index(s, n, m)] = 1.0;
    return psi;
}

StateVector pcs_state(const SpaceConfig& space, const PcsLabel& label, AtomLevel atom) {
    if (label.q < 0)
        throw SimError(ErrorCode::validation, "charge must be nonnegative (swap modes for q < 0)");
    if (label.q > space.cutoff())
        throw SimError(ErrorCode::validation, "charge exceeds the motional cutoff");

    StateVector psi(space);
    const double r = std::abs(label.xi);
    if (r == 0.0) {
        psi[space.flat_index(atom, label.q, 0)] = 1.0;
        return psi;
    }

    // a_l = xi^l / sqrt(l!(l+q)!), built by recurrence; amplitude sits on
    // |l+q, l>. Closed-form total weight is |xi|^{-q} I_q(2|xi|), which bounds
    // the discarded tail without summing it.
    const int l_max = space.cutoff() - label.q;
    double a0 = 1.0;
    for (int i = 1; i <= label.q; ++i) a0 /= std::sqrt(static_cast<double>(i));
    Complex a = a0;
    double partial = 0.0;
    for (int l = 0; l <= l_max; ++l) {
        if (l > 0) a *= label.xi / std::sqrt(static_cast<double>(l) *
                                             static_cast<double>(l + label.q));
        psi[space.flat_index(atom, l + label.q, l)] = a;
        partial += std::norm(a);
    }

    const double total = std::pow(r, -label.q) * bessel_i(label.q, 2.0 * r);
    const double tail = (total - partial) / total;
    if (!(tail < 1e-10))
        throw SimError(ErrorCode::truncation,
                       "cutoff too small for the requested pair coherent state");

    const double inv = 1.0 / std::sqrt(partial);
    for (int l = 0; l <= l_max; ++l)
        psi[space.flat_index(atom, l + label.q, l)] *= inv;
    return psi;
}

double fidelity_state(const StateVector& psi, const StateVector& phi) {
    return std::norm(psi.inner_product(phi));
}

double fidelity_density(const DensityOperator& rho, const StateVector& psi) {
    require_same_space(rho.space(), psi.space());
    const auto a = psi.amplitudes();
    const int n = rho.dim();
    Complex acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (a[static_cast<size_t>(i)] == Complex(0.0)) continue;
        Complex row = 0.0;
        for (int j = 0; j < n; ++j) row += rho(i, j) * a[static_cast<size_t>(j)];
        acc += std::conj(a[static_cast<size_t>(i)]) * row;
    }
    return acc.real();
}

double purity(const DensityOperator& rho) {
    double s = 0.0;
    for (const Complex& v : rho.data()) s += std::norm(v);
    return s;
}

MotionalDistribution motional_marginal(const StateVector& psi) {
    const SpaceConfig& sp = psi.space();
    MotionalDistribution dist(sp.cutoff());
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited})
        for (int n = 0; n <= sp.cutoff(); ++n)
            for (int m = 0; m <= sp.cutoff(); ++m)
                dist.at(n, m) += std::norm(psi[sp.flat_index(s, n, m)]);
    return dist;
}

MotionalDistribution motional_marginal(const DensityOperator& rho) {
    const SpaceConfig& sp = rho.space();
    MotionalDistribution dist(sp.cutoff());
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited})
        for (int n = 0; n <= sp.cutoff(); ++n)
            for (int m = 0; m <= sp.cutoff(); ++m) {
                const int i = sp.flat_index(s, n, m);
                dist.at(n, m) += rho(i, i).real();
            }
    return dist;
}

double MotionalDistribution::total() const noexcept {
    double s = 0.0;
    for (double p : probs_) s += p;
    return s;
}

void MotionalDistribution::write_csv(std::ostream& out) const {
    out << "n,m,p\n";
    for (int n = 0; n <= cutoff_; ++n)
        for (int m = 0; m <= cutoff_; ++m)
            if (at(n, m) != 0.0)
                out << n << ',' << m << ',' << format_double(at(n, m)) << '\n';
}

}  // namespace pcs
