#include "pcs/observables.hpp"

#include <cmath>
#include <complex>

namespace pcs {

namespace {

Polarization from_lowering_parts(Complex lower_expect, Complex raise_expect) {
    const Complex re_c = lower_expect + raise_expect;
    const Complex im_c = Complex(0.0, 1.0) * (lower_expect - raise_expect);
    if (std::abs(re_c.imag()) >= 1e-12 || std::abs(im_c.imag()) >= 1e-12)
        throw SimError(ErrorCode::numerical, "polarization has a non-real residue");
    return {re_c.real(), im_c.real()};
}

}  // namespace

double inversion(const StateVector& psi) {
    const int block = psi.space().modes_dim();
    double acc = 0.0;
    for (int k = 0; k < block; ++k) {
        acc -= std::norm(psi[k]);
        acc += std::norm(psi[block + k]);
    }
    return acc;
}

double inversion(const DensityOperator& rho) {
    const int block = rho.space().modes_dim();
    double acc = 0.0;
    for (int k = 0; k < block; ++k) {
        acc -= rho(k, k).real();
        acc += rho(block + k, block + k).real();
    }
    return acc;
}

Polarization polarization(const StateVector& psi) {
    const int block = psi.space().modes_dim();
    Complex lower = 0.0;  // <psi| (|g><e| tensor 1) |psi>
    for (int k = 0; k < block; ++k) lower += std::conj(psi[k]) * psi[block + k];
    return from_lowering_parts(lower, std::conj(lower));
}

Polarization polarization(const DensityOperator& rho) {
    const int block = rho.space().modes_dim();
    Complex lower = 0.0;  // Tr(sigma_- rho) = sum_k rho[(e,k),(g,k)]
    Complex upper = 0.0;
    for (int k = 0; k < block; ++k) {
        lower += rho(block + k, k);
        upper += rho(k, block + k);
    }
    return from_lowering_parts(lower, upper);
}

ChargeStats charge_stats(const StateVector& psi) {
    const SpaceConfig& sp = psi.space();
    double mean = 0.0, second = 0.0;
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited})
        for (int n = 0; n <= sp.cutoff(); ++n)
            for (int m = 0; m <= sp.cutoff(); ++m) {
                const double p = std::norm(psi[sp.flat_index(s, n, m)]);
                if (p == 0.0) continue;
                const double q = static_cast<double>(n - m);
                mean += p * q;
                second += p * q * q;
            }
    return {mean, second - mean * mean};
}

ChargeStats charge_stats(const DensityOperator& rho) {
    const SpaceConfig& sp = rho.space();
    double mean = 0.0, second = 0.0;
    for (AtomLevel s : {AtomLevel::ground, AtomLevel::excited})
        for (int n = 0; n <= sp.cutoff(); ++n)
            for (int m = 0; m <= sp.cutoff(); ++m) {
                const int i = sp.flat_index(s, n, m);
                const double p = rho(i, i).real();
                const double q = static_cast<double>(n - m);
                mean += p * q;
                second += p * q * q;
            }
    return {mean, second - mean * mean};
}

}  // namespace pcs
