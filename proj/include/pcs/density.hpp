#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "pcs/space.hpp"
#include "pcs/state.hpp"

namespace pcs {

// Dense density operator in row-major order with the same flat basis as
// StateVector. Dense storage is fine at desk scale: the relaxation runs
// compress onto a small support anyway (see dynamics.cpp).
class DensityOperator {
public:
    explicit DensityOperator(const SpaceConfig& space)
        : space_(space),
          n_(space.dim()),
          data_(static_cast<size_t>(space.dim()) * static_cast<size_t>(space.dim())) {}

    static DensityOperator pure(const StateVector& psi) {
        DensityOperator rho(psi.space());
        const auto a = psi.amplitudes();
        for (int i = 0; i < rho.n_; ++i) {
            const Complex ci = a[static_cast<size_t>(i)];
            if (ci == Complex(0.0)) continue;
            for (int j = 0; j < rho.n_; ++j)
                rho(i, j) = ci * std::conj(a[static_cast<size_t>(j)]);
        }
        rho.leak_ = psi.leak();
        return rho;
    }

    const SpaceConfig& space() const noexcept { return space_; }
    int dim() const noexcept { return n_; }

    Complex& operator()(int i, int j) {
        return data_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)];
    }
    const Complex& operator()(int i, int j) const {
        return data_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)];
    }

    std::span<Complex> data() noexcept { return data_; }
    std::span<const Complex> data() const noexcept { return data_; }

    Complex trace() const noexcept {
        Complex t = 0.0;
        for (int i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }

    void hermitize() noexcept {
        for (int i = 0; i < n_; ++i) {
            (*this)(i, i) = Complex((*this)(i, i).real(), 0.0);
            for (int j = i + 1; j < n_; ++j) {
                const Complex avg = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
                (*this)(i, j) = avg;
                (*this)(j, i) = std::conj(avg);
            }
        }
    }

    void rescale(double factor) noexcept {
        for (Complex& v : data_) v *= factor;
    }

    double leak() const noexcept { return leak_; }
    void add_leak(double delta) noexcept { leak_ += delta; }

private:
    SpaceConfig space_;
    int n_;
    std::vector<Complex> data_;
    double leak_ = 0.0;
};

}  // namespace pcs
