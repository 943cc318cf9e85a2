#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "pcs/space.hpp"

namespace pcs {

using Complex = std::complex<double>;

// Complex amplitude vector over the flat basis, plus an accumulator for
// probability discarded at the truncation boundary. The leak accumulator
// only ever grows; integrators abort once it passes the guard threshold.
class StateVector {
public:
    explicit StateVector(const SpaceConfig& space)
        : space_(space), amps_(static_cast<size_t>(space.dim())) {}

    const SpaceConfig& space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }

    std::span<Complex> amplitudes() noexcept { return amps_; }
    std::span<const Complex> amplitudes() const noexcept { return amps_; }

    Complex& operator[](int i) { return amps_[static_cast<size_t>(i)]; }
    const Complex& operator[](int i) const { return amps_[static_cast<size_t>(i)]; }

    double norm2() const noexcept {
        double s = 0.0;
        for (const Complex& a : amps_) s += std::norm(a);
        return s;
    }
    double norm() const noexcept { return std::sqrt(norm2()); }

    void normalize() {
        const double n = norm();
        if (n == 0.0) throw SimError(ErrorCode::numerical, "cannot normalize the zero vector");
        const double inv = 1.0 / n;
        for (Complex& a : amps_) a *= inv;
    }

    double leak() const noexcept { return leak_; }
    void add_leak(double delta) noexcept { leak_ += delta; }

    Complex inner_product(const StateVector& other) const {
        require_same_space(space_, other.space_);
        Complex acc = 0.0;
        for (size_t i = 0; i < amps_.size(); ++i) acc += std::conj(amps_[i]) * other.amps_[i];
        return acc;
    }

private:
    SpaceConfig space_;
    std::vector<Complex> amps_;
    double leak_ = 0.0;
};

}  // namespace pcs
