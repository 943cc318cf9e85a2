#pragma once

#include <compare>

#include "pcs/errors.hpp"

namespace pcs {

enum class AtomLevel : int { ground = 0, excited = 1 };

struct BasisLabel {
    AtomLevel atom;
    int n;  // mode-a excitation
    int m;  // mode-b excitation
    bool operator==(const BasisLabel&) const = default;
};

// Truncated two-mode (cutoff inclusive per mode) x two-level Hilbert space.
//
// Flat layout is atom-major, then n-major, then m:
//   index(s, n, m) = s * (cutoff+1)^2 + n * (cutoff+1) + m
// so the ground block occupies [0, (cutoff+1)^2) and the excited block
// follows. The layout is part of the on-disk contract; do not reorder.
class SpaceConfig {
public:
    static constexpr int atom_dim = 2;

    explicit SpaceConfig(int cutoff) : cutoff_(cutoff) {
        if (cutoff < 1) throw SimError(ErrorCode::validation, "cutoff must be >= 1");
    }

    int cutoff() const noexcept { return cutoff_; }
    int modes_dim() const noexcept { return (cutoff_ + 1) * (cutoff_ + 1); }
    int dim() const noexcept { return atom_dim * modes_dim(); }

    int flat_index(AtomLevel s, int n, int m) const {
        check_bounds(n, m);
        return static_cast<int>(s) * modes_dim() + n * (cutoff_ + 1) + m;
    }

    BasisLabel unflat_index(int idx) const {
        if (idx < 0 || idx >= dim())
            throw SimError(ErrorCode::validation, "flat index out of range");
        const int md = modes_dim();
        const AtomLevel s = idx < md ? AtomLevel::ground : AtomLevel::excited;
        const int rem = idx % md;
        return BasisLabel{s, rem / (cutoff_ + 1), rem % (cutoff_ + 1)};
    }

    bool operator==(const SpaceConfig& other) const noexcept { return cutoff_ == other.cutoff_; }

private:
    void check_bounds(int n, int m) const {
        if (n < 0 || n > cutoff_ || m < 0 || m > cutoff_)
            throw SimError(ErrorCode::validation, "Fock label out of range for cutoff");
    }

    int cutoff_;
};

inline void require_same_space(const SpaceConfig& a, const SpaceConfig& b) {
    if (!(a == b)) throw SimError(ErrorCode::dimension, "operands live in different spaces");
}

}  // namespace pcs
