#pragma once

#include <cstdint>

namespace pcs {

// Counter-based generator: draw k is a hash of (key, k), where the key mixes
// the master seed with the stream (trajectory) index. No hidden state beyond
// the counter, so any trajectory can be replayed in isolation and results
// do not depend on which worker thread ran it.
class CounterRng {
public:
    CounterRng(std::uint64_t master_seed, std::uint64_t stream)
        : key_(mix(master_seed + kGolden * (stream + 1))) {}

    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64() noexcept { return mix(key_ + kGolden * (++counter_)); }

    // Uniform on the open interval (0, 1); never returns an endpoint.
    double next_uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) noexcept {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace pcs
