#pragma once

#include <charconv>
#include <string>

#include "pcs/errors.hpp"

namespace pcs {

// Shortest decimal form that round-trips to the same double. Keeps output
// files byte-stable across runs and platforms with the same FP behavior.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw SimError(ErrorCode::io, "double formatting failed");
    return std::string(buf, res.ptr);
}

}  // namespace pcs
