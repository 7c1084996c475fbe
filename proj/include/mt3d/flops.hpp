#pragma once

#include <cstdint>

namespace mt3d {

// Multiply-accumulate tally for instrumented runs. Operations add their actual
// per-call work so a forward pass can be compared against the analytic count.
struct MacCounter {
    std::uint64_t macs = 0;

    void add(std::uint64_t n) { macs += n; }
    void reset() { macs = 0; }
};

}  // namespace mt3d
