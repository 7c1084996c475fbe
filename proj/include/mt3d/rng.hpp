#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mt3d {

// Deterministic RNG with portable draw semantics. std::mt19937_64 output is
// pinned by the standard, but the std:: distributions are not, so uniform and
// normal draws are derived here directly from the raw 64-bit stream. The same
// seed therefore produces the same values on every platform, which the golden
// hashes and bit-identical output checks rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant at 64-bit range.
    std::uint64_t uniform_index(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }

    // Standard normal via Box-Muller on the portable uniform stream.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stable derivation of per-stream seeds (e.g. one stream per frame).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 step over the combined value
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mt3d
