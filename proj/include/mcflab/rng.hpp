#pragma once

#include <cstdint>
#include <random>

namespace mcflab {

/// Seeded generator with a portable uniform mapping (the standard
/// distributions are implementation-defined, which would break
/// cross-platform byte-identical outputs).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Uniform in [0, 1) from the top 53 bits.
    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
    std::uint64_t bits() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace mcflab
