#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qmeas {

/// Seeded generator with platform-stable uniform doubles (the distribution
/// classes in <random> are implementation-defined; this mapping is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t raw() { return engine_(); }

    /// Index into a cumulative weight table (first entry with cum > u * total).
    std::size_t pick_weighted(const std::vector<double>& cumulative) {
        const double u = uniform() * cumulative.back();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            const std::size_t midpoint = (lo + hi) / 2;
            if (cumulative[midpoint] > u)
                hi = midpoint;
            else
                lo = midpoint + 1;
        }
        return lo;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace qmeas
