#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace evsnn {

/// Seeded pseudo-random source used everywhere randomness is needed.
///
/// The engine is std::mt19937_64 (fully specified by the C++ standard). The
/// standard distributions are implementation-defined, so every derived draw
/// is computed here from raw 64-bit outputs:
///   uniform()        = (x >> 11) * 2^-53            in [0, 1)
///   uniform_int(n)   = floor(uniform() * n)
///   exponential(r)   = -log(1 - uniform()) / r
///   bernoulli(p)     = uniform() < p
/// Another implementation reproduces a stream by seeding MT19937-64 the same
/// way and applying these formulas.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t uniform_int(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i)
        {
            const auto j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace evsnn
