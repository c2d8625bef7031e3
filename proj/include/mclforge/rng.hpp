#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mclforge {

/// Seeded random stream with hand-rolled distributions.
///
/// std::mt19937_64 has a standard-mandated output sequence, but the
/// std::*_distribution adapters are implementation-defined. Every draw here
/// is derived from raw engine output, so identical seeds give identical
/// streams on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the spare value is cached so the
    /// stream consumes engine output in a fixed pattern.
    double normal();

    /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
    int uniform_int(int n);

    /// Derive an independent child stream. Forking with distinct ids from
    /// the same parent state yields decorrelated, reproducible streams.
    Rng fork(std::uint64_t stream_id);

    /// Fisher-Yates shuffle driven by this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// splitmix64 finalizer; used to decorrelate fork seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace mclforge
