#pragma once

#include <complex>
#include <cstdint>

namespace tilp {

/// Counter-based random stream. A draw is a pure function of
/// (seed, stream_id, counter), so replaying any call sequence with the same
/// triple reproduces the same values bit for bit, and streams forked with
/// distinct ids are independent regardless of the order in which threads
/// consume them.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double next_double();

    /// Uniform in [lo, hi).
    double next_uniform(double lo, double hi);

    /// Uniform integer in [0, bound); bound must be positive.
    std::uint64_t next_below(std::uint64_t bound);

    /// Standard normal via Box-Muller; consumes two counter positions.
    double next_normal();

    /// Circularly-symmetric complex normal with unit second moment,
    /// i.e. real and imaginary parts are N(0, 1/2).
    std::complex<double> next_complex_normal();

    /// Derive an independent child stream. Forking does not advance this
    /// stream's counter, so fork(i) is reproducible at any time.
    RngStream fork(std::uint64_t child_id) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace tilp
