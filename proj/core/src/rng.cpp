#include "tilp/rng.hpp"

#include <cmath>

namespace tilp {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// murmur3 finalizer; full 64-bit avalanche
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 33u;
    z *= 0xff51afd7ed558ccdull;
    z ^= z >> 33u;
    z *= 0xc4ceb9fe1a85ec53ull;
    z ^= z >> 33u;
    return z;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
    std::uint64_t h = mix64(seed_ + 0x9e3779b97f4a7c15ull);
    h = mix64(h ^ (stream_ + 0xbf58476d1ce4e5b9ull));
    h = mix64(h ^ (counter_ + 0x94d049bb133111ebull));
    ++counter_;
    return h;
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    // multiply-shift; bias is negligible for the bounds used here
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<std::uint64_t>((wide * bound) >> 64u);
}

double RngStream::next_normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::complex<double> RngStream::next_complex_normal() {
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    double r = std::sqrt(-std::log(u1));
    return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
}

RngStream RngStream::fork(std::uint64_t child_id) const {
    std::uint64_t child_stream =
        mix64(stream_ ^ mix64(child_id + 0xd6e8feb86659fd93ull));
    return RngStream(seed_, child_stream);
}

}  // namespace tilp
