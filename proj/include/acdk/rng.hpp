#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>

namespace acdk {

namespace detail {

constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Counter-based generator. Draw i of a stream with key k is
/// mix64(k + i * golden), which for a root stream is exactly SplitMix64
/// seeded with k. Child streams depend only on (key, label), never on how
/// many draws the parent has made.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(seed) {}

    std::uint64_t next_u64() {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::kGoldenGamma);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    [[nodiscard]] Rng fork(std::string_view label) const {
        return Rng(detail::mix64(key_ ^ detail::mix64(detail::fnv1a64(label))));
    }

    [[nodiscard]] Rng fork(std::string_view label, std::uint64_t index) const {
        return Rng(detail::mix64(fork(label).key_ + detail::mix64(index + 1)));
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

inline double rng_uniform(Rng& rng, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("rng_uniform: lo must not exceed hi");
    if (lo == hi) return lo;
    return lo + (hi - lo) * rng.next_unit();
}

/// Uniform integer in [lo, hi] (inclusive).
inline int rng_int(Rng& rng, int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("rng_int: empty range");
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
    return lo + static_cast<int>(rng.next_u64() % span);
}

// Box-Muller; one normal per two uniforms so the stream position is fixed.
inline double rng_normal(Rng& rng, double mu, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("rng_normal: sigma must be >= 0");
    const double u1 = 1.0 - rng.next_unit();  // (0, 1]
    const double u2 = rng.next_unit();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mu + sigma * z;
}

/// Knuth multiplication for small rates, Hormann's PTRS transformed
/// rejection above 10.
inline long rng_poisson(Rng& rng, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("rng_poisson: lambda must be finite and >= 0");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) {
        const double limit = std::exp(-lambda);
        long k = 0;
        double p = rng.next_unit();
        while (p > limit) {
            ++k;
            p *= rng.next_unit();
        }
        return k;
    }
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.next_unit() - 0.5;
        const double v = rng.next_unit();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<long>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
            -lambda + k * loglam - std::lgamma(k + 1.0))
            return static_cast<long>(k);
    }
}

}  // namespace acdk
