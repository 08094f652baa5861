#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

// Counter-based random numbers: every draw is a pure function of
// (seed, stream coordinates), so any path/row can be regenerated in
// isolation and results do not depend on thread scheduling.

namespace dimkit::rng {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept {
    return mix64(h ^ (v + 0x2545f4914f6cdd1dULL + (h << 6) + (h >> 2)));
}

// 64-bit key for a (seed, a, b, c, d) counter tuple.
constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                            std::uint64_t c = 0, std::uint64_t d = 0) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = combine(h, a);
    h = combine(h, b);
    h = combine(h, c);
    h = combine(h, d);
    return h;
}

// Uniform in the open interval (0,1); never returns an exact 0 or 1.
inline double uniform01(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse of the standard normal CDF (Wichura's AS241, double precision).
inline double normal_inv_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_inv_cdf: p outside (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                             1.3314166789178437745e2) * r + 3.3871328727963666080e0);
        const double den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                             4.2313330701600911252e1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                                 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                               3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                             4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                                 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                               6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                             2.05319162663775882187e0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                                 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                               2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                             5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                                 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                               1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                             5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return (q < 0.0) ? -val : val;
}

// Standard normal draw for a counter tuple.
inline double normal_draw(std::uint64_t seed, std::uint64_t state_idx, std::uint64_t path_idx,
                          std::uint64_t step_idx, std::uint64_t substep_idx = 0) {
    return normal_inv_cdf(uniform01(key(seed, state_idx, path_idx, step_idx, substep_idx)));
}

// Small sequential stream for shuffles and initializers.
class Stream {
  public:
    explicit Stream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
        : state_(key(seed, 0xabcdef0123456789ULL, stream_id)) {}

    std::uint64_t next_bits() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    double next_uniform01() noexcept { return uniform01(next_bits()); }

    double next_normal() { return normal_inv_cdf(next_uniform01()); }

    // Unbiased-enough bounded draw via 128-bit multiply-shift.
    std::uint64_t next_below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_bits()) * n) >> 64);
    }

  private:
    std::uint64_t state_;
};

template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Stream& s) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = s.next_below(i);
        std::swap(first[i - 1], first[j]);
    }
}

// FNV-1a over raw bytes; used for config/portfolio fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dimkit::rng
