#pragma once

#include <cmath>
#include <cstdint>

namespace sefkit::rng {

// Splitmix64 stream.  Used instead of std:: engines so that generated
// datasets are bit-reproducible across compilers and standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double next_open_double() {
        return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// Derives an independent substream key from a seed and up to three stream
// coordinates (neighborhood index, unit index, purpose tag).
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                std::uint64_t c = 0) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
    h = mix(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = mix(h ^ (b + 0x3c6ef372fe94f82aULL));
    h = mix(h ^ (c + 0x78dde6e5fd29f05bULL));
    return h;
}

inline double sample_normal(SplitMix64& g) {
    const double u1 = g.next_open_double();
    const double u2 = g.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Marsaglia-Tsang gamma sampler, unit scale.
inline double sample_gamma(SplitMix64& g, double shape) {
    if (shape < 1.0) {
        const double u = g.next_open_double();
        return sample_gamma(g, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = sample_normal(g);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = g.next_open_double();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

inline double sample_beta(SplitMix64& g, double a, double b) {
    const double x = sample_gamma(g, a);
    const double y = sample_gamma(g, b);
    return x / (x + y);
}

// Exact binomial sampling by inversion.  Enumerates outcomes from the mode
// outward, so the expected cost is O(sqrt(n p (1-p))) draws of the pmf
// recurrence rather than O(n p).
inline long long sample_binomial(SplitMix64& g, long long n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (p > 0.5) return n - sample_binomial(g, n, 1.0 - p);

    if (n <= 16) {
        long long k = 0;
        for (long long i = 0; i < n; ++i)
            if (g.next_double() < p) ++k;
        return k;
    }

    const double q = 1.0 - p;
    const double nd = static_cast<double>(n);
    const auto mode = static_cast<long long>(std::floor((nd + 1.0) * p));
    const double log_pmf_mode = std::lgamma(nd + 1.0) - std::lgamma(mode + 1.0) -
                                std::lgamma(nd - mode + 1.0) + mode * std::log(p) +
                                (nd - mode) * std::log(q);
    const double pmf_mode = std::exp(log_pmf_mode);
    const double ratio = p / q;

    double u = g.next_double();
    double acc = pmf_mode;
    if (u < acc) return mode;

    long long up = mode, down = mode;
    double pmf_up = pmf_mode, pmf_down = pmf_mode;
    while (up < n || down > 0) {
        if (up < n) {
            pmf_up *= ratio * static_cast<double>(n - up) / static_cast<double>(up + 1);
            ++up;
            acc += pmf_up;
            if (u < acc) return up;
        }
        if (down > 0) {
            pmf_down *= static_cast<double>(down) /
                        (ratio * static_cast<double>(n - down + 1));
            --down;
            acc += pmf_down;
            if (u < acc) return down;
        }
    }
    return mode;  // u fell into residual rounding mass
}

}  // namespace sefkit::rng
