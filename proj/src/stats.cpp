#include "sefkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sefkit::stats {

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double sum = 0.0;
    for (double v : x) sum += v;
    return sum / static_cast<double>(x.size());
}

double sample_std(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) {
        const double d = v - m;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double median_inplace(std::span<double> x) {
    const std::size_t n = x.size();
    if (n == 0) throw std::invalid_argument("median of empty range");
    const std::size_t half = n / 2;
    std::nth_element(x.begin(), x.begin() + half, x.end());
    const double upper = x[half];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(x.begin(), x.begin() + half);
    return 0.5 * (lower + upper);
}

double median(std::span<const double> x) {
    std::vector<double> scratch(x.begin(), x.end());
    return median_inplace(scratch);
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= kEps) break;
    }
    return h;
}

}  // namespace

double ibeta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("ibeta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double ibeta_inv(double a, double b, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    double x = 0.5;
    // Bisection with Newton acceleration; ibeta is monotone in x.
    const double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = ibeta(a, b, x) - p;
        if (f > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double pdf =
            std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - ln_beta);
        double next = x;
        if (pdf > 0.0 && std::isfinite(pdf)) {
            next = x - f / pdf;
        }
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::fabs(next - x) <= 1e-15 * std::max(1.0, std::fabs(x))) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

double student_t_quantile(double prob, double dof) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("student_t_quantile: prob in (0,1)");
    if (!(dof >= 1.0)) throw std::invalid_argument("student_t_quantile: dof >= 1");
    if (prob == 0.5) return 0.0;
    const bool upper = prob > 0.5;
    const double tail = upper ? 2.0 * (1.0 - prob) : 2.0 * prob;
    // For |T| ~ t(dof): P(|T| > t) = I_w(dof/2, 1/2) with w = dof/(dof + t^2).
    const double w = ibeta_inv(0.5 * dof, 0.5, tail);
    const double t = std::sqrt(dof * (1.0 - w) / w);
    return upper ? t : -t;
}

double chi_squared_quantile_2dof(double prob) {
    if (!(prob >= 0.0 && prob < 1.0))
        throw std::invalid_argument("chi_squared_quantile_2dof: prob in [0,1)");
    return -2.0 * std::log1p(-prob);
}

long long nearest_rank_threshold(std::span<const long long> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("nearest_rank_threshold: empty input");
    if (!(p > 0.0 && p < 100.0))
        throw std::invalid_argument("nearest_rank_threshold: p in (0,100)");
    const double q = p * static_cast<double>(sorted.size()) / 100.0;
    // Tolerant ceiling: guards against q landing epsilon above an exact integer.
    auto rank = static_cast<long long>(std::ceil(q - 1e-9));
    rank = std::clamp<long long>(rank, 1, static_cast<long long>(sorted.size()));
    return sorted[static_cast<std::size_t>(rank - 1)];
}

}  // namespace sefkit::stats
