#pragma once

#include <span>
#include <vector>

namespace sefkit::stats {

double mean(std::span<const double> x);

// Sample standard deviation, divisor n-1.  Returns 0 for n < 2.
double sample_std(std::span<const double> x);

// Median; for even counts the mean of the two middle order statistics.
// Operates on a scratch copy of the input.
double median(std::span<const double> x);

// Median of a mutable buffer (partially reorders it).
double median_inplace(std::span<double> x);

// Regularized incomplete beta function I_x(a, b) for a,b > 0, x in [0,1].
double ibeta(double a, double b, double x);

// Inverse of ibeta in x for fixed a, b: returns x with I_x(a,b) = p.
double ibeta_inv(double a, double b, double p);

// Quantile of Student's t distribution with `dof` degrees of freedom
// (dof >= 1), accurate to about 1e-12.  prob in (0, 1).
double student_t_quantile(double prob, double dof);

// Chi-squared quantile with 2 degrees of freedom; closed form -2*ln(1-p).
double chi_squared_quantile_2dof(double prob);

// Nearest-rank percentile: the value at 1-based index ceil(p/100 * n) of the
// ascending-sorted input.  `sorted` must already be ascending; 0 < p < 100.
long long nearest_rank_threshold(std::span<const long long> sorted, double p);

}  // namespace sefkit::stats
