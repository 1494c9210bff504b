#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "sefkit/sef.hpp"

namespace sefkit {

// Size split of one election's z-score cloud at the p-th percentile of the
// elector counts (nearest-rank convention).  Units strictly below the
// threshold are "small".  A split with fewer than 10 units on either side is
// marked invalid rather than failing, so percentile sweeps can continue.
struct SizeSplit {
    double p = 0.0;
    long long threshold = 0;
    bool valid = false;
    std::vector<ZScorePair> small;
    std::vector<ZScorePair> large;
};

SizeSplit split_by_percentile(const std::vector<ZScorePair>& z, double p);

struct MedianCenter {
    double turnout = 0.0;
    double winner = 0.0;
};

// Component-wise median; even counts average the two middle order statistics.
MedianCenter median_center(const std::vector<ZScorePair>& z);

struct SplitCenters {
    double small_turnout = 0.0;
    double small_winner = 0.0;
    double large_turnout = 0.0;
    double large_winner = 0.0;
    double distance = 0.0;  // Euclidean distance between the two centers
};

double center_distance(double small_turnout, double small_winner, double large_turnout,
                       double large_winner);

SplitCenters split_centers(const SizeSplit& split);

// Modified Thompson Tau: iteratively removes the single observation with the
// largest standardized absolute deviation while it exceeds the rejection
// threshold r = t * (n-1) / sqrt(n * (n-2 + t^2)), t the (1 - alpha/2)
// quantile of Student's t with n-2 degrees of freedom.
struct TauResult {
    std::vector<std::size_t> outlier_indices;  // indices into the input, removal order
    std::vector<double> thresholds;            // r evaluated at each iteration
    double alpha = 0.05;
};

TauResult thompson_tau(const std::vector<double>& x, double alpha);

// One election's center-distance curve over a percentile grid; NaN marks
// percentiles without a valid split.
struct DCurve {
    std::string election;
    std::vector<double> distances;
};

std::vector<double> default_p_grid();  // {0.5, 1, 1.5, ..., 90}
std::vector<double> make_p_grid(double start, double step, double end);

// Reference set R: elections that are Tau non-outliers for at least 95% of
// the percentiles at which they have a valid split.  Throws
// SefError("empty-reference-set") when nothing qualifies.
std::vector<std::string> build_reference_set(const std::vector<DCurve>& curves, double alpha);

// Standardized effect size: (d - mean over reference) / sample std over
// reference.  Throws SefError("zero-reference-spread") for flat references
// and SefError("too-few-observations") when fewer than 2 reference values.
double delta(double d_value, const std::vector<double>& reference_distances);

struct ElectionZ {
    std::string name;
    std::vector<ZScorePair> pairs;
};

struct PerPState {
    bool valid = false;
    double d = 0.0;              // NaN when the split is invalid
    double delta = 0.0;          // NaN when undefined at this percentile
    double tau_threshold = 0.0;  // final r of the cross-election Tau run; NaN if none
    bool is_outlier = false;
    bool upper_right = false;  // small center strictly above large center, both axes
};

struct TestReport {
    std::string election;
    bool in_reference_set = false;
    std::string verdict;              // consistent-with-rigging | no-anomaly | indeterminate
    std::vector<PerPState> per_p;     // aligned with the p grid
};

// Verdict aggregation: consistent-with-rigging requires outlier AND
// upper-right at a strict majority of valid percentiles; outlier-majority
// without direction is indeterminate; reference-set members are never given
// a rigging verdict from their own baseline.
std::string classify_verdict(bool in_reference_set, const std::vector<PerPState>& per_p);

struct RiggingTestConfig {
    double alpha = 0.05;
    std::vector<double> p_grid = default_p_grid();
};

struct EnsembleResult {
    std::vector<double> p_grid;
    std::vector<std::string> reference_set;
    std::vector<TestReport> reports;       // input order
    std::vector<double> accepted_upper;    // Tau acceptance band mapped into delta units
    std::vector<double> accepted_lower;    // NaN where undefined
};

// Full comparative test across >= 3 elections' z-score clouds.
EnsembleResult run_rigging_test(const std::vector<ElectionZ>& elections,
                                const RiggingTestConfig& cfg = {});

nlohmann::ordered_json report_to_json(const TestReport& report,
                                      const std::vector<double>& p_grid, double alpha);
nlohmann::ordered_json ensemble_to_json(const EnsembleResult& result, double alpha);

// CSV export of the delta(p) curves, one column per election.
void write_delta_curves_csv(std::ostream& out, const EnsembleResult& result);

}  // namespace sefkit
