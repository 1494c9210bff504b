#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "sefkit/ingest.hpp"

namespace sefkit {

struct ZScorePair {
    std::string unit_id;
    double z_t = 0.0;       // standardized turnout
    double z_vw = 0.0;      // standardized winner share
    long long electors = 0; // carried for the later size split
    bool operator==(const ZScorePair&) const = default;
};

struct NeighborhoodStats {
    std::string neighborhood_id;
    double mean_turnout = 0.0;
    double std_turnout = 0.0;
    double mean_winner = 0.0;
    double std_winner = 0.0;
    std::size_t member_count = 0;
};

struct ZScoreResult {
    std::vector<ZScorePair> pairs;    // in election unit order
    std::vector<Exclusion> skipped;   // degenerate-stratum entries, unit order
};

// Stratified normalization: each unit's turnout and winner share are rescaled
// by the mean and sample standard deviation over its neighborhood.  With
// leave_one_out (the default) the unit itself is excluded from its own
// stratum statistics.  Units whose stratum spread vanishes in either
// coordinate are skipped and logged, never emitted with non-finite scores.
ZScoreResult compute_zscores(const Election& e, bool leave_one_out = true);

// Inclusive per-neighborhood statistics (divisor m-1).
std::vector<NeighborhoodStats> neighborhood_stats(const Election& e);

struct EllipseSplit {
    std::vector<ZScorePair> kept;
    std::vector<ZScorePair> removed;
    double squared_distance_cutoff = 0.0;  // chi-squared(2) quantile used
};

// Removes points whose squared Mahalanobis distance from the sample mean,
// under the sample covariance, exceeds the chi-squared(2 d.o.f.) quantile at
// `confidence`.  Throws SefError("singular-covariance") for collinear clouds
// and SefError("too-few-observations") for fewer than 3 pairs.
EllipseSplit remove_ellipse_outliers(const std::vector<ZScorePair>& z,
                                     double confidence = 0.95);

struct SefHistogram {
    int bins_x = 100;  // columns, z_t axis
    int bins_y = 100;  // rows, z_vw axis
    double lo = -5.0;
    double hi = 5.0;
    std::vector<double> counts;  // row-major; counts[row * bins_x + col]
    long long overflow = 0;      // pairs outside [lo,hi]^2, tallied not dropped

    double& at(int row, int col) { return counts[static_cast<std::size_t>(row) * bins_x + col]; }
    double at(int row, int col) const {
        return counts[static_cast<std::size_t>(row) * bins_x + col];
    }
    double total() const;
    double max_value() const;
};

// Uniform binning of [lo,hi]^2; the top edge closes into the last bin.
SefHistogram sef_histogram(const std::vector<ZScorePair>& z, int bins = 100, double lo = -5.0,
                           double hi = 5.0);

// One zero-padded pass with the 10x10 box kernel of constant 0.01.  The even
// kernel is anchored so output cell (r,c) aggregates input [r-5, r+4] x
// [c-5, c+4].  Throws SefError("grid-too-small") below 10x10.
SefHistogram convolve_box_once(const SefHistogram& h);

// Both smoothing passes.
SefHistogram smooth_histogram(const SefHistogram& h);

struct ContourDoc {
    SefHistogram grid;
    std::vector<double> levels;  // equally spaced density thresholds in (0, max)
    bool empty = false;          // all-zero grid; thresholds degenerate to 0
};

ContourDoc export_contour_grid(const SefHistogram& h, int levels);

nlohmann::ordered_json contour_to_json(const ContourDoc& doc);

// Z-score wire format: CSV columns unit_id, z_t, z_vw, electors.
void write_zscores_csv(std::ostream& out, const std::vector<ZScorePair>& pairs);
std::vector<ZScorePair> read_zscores_csv(std::istream& in);
std::vector<ZScorePair> read_zscores_file(const std::string& path);

}  // namespace sefkit
