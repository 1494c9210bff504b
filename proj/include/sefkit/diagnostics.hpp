#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sefkit/ingest.hpp"

namespace sefkit {

struct CurvePoint {
    long long rank = 0;  // 1-based; units sorted by electors descending
    long long electors = 0;
    double cum_winner_pct = 0.0;  // winner votes over ballots cast, ranks 1..i
};

struct CumulativeCurve {
    std::vector<CurvePoint> points;
};

// Descending-rank cumulative winner share.  Ties in elector count break by
// unit_id ascending so curves are reproducible.
CumulativeCurve cumulative_winner_share(const Election& e);

void write_cumulative_csv(std::ostream& out, const CumulativeCurve& curve);

// Rigging injection: units with electors below the q-th percentile get their
// latent turnout and winner-share locations raised by the given multiples of
// the neighborhood spread (clamped to [0,1]) before their counts are drawn.
struct RiggingSpec {
    double size_percentile_q = 10.0;
    double shift_t = 1.5;
    double shift_vw = 1.5;
    double fraction_affected = 1.0;
};

struct SynthSpec {
    std::string name = "synthetic";
    std::uint64_t seed = 0;
    int n_neighborhoods = 120;
    int units_per_neighborhood = 12;
    // Elector counts per unit: lognormal, floored at size_min.  Defaults give
    // units of roughly 435 +- 97 electors, the profile of real per-station
    // national datasets.
    double size_log_mean = 6.05;  // median around 425 electors
    double size_log_spread = 0.22;
    long long size_min = 40;
    // Per-neighborhood base locations, beta-distributed.
    double turnout_alpha = 24.0;
    double turnout_beta = 16.0;
    double winner_alpha = 22.0;
    double winner_beta = 18.0;
    std::optional<RiggingSpec> rigging;
};

// Throws SefError("invalid-spec") on out-of-range parameters.
void validate_spec(const SynthSpec& spec);

// Hierarchical binomial model: neighborhood locations -> per-unit elector
// counts -> ballots ~ Binomial(electors, turnout) -> winner ~
// Binomial(ballots, share).  Counts satisfy winner <= ballots <= electors by
// construction.  Deterministic under a fixed seed; every unit draws from its
// own substream, so enabling rigging never changes the draws of units at or
// above the size threshold.
std::vector<RawRecord> generate_synthetic_records(const SynthSpec& spec);

// Generated records pushed through the same assembly path as file ingestion.
Election generate_synthetic(const SynthSpec& spec);

SynthSpec synth_spec_from_json(const nlohmann::json& doc);
nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec);

}  // namespace sefkit
