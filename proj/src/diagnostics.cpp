#include "sefkit/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "sefkit/error.hpp"
#include "sefkit/rng.hpp"
#include "sefkit/stats.hpp"

namespace sefkit {

CumulativeCurve cumulative_winner_share(const Election& e) {
    std::vector<std::size_t> order(e.units.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (e.units[a].electors != e.units[b].electors)
            return e.units[a].electors > e.units[b].electors;
        return e.units[a].unit_id < e.units[b].unit_id;
    });

    CumulativeCurve curve;
    curve.points.reserve(order.size());
    long long winner_sum = 0;
    long long cast_sum = 0;
    long long rank = 0;
    for (std::size_t i : order) {
        const auto& u = e.units[i];
        winner_sum += winner_votes_of(u);
        cast_sum += ballots_cast_of(u);
        curve.points.push_back({++rank, u.electors,
                                100.0 * static_cast<double>(winner_sum) /
                                    static_cast<double>(cast_sum)});
    }
    return curve;
}

void write_cumulative_csv(std::ostream& out, const CumulativeCurve& curve) {
    out << "rank,electors,cum_vw\n";
    char buf[32];
    for (const auto& pt : curve.points) {
        out << pt.rank << ',' << pt.electors << ',';
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), pt.cum_winner_pct);
        out.write(buf, ptr - buf);
        out << '\n';
    }
}

void validate_spec(const SynthSpec& spec) {
    const auto fail = [](const std::string& what) {
        throw SefError("invalid-spec", what);
    };
    if (spec.n_neighborhoods < 1) fail("n_neighborhoods must be >= 1");
    if (spec.units_per_neighborhood < 10) fail("units_per_neighborhood must be >= 10");
    if (!(spec.size_log_spread >= 0.0)) fail("size_log_spread must be >= 0");
    if (spec.size_min < 1) fail("size_min must be >= 1");
    if (!(spec.turnout_alpha > 0.0 && spec.turnout_beta > 0.0 && spec.winner_alpha > 0.0 &&
          spec.winner_beta > 0.0))
        fail("beta parameters must be positive");
    if (spec.rigging) {
        const auto& r = *spec.rigging;
        if (!(r.size_percentile_q > 0.0 && r.size_percentile_q < 100.0))
            fail("rigging.size_percentile_q must be in (0,100)");
        if (!(r.fraction_affected >= 0.0 && r.fraction_affected <= 1.0))
            fail("rigging.fraction_affected must be in [0,1]");
        if (!std::isfinite(r.shift_t) || !std::isfinite(r.shift_vw))
            fail("rigging shifts must be finite");
    }
}

namespace {

// Substream purpose tags; each unit draws from its own keyed streams.
constexpr std::uint64_t kStreamNeighborhood = 101;
constexpr std::uint64_t kStreamSize = 202;
constexpr std::uint64_t kStreamCounts = 303;
constexpr std::uint64_t kStreamRigDecision = 404;
constexpr std::uint64_t kStreamRigCounts = 505;

std::string padded(std::uint64_t value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
    return s;
}

int digits_for(int count) {
    int width = 1;
    for (int v = count - 1; v >= 10; v /= 10) ++width;
    return width;
}

}  // namespace

std::vector<RawRecord> generate_synthetic_records(const SynthSpec& spec) {
    validate_spec(spec);

    const int n_nbhd = spec.n_neighborhoods;
    const int n_unit = spec.units_per_neighborhood;
    const int wj = digits_for(n_nbhd);
    const int wi = digits_for(n_unit);

    std::vector<double> base_turnout(n_nbhd), base_winner(n_nbhd);
    for (int j = 0; j < n_nbhd; ++j) {
        rng::SplitMix64 g(rng::stream_key(spec.seed, kStreamNeighborhood, j));
        base_turnout[j] = rng::sample_beta(g, spec.turnout_alpha, spec.turnout_beta);
        base_winner[j] = rng::sample_beta(g, spec.winner_alpha, spec.winner_beta);
    }

    const std::size_t total = static_cast<std::size_t>(n_nbhd) * n_unit;
    std::vector<long long> sizes(total);
    for (int j = 0; j < n_nbhd; ++j) {
        for (int i = 0; i < n_unit; ++i) {
            rng::SplitMix64 g(rng::stream_key(spec.seed, kStreamSize, j, i));
            const double raw =
                std::exp(spec.size_log_mean + spec.size_log_spread * rng::sample_normal(g));
            sizes[static_cast<std::size_t>(j) * n_unit + i] =
                std::max(spec.size_min, std::llround(raw));
        }
    }

    // Clean draws for every unit.
    std::vector<long long> ballots(total), winner(total);
    for (int j = 0; j < n_nbhd; ++j) {
        for (int i = 0; i < n_unit; ++i) {
            const std::size_t u = static_cast<std::size_t>(j) * n_unit + i;
            rng::SplitMix64 g(rng::stream_key(spec.seed, kStreamCounts, j, i));
            ballots[u] = rng::sample_binomial(g, sizes[u], base_turnout[j]);
            winner[u] = rng::sample_binomial(g, ballots[u], base_winner[j]);
        }
    }

    if (spec.rigging) {
        const auto& rig = *spec.rigging;
        std::vector<long long> sorted_sizes(sizes);
        std::sort(sorted_sizes.begin(), sorted_sizes.end());
        const long long threshold =
            stats::nearest_rank_threshold(sorted_sizes, rig.size_percentile_q);

        for (int j = 0; j < n_nbhd; ++j) {
            // Realized clean spread of the neighborhood, in percentage points.
            std::vector<double> t_pct, vw_pct;
            t_pct.reserve(n_unit);
            for (int i = 0; i < n_unit; ++i) {
                const std::size_t u = static_cast<std::size_t>(j) * n_unit + i;
                t_pct.push_back(100.0 * static_cast<double>(ballots[u]) /
                                static_cast<double>(sizes[u]));
                if (ballots[u] > 0)
                    vw_pct.push_back(100.0 * static_cast<double>(winner[u]) /
                                     static_cast<double>(ballots[u]));
            }
            const double sd_t = stats::sample_std(t_pct);
            const double sd_vw = stats::sample_std(vw_pct);
            const double turnout_loc =
                std::clamp(base_turnout[j] + rig.shift_t * sd_t / 100.0, 0.0, 1.0);
            const double winner_loc =
                std::clamp(base_winner[j] + rig.shift_vw * sd_vw / 100.0, 0.0, 1.0);

            for (int i = 0; i < n_unit; ++i) {
                const std::size_t u = static_cast<std::size_t>(j) * n_unit + i;
                if (sizes[u] >= threshold) continue;
                if (rig.fraction_affected < 1.0) {
                    rng::SplitMix64 d(rng::stream_key(spec.seed, kStreamRigDecision, j, i));
                    if (d.next_double() >= rig.fraction_affected) continue;
                }
                rng::SplitMix64 g(rng::stream_key(spec.seed, kStreamRigCounts, j, i));
                ballots[u] = rng::sample_binomial(g, sizes[u], turnout_loc);
                winner[u] = rng::sample_binomial(g, ballots[u], winner_loc);
            }
        }
    }

    std::vector<RawRecord> records;
    records.reserve(total);
    for (int j = 0; j < n_nbhd; ++j) {
        const std::string nbhd_id = "n" + padded(j, wj);
        for (int i = 0; i < n_unit; ++i) {
            const std::size_t u = static_cast<std::size_t>(j) * n_unit + i;
            RawRecord rec;
            rec.unit_id = nbhd_id + "-u" + padded(i, wi);
            rec.neighborhood_id = nbhd_id;
            rec.electors = sizes[u];
            rec.ballots_cast = ballots[u];
            rec.winner_votes = winner[u];
            records.push_back(std::move(rec));
        }
    }
    return records;
}

Election generate_synthetic(const SynthSpec& spec) {
    return assemble_election(spec.name, generate_synthetic_records(spec));
}

SynthSpec synth_spec_from_json(const nlohmann::json& doc) {
    SynthSpec spec;
    try {
        spec.name = doc.value("name", spec.name);
        spec.seed = doc.value("seed", spec.seed);
        spec.n_neighborhoods = doc.value("n_neighborhoods", spec.n_neighborhoods);
        spec.units_per_neighborhood =
            doc.value("units_per_neighborhood", spec.units_per_neighborhood);
        spec.size_log_mean = doc.value("size_log_mean", spec.size_log_mean);
        spec.size_log_spread = doc.value("size_log_spread", spec.size_log_spread);
        spec.size_min = doc.value("size_min", spec.size_min);
        spec.turnout_alpha = doc.value("turnout_alpha", spec.turnout_alpha);
        spec.turnout_beta = doc.value("turnout_beta", spec.turnout_beta);
        spec.winner_alpha = doc.value("winner_alpha", spec.winner_alpha);
        spec.winner_beta = doc.value("winner_beta", spec.winner_beta);
        if (doc.contains("rigging") && !doc.at("rigging").is_null()) {
            const auto& jr = doc.at("rigging");
            RiggingSpec rig;
            rig.size_percentile_q = jr.value("size_percentile_q", rig.size_percentile_q);
            rig.shift_t = jr.value("shift_t", rig.shift_t);
            rig.shift_vw = jr.value("shift_vw", rig.shift_vw);
            rig.fraction_affected = jr.value("fraction_affected", rig.fraction_affected);
            spec.rigging = rig;
        }
    } catch (const nlohmann::json::exception& ex) {
        throw SefError("invalid-spec", std::string("bad synth spec: ") + ex.what());
    }
    validate_spec(spec);
    return spec;
}

nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::ordered_json doc{{"name", spec.name},
                               {"seed", spec.seed},
                               {"n_neighborhoods", spec.n_neighborhoods},
                               {"units_per_neighborhood", spec.units_per_neighborhood},
                               {"size_log_mean", spec.size_log_mean},
                               {"size_log_spread", spec.size_log_spread},
                               {"size_min", spec.size_min},
                               {"turnout_alpha", spec.turnout_alpha},
                               {"turnout_beta", spec.turnout_beta},
                               {"winner_alpha", spec.winner_alpha},
                               {"winner_beta", spec.winner_beta}};
    if (spec.rigging) {
        doc["rigging"] = {{"size_percentile_q", spec.rigging->size_percentile_q},
                          {"shift_t", spec.rigging->shift_t},
                          {"shift_vw", spec.rigging->shift_vw},
                          {"fraction_affected", spec.rigging->fraction_affected}};
    } else {
        doc["rigging"] = nullptr;
    }
    return doc;
}

}  // namespace sefkit
