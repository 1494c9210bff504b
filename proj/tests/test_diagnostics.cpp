#include "sefkit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "sefkit/error.hpp"
#include "sefkit/stats.hpp"

using namespace sefkit;

namespace {

ElectoralUnit unit_from_counts(const std::string& id, const std::string& nbhd,
                               long long electors, long long cast, long long winner) {
    ElectoralUnit u;
    u.unit_id = id;
    u.neighborhood_id = nbhd;
    u.electors = electors;
    u.turnout_pct = 100.0 * static_cast<double>(cast) / static_cast<double>(electors);
    u.winner_pct = 100.0 * static_cast<double>(winner) / static_cast<double>(cast);
    return u;
}

Election from_units(std::vector<ElectoralUnit> units) {
    Election e;
    e.name = "curve";
    for (auto& u : units) {
        e.neighborhoods[u.neighborhood_id].push_back(e.units.size());
        e.units.push_back(std::move(u));
    }
    return e;
}

}  // namespace

TEST_CASE("cumulative winner share") {
    SUBCASE("three-unit worked example") {
        const Election e = from_units({
            unit_from_counts("big", "n", 1000, 800, 400),
            unit_from_counts("mid", "n", 500, 400, 300),
            unit_from_counts("small", "n", 100, 100, 90),
        });
        const CumulativeCurve curve = cumulative_winner_share(e);
        REQUIRE(curve.points.size() == 3);
        CHECK(curve.points[0].cum_winner_pct == doctest::Approx(50.0).epsilon(1e-9));
        CHECK(curve.points[1].cum_winner_pct == doctest::Approx(700.0 / 12.0).epsilon(1e-9));
        CHECK(curve.points[2].cum_winner_pct == doctest::Approx(7900.0 / 130.0).epsilon(1e-9));
        // Display-precision pins.
        CHECK(std::fabs(curve.points[1].cum_winner_pct - 58.33) < 0.01);
        CHECK(std::fabs(curve.points[2].cum_winner_pct - 60.77) < 0.01);
        // Ranks walk down the sizes.
        CHECK(curve.points[0].electors == 1000);
        CHECK(curve.points[2].electors == 100);
    }
    SUBCASE("single unit") {
        const Election e = from_units({unit_from_counts("only", "n", 200, 150, 90)});
        const CumulativeCurve curve = cumulative_winner_share(e);
        REQUIRE(curve.points.size() == 1);
        CHECK(curve.points[0].cum_winner_pct ==
              doctest::Approx(e.units[0].winner_pct).epsilon(1e-12));
    }
    SUBCASE("identical percentages give a constant curve") {
        const Election e = from_units({
            unit_from_counts("a", "n", 1000, 600, 300),
            unit_from_counts("b", "n", 500, 300, 150),
            unit_from_counts("c", "n", 200, 120, 60),
        });
        const CumulativeCurve curve = cumulative_winner_share(e);
        for (const auto& pt : curve.points)
            CHECK(pt.cum_winner_pct == doctest::Approx(50.0).epsilon(1e-12));
    }
    SUBCASE("final value equals the election-wide winner share") {
        const Election e = generate_synthetic(SynthSpec{.name = "cum", .seed = 3});
        const CumulativeCurve curve = cumulative_winner_share(e);
        long long w = 0, c = 0;
        for (const auto& u : e.units) {
            w += winner_votes_of(u);
            c += ballots_cast_of(u);
        }
        CHECK(std::fabs(curve.points.back().cum_winner_pct -
                        100.0 * static_cast<double>(w) / static_cast<double>(c)) < 1e-9);
    }
    SUBCASE("size ties break by unit id") {
        const Election e = from_units({
            unit_from_counts("zz", "n", 300, 200, 100),
            unit_from_counts("aa", "n", 300, 200, 150),
        });
        const CumulativeCurve curve = cumulative_winner_share(e);
        CHECK(curve.points[0].cum_winner_pct == doctest::Approx(75.0).epsilon(1e-12));
    }
    SUBCASE("csv emission") {
        const Election e = from_units({unit_from_counts("only", "n", 200, 150, 90)});
        std::ostringstream out;
        write_cumulative_csv(out, cumulative_winner_share(e));
        CHECK(out.str() == "rank,electors,cum_vw\n1,200,60\n");
    }
}

TEST_CASE("synthetic generation") {
    SynthSpec spec;
    spec.seed = 42;
    spec.name = "gen";

    SUBCASE("fixed seed is fully deterministic") {
        const auto a = generate_synthetic_records(spec);
        const auto b = generate_synthetic_records(spec);
        REQUIRE(a.size() == b.size());
        std::ostringstream csv_a, csv_b;
        write_records_csv(csv_a, a);
        write_records_csv(csv_b, b);
        CHECK(csv_a.str() == csv_b.str());
        CHECK(generate_synthetic(spec) == generate_synthetic(spec));
    }
    SUBCASE("counts are compatible by construction and gates pass") {
        const auto records = generate_synthetic_records(spec);
        CHECK(records.size() == 1440);
        for (const auto& r : records) {
            CHECK(r.winner_votes <= r.ballots_cast);
            CHECK(r.ballots_cast <= r.electors);
            CHECK(r.electors >= spec.size_min);
        }
        const Election e = generate_synthetic(spec);
        CHECK(e.units.size() > 1000);
        CHECK(e.neighborhoods.size() > 100);
    }
    SUBCASE("different seeds differ") {
        SynthSpec other = spec;
        other.seed = 43;
        CHECK_FALSE(generate_synthetic(spec) == generate_synthetic(other));
    }
    SUBCASE("rigging leaves units at or above the size threshold untouched") {
        SynthSpec rigged = spec;
        rigged.rigging = RiggingSpec{10.0, 1.5, 1.5, 1.0};
        const auto clean = generate_synthetic_records(spec);
        const auto with_rig = generate_synthetic_records(rigged);
        REQUIRE(clean.size() == with_rig.size());

        std::vector<long long> sizes;
        for (const auto& r : clean) sizes.push_back(r.electors);
        std::sort(sizes.begin(), sizes.end());
        const long long threshold = stats::nearest_rank_threshold(sizes, 10.0);

        int touched_small = 0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
            CHECK(clean[i].electors == with_rig[i].electors);
            if (clean[i].electors >= threshold) {
                CHECK(clean[i].ballots_cast == with_rig[i].ballots_cast);
                CHECK(clean[i].winner_votes == with_rig[i].winner_votes);
            } else if (clean[i].ballots_cast != with_rig[i].ballots_cast ||
                       clean[i].winner_votes != with_rig[i].winner_votes) {
                ++touched_small;
            }
        }
        CHECK(touched_small > 0);
    }
    SUBCASE("zero shift with rigging on is statistically clean") {
        SynthSpec sham = spec;
        sham.rigging = RiggingSpec{10.0, 0.0, 0.0, 1.0};
        const auto clean = generate_synthetic_records(spec);
        const auto shammed = generate_synthetic_records(sham);

        // Two-sample Kolmogorov-Smirnov on the turnout percentages, alpha 0.01.
        auto turnouts = [](const std::vector<RawRecord>& rs) {
            std::vector<double> t;
            for (const auto& r : rs)
                t.push_back(100.0 * static_cast<double>(r.ballots_cast) /
                            static_cast<double>(r.electors));
            std::sort(t.begin(), t.end());
            return t;
        };
        const auto ta = turnouts(clean);
        const auto tb = turnouts(shammed);
        double ks = 0.0;
        std::size_t ia = 0, ib = 0;
        while (ia < ta.size() && ib < tb.size()) {
            if (ta[ia] <= tb[ib]) ++ia;
            else ++ib;
            const double fa = static_cast<double>(ia) / ta.size();
            const double fb = static_cast<double>(ib) / tb.size();
            ks = std::max(ks, std::fabs(fa - fb));
        }
        const double n = static_cast<double>(ta.size());
        const double m = static_cast<double>(tb.size());
        const double critical = 1.628 * std::sqrt((n + m) / (n * m));
        CHECK(ks < critical);
    }
    SUBCASE("invalid specs are refused") {
        SynthSpec bad = spec;
        bad.units_per_neighborhood = 5;
        try {
            generate_synthetic_records(bad);
            FAIL("expected invalid-spec");
        } catch (const SefError& e) {
            CHECK(e.code() == "invalid-spec");
        }
        SynthSpec bad_rig = spec;
        bad_rig.rigging = RiggingSpec{10.0, 1.0, 1.0, 1.5};
        CHECK_THROWS_AS(generate_synthetic_records(bad_rig), SefError);
    }
}

TEST_CASE("synth spec JSON round trip") {
    SynthSpec spec;
    spec.name = "roundtrip";
    spec.seed = 99;
    spec.n_neighborhoods = 130;
    spec.rigging = RiggingSpec{12.5, 0.75, 1.25, 0.5};
    const auto doc = synth_spec_to_json(spec);
    const SynthSpec back = synth_spec_from_json(doc);
    CHECK(back.name == spec.name);
    CHECK(back.seed == spec.seed);
    CHECK(back.n_neighborhoods == spec.n_neighborhoods);
    REQUIRE(back.rigging.has_value());
    CHECK(back.rigging->size_percentile_q == spec.rigging->size_percentile_q);
    CHECK(back.rigging->fraction_affected == spec.rigging->fraction_affected);

    const SynthSpec defaults = synth_spec_from_json(nlohmann::json::object());
    CHECK(defaults.n_neighborhoods == 120);
    CHECK_FALSE(defaults.rigging.has_value());
}
