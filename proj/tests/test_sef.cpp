#include "sefkit/sef.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sefkit/diagnostics.hpp"
#include "sefkit/error.hpp"
#include "sefkit/stats.hpp"

using namespace sefkit;

namespace {

// Builds an election directly; test-only, bypasses the ingestion gates.
Election make_election(const std::vector<std::tuple<std::string, std::string, long long,
                                                    double, double>>& rows) {
    Election e;
    e.name = "test";
    for (const auto& [uid, nbhd, electors, t, vw] : rows) {
        ElectoralUnit u;
        u.unit_id = uid;
        u.neighborhood_id = nbhd;
        u.electors = electors;
        u.turnout_pct = t;
        u.winner_pct = vw;
        e.neighborhoods[nbhd].push_back(e.units.size());
        e.units.push_back(std::move(u));
    }
    return e;
}

std::map<std::string, ZScorePair> by_unit(const std::vector<ZScorePair>& pairs) {
    std::map<std::string, ZScorePair> m;
    for (const auto& p : pairs) m[p.unit_id] = p;
    return m;
}

}  // namespace

TEST_CASE("leave-one-out z-scores, hand-computed") {
    // Unit a: t = 50, the others are {40, 60}; by symmetry z_t = 0.
    // Unit d: t = 66, the others are {40, 50}; mu = 45, sample std = 7.0711.
    const Election e = make_election({
        {"a", "n1", 100, 50.0, 30.0},
        {"b", "n1", 100, 40.0, 40.0},
        {"c", "n1", 100, 60.0, 50.0},
        {"d", "n2", 100, 66.0, 30.0},
        {"e", "n2", 100, 40.0, 40.0},
        {"f", "n2", 100, 50.0, 50.0},
    });
    const ZScoreResult r = compute_zscores(e, true);
    const auto pairs = by_unit(r.pairs);
    REQUIRE(pairs.count("a") == 1);
    CHECK(pairs.at("a").z_t == doctest::Approx(0.0).epsilon(1e-12));
    REQUIRE(pairs.count("d") == 1);
    CHECK(pairs.at("d").z_t == doctest::Approx(21.0 / std::sqrt(50.0)).epsilon(1e-12));
    CHECK(pairs.at("d").z_t == doctest::Approx(2.9699).epsilon(1e-4));
    CHECK(r.skipped.empty());
}

TEST_CASE("degenerate strata are skipped and logged") {
    const Election e = make_election({
        {"a", "flat", 100, 50.0, 33.0},  // identical winner share everywhere
        {"b", "flat", 100, 40.0, 33.0},
        {"c", "flat", 100, 60.0, 33.0},
        {"d", "ok", 100, 66.0, 30.0},
        {"e", "ok", 100, 40.0, 40.0},
        {"f", "ok", 100, 50.0, 50.0},
    });
    const ZScoreResult r = compute_zscores(e, true);
    CHECK(r.pairs.size() == 3);
    REQUIRE(r.skipped.size() == 3);
    for (const auto& x : r.skipped) CHECK(x.reason == "degenerate-stratum");
}

TEST_CASE("inclusive statistics normalize each stratum to mean 0, std 1") {
    const Election e = generate_synthetic(SynthSpec{.name = "norm", .seed = 7});
    const ZScoreResult r = compute_zscores(e, false);
    REQUIRE(r.pairs.size() == e.units.size());

    std::map<std::string, std::vector<double>> zt_by_nbhd;
    std::map<std::string, ZScorePair> pairs = by_unit(r.pairs);
    for (const auto& u : e.units) zt_by_nbhd[u.neighborhood_id].push_back(pairs.at(u.unit_id).z_t);
    for (const auto& [nbhd, zs] : zt_by_nbhd) {
        CAPTURE(nbhd);
        CHECK(std::fabs(stats::mean(zs)) < 1e-9);
        CHECK(std::fabs(stats::sample_std(zs) - 1.0) < 1e-9);
    }
}

TEST_CASE("leave-one-out matches a brute-force per-unit recomputation") {
    const Election e = generate_synthetic(SynthSpec{.name = "loo", .seed = 11});
    const ZScoreResult r = compute_zscores(e, true);
    const auto pairs = by_unit(r.pairs);

    for (const auto& [nbhd, members] : e.neighborhoods) {
        for (std::size_t idx : members) {
            // Oracle: direct mean and sample std over all other units.
            std::vector<double> t_others, vw_others;
            for (std::size_t other : members) {
                if (other == idx) continue;
                t_others.push_back(e.units[other].turnout_pct);
                vw_others.push_back(e.units[other].winner_pct);
            }
            const double sd_t = stats::sample_std(t_others);
            const double sd_vw = stats::sample_std(vw_others);
            const auto it = pairs.find(e.units[idx].unit_id);
            if (sd_t <= 1e-9 || sd_vw <= 1e-9) {
                CHECK(it == pairs.end());
                continue;
            }
            REQUIRE(it != pairs.end());
            const double zt = (e.units[idx].turnout_pct - stats::mean(t_others)) / sd_t;
            const double zvw = (e.units[idx].winner_pct - stats::mean(vw_others)) / sd_vw;
            CHECK(std::fabs(it->second.z_t - zt) < 1e-9);
            CHECK(std::fabs(it->second.z_vw - zvw) < 1e-9);
        }
    }
}

TEST_CASE("inclusive neighborhood statistics") {
    const Election e = make_election({
        {"a", "n1", 100, 40.0, 20.0},
        {"b", "n1", 100, 50.0, 30.0},
        {"c", "n1", 100, 60.0, 40.0},
        {"d", "n2", 100, 10.0, 5.0},
        {"e", "n2", 100, 30.0, 15.0},
    });
    const auto stats_list = neighborhood_stats(e);
    REQUIRE(stats_list.size() == 2);
    CHECK(stats_list[0].neighborhood_id == "n1");
    CHECK(stats_list[0].member_count == 3);
    CHECK(stats_list[0].mean_turnout == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(stats_list[0].std_turnout == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(stats_list[0].mean_winner == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(stats_list[1].std_winner ==
          doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
}

TEST_CASE("z-scores are invariant under location-scale maps of one stratum") {
    auto rows = std::vector<std::tuple<std::string, std::string, long long, double, double>>{};
    std::mt19937 gen(314);
    std::uniform_real_distribution<double> t_dist(30.0, 90.0);
    std::uniform_real_distribution<double> vw_dist(20.0, 80.0);
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 12; ++i) {
            rows.emplace_back("u" + std::to_string(j) + "_" + std::to_string(i),
                              "n" + std::to_string(j), 100 + i, t_dist(gen), vw_dist(gen));
        }
    }
    const Election e = make_election(rows);
    Election scaled = e;
    for (std::size_t idx : scaled.neighborhoods.at("n1")) {
        scaled.units[idx].turnout_pct = 0.5 * scaled.units[idx].turnout_pct + 20.0;
        scaled.units[idx].winner_pct = 1.25 * scaled.units[idx].winner_pct + 2.0;
    }
    for (bool loo : {true, false}) {
        const auto base = by_unit(compute_zscores(e, loo).pairs);
        const auto after = by_unit(compute_zscores(scaled, loo).pairs);
        REQUIRE(base.size() == after.size());
        for (const auto& [uid, p] : base) {
            CHECK(std::fabs(after.at(uid).z_t - p.z_t) < 1e-9);
            CHECK(std::fabs(after.at(uid).z_vw - p.z_vw) < 1e-9);
        }
    }
}

TEST_CASE("ellipse outlier removal") {
    SUBCASE("engineered cloud: far point removed, center kept, partition exact") {
        std::vector<ZScorePair> cloud;
        auto add = [&](double x, double y) {
            cloud.push_back({"p" + std::to_string(cloud.size()), x, y, 100});
        };
        add(0.0, 0.0);
        add(3.0, 0.0);
        add(-3.0, 0.0);
        for (int i = 0; i < 20; ++i) {
            add(1.0, 0.0);
            add(-1.0, 0.0);
        }
        for (int i = 0; i < 21; ++i) {
            add(0.0, 1.0);
            add(0.0, -1.0);
        }
        const EllipseSplit split = remove_ellipse_outliers(cloud, 0.95);
        CHECK(split.squared_distance_cutoff ==
              doctest::Approx(5.991464547107979).epsilon(1e-12));
        REQUIRE(split.removed.size() == 2);
        CHECK(split.removed[0].unit_id == "p1");
        CHECK(split.removed[1].unit_id == "p2");
        CHECK(split.kept.size() + split.removed.size() == cloud.size());
        // The point at the sample mean is always kept.
        bool center_kept = false;
        for (const auto& p : split.kept) center_kept |= (p.unit_id == "p0");
        CHECK(center_kept);
    }
    SUBCASE("around 5% of a standard bivariate normal sample is removed") {
        std::mt19937 gen(12345);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<ZScorePair> cloud;
        for (int i = 0; i < 10000; ++i)
            cloud.push_back({"m" + std::to_string(i), normal(gen), normal(gen), 1});
        const EllipseSplit split = remove_ellipse_outliers(cloud, 0.95);
        const double removed_fraction =
            static_cast<double>(split.removed.size()) / static_cast<double>(cloud.size());
        CHECK(removed_fraction >= 0.04);
        CHECK(removed_fraction <= 0.07);
    }
    SUBCASE("collinear cloud aborts with a diagnostic") {
        std::vector<ZScorePair> line;
        for (int i = 0; i < 30; ++i)
            line.push_back({"l" + std::to_string(i), static_cast<double>(i),
                            2.0 * static_cast<double>(i), 1});
        try {
            remove_ellipse_outliers(line, 0.95);
            FAIL("expected singular-covariance");
        } catch (const SefError& e) {
            CHECK(e.code() == "singular-covariance");
        }
    }
    SUBCASE("fewer than 3 pairs") {
        std::vector<ZScorePair> two{{"a", 0, 0, 1}, {"b", 1, 1, 1}};
        CHECK_THROWS_AS(remove_ellipse_outliers(two, 0.95), SefError);
    }
}

TEST_CASE("histogram binning") {
    SUBCASE("single pair at the range center lands in exactly one cell") {
        const std::vector<ZScorePair> one{{"c", 0.0, 0.0, 1}};
        const SefHistogram h = sef_histogram(one, 40, -5.0, 5.0);
        CHECK(h.total() == 1.0);
        CHECK(h.at(20, 20) == 1.0);
        CHECK(h.overflow == 0);
    }
    SUBCASE("empty input") {
        const SefHistogram h = sef_histogram({}, 40, -5.0, 5.0);
        CHECK(h.total() == 0.0);
        CHECK(h.overflow == 0);
    }
    SUBCASE("lattice points against a brute-force binning oracle") {
        std::vector<ZScorePair> pairs;
        const int bins = 25;
        const double lo = -5.0, hi = 5.0;
        const double w = (hi - lo) / bins;
        std::uint64_t s = 99;
        for (int i = 0; i < 1000; ++i) {
            s = s * 6364136223846793005ULL + 1442695040888963407ULL;
            const int cx = static_cast<int>((s >> 33) % bins);
            const int cy = static_cast<int>((s >> 13) % bins);
            // Cell centers: no boundary ambiguity.
            pairs.push_back({"g" + std::to_string(i), lo + (cx + 0.5) * w,
                             lo + (cy + 0.5) * w, 1});
        }
        for (int i = 0; i < 7; ++i)
            pairs.push_back({"far" + std::to_string(i), 6.0 + i, -9.0, 1});

        const SefHistogram h = sef_histogram(pairs, bins, lo, hi);

        std::vector<double> oracle(static_cast<std::size_t>(bins) * bins, 0.0);
        long long oracle_overflow = 0;
        for (const auto& p : pairs) {
            bool placed = false;
            for (int r = 0; r < bins && !placed; ++r) {
                for (int c = 0; c < bins && !placed; ++c) {
                    const double x0 = lo + c * w, x1 = lo + (c + 1) * w;
                    const double y0 = lo + r * w, y1 = lo + (r + 1) * w;
                    const bool in_x = p.z_t >= x0 && (p.z_t < x1 || (c == bins - 1 && p.z_t <= hi));
                    const bool in_y = p.z_vw >= y0 && (p.z_vw < y1 || (r == bins - 1 && p.z_vw <= hi));
                    if (in_x && in_y) {
                        oracle[static_cast<std::size_t>(r) * bins + c] += 1.0;
                        placed = true;
                    }
                }
            }
            if (!placed) ++oracle_overflow;
        }
        CHECK(h.counts == oracle);
        CHECK(h.overflow == oracle_overflow);
        CHECK(h.total() + static_cast<double>(h.overflow) ==
              static_cast<double>(pairs.size()));
    }
}

TEST_CASE("box smoothing") {
    SUBCASE("one pass spreads a delta into a 10x10 block of 0.01") {
        SefHistogram h;
        h.bins_x = h.bins_y = 40;
        h.counts.assign(1600, 0.0);
        h.at(20, 20) = 1.0;
        const SefHistogram s = convolve_box_once(h);
        for (int r = 0; r < 40; ++r) {
            for (int c = 0; c < 40; ++c) {
                const bool inside = r >= 16 && r <= 25 && c >= 16 && c <= 25;
                CHECK(s.at(r, c) == doctest::Approx(inside ? 0.01 : 0.0).epsilon(1e-12));
            }
        }
    }
    SUBCASE("all-zero grid stays zero") {
        SefHistogram h;
        h.bins_x = h.bins_y = 12;
        h.counts.assign(144, 0.0);
        const SefHistogram s = smooth_histogram(h);
        for (double c : s.counts) CHECK(c == 0.0);
    }
    SUBCASE("interior delta conserves mass across two passes") {
        SefHistogram h;
        h.bins_x = h.bins_y = 60;
        h.counts.assign(3600, 0.0);
        h.at(30, 30) = 1.0;  // >= 19 cells from every edge
        const SefHistogram s = smooth_histogram(h);
        CHECK(std::fabs(s.total() - 1.0) < 1e-12);
    }
    SUBCASE("direct convolution oracle on a random grid") {
        SefHistogram h;
        h.bins_x = h.bins_y = 30;
        h.counts.assign(900, 0.0);
        std::uint64_t s = 4242;
        for (auto& cell : h.counts) {
            s = s * 6364136223846793005ULL + 1442695040888963407ULL;
            cell = static_cast<double>((s >> 40)) / 65536.0;
        }
        const SefHistogram got = convolve_box_once(h);
        for (int r = 0; r < 30; ++r) {
            for (int c = 0; c < 30; ++c) {
                double acc = 0.0;
                for (int dr = -5; dr <= 4; ++dr) {
                    for (int dc = -5; dc <= 4; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= 30 || cc < 0 || cc >= 30) continue;
                        acc += 0.01 * h.at(rr, cc);
                    }
                }
                CHECK(got.at(r, c) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
    SUBCASE("smoothing is linear") {
        // Histogram-scale cell counts (what real fingerprints hold).
        auto random_grid = [](std::uint64_t seed) {
            SefHistogram h;
            h.bins_x = h.bins_y = 24;
            h.counts.assign(576, 0.0);
            std::uint64_t s = seed;
            for (auto& cell : h.counts) {
                s = s * 6364136223846793005ULL + 1442695040888963407ULL;
                cell = static_cast<double>(s >> 53);  // 0..2047
            }
            return h;
        };
        const SefHistogram h1 = random_grid(1), h2 = random_grid(2);
        SefHistogram sum = h1;
        for (std::size_t i = 0; i < sum.counts.size(); ++i) sum.counts[i] += h2.counts[i];
        const SefHistogram s1 = smooth_histogram(h1);
        const SefHistogram s2 = smooth_histogram(h2);
        const SefHistogram s12 = smooth_histogram(sum);
        for (std::size_t i = 0; i < s12.counts.size(); ++i) {
            CHECK(std::fabs(s12.counts[i] - (s1.counts[i] + s2.counts[i])) < 1e-12);
        }
    }
    SUBCASE("grids under 10x10 are refused") {
        SefHistogram h;
        h.bins_x = h.bins_y = 9;
        h.counts.assign(81, 0.0);
        try {
            convolve_box_once(h);
            FAIL("expected grid-too-small");
        } catch (const SefError& e) {
            CHECK(e.code() == "grid-too-small");
        }
    }
}

TEST_CASE("contour export") {
    SefHistogram h;
    h.bins_x = h.bins_y = 10;
    h.counts.assign(100, 0.0);
    SUBCASE("all-zero grid flags empty contours") {
        const ContourDoc doc = export_contour_grid(h, 5);
        CHECK(doc.empty);
        REQUIRE(doc.levels.size() == 5);
        for (double v : doc.levels) CHECK(v == 0.0);
    }
    SUBCASE("equally spaced thresholds under the grid maximum") {
        h.at(4, 4) = 1.0;
        const ContourDoc doc = export_contour_grid(h, 4);
        CHECK_FALSE(doc.empty);
        REQUIRE(doc.levels.size() == 4);
        const double expected[] = {0.2, 0.4, 0.6, 0.8};
        for (int i = 0; i < 4; ++i)
            CHECK(doc.levels[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
    SUBCASE("thresholds scale with a smoothed delta") {
        SefHistogram d;
        d.bins_x = d.bins_y = 40;
        d.counts.assign(1600, 0.0);
        d.at(20, 20) = 1.0;
        const ContourDoc doc = export_contour_grid(convolve_box_once(d), 4);
        CHECK(doc.grid.max_value() == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(doc.levels[3] == doctest::Approx(0.008).epsilon(1e-12));
    }
}

TEST_CASE("z-score CSV round trip") {
    std::vector<ZScorePair> pairs{
        {"u1", 0.123456789012345, -2.5, 100},
        {"u2", -0.000001, 4.25, 3000},
        {"u3", 1.0 / 3.0, -1.0 / 7.0, 57},
    };
    std::ostringstream out;
    write_zscores_csv(out, pairs);
    std::istringstream in(out.str());
    const auto back = read_zscores_csv(in);
    CHECK(back == pairs);
}
