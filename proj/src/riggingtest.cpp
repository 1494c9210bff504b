#include "sefkit/riggingtest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

#include "sefkit/error.hpp"
#include "sefkit/stats.hpp"

namespace sefkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMinSideSize = 10;
constexpr double kReferenceMembership = 0.95;

bool zero_spread(double sd, const std::vector<double>& x) {
    double scale = 1.0;
    for (double v : x) scale = std::max(scale, std::fabs(v));
    return sd <= 1e-12 * scale;
}

}  // namespace

SizeSplit split_by_percentile(const std::vector<ZScorePair>& z, double p) {
    if (z.empty()) throw std::invalid_argument("split_by_percentile: empty input");
    if (!(p > 0.0 && p < 100.0))
        throw std::invalid_argument("split_by_percentile: p must be in (0,100)");

    std::vector<long long> sizes;
    sizes.reserve(z.size());
    for (const auto& pair : z) sizes.push_back(pair.electors);
    std::sort(sizes.begin(), sizes.end());

    SizeSplit split;
    split.p = p;
    split.threshold = stats::nearest_rank_threshold(sizes, p);
    for (const auto& pair : z) {
        (pair.electors < split.threshold ? split.small : split.large).push_back(pair);
    }
    split.valid = split.small.size() >= kMinSideSize && split.large.size() >= kMinSideSize;
    return split;
}

MedianCenter median_center(const std::vector<ZScorePair>& z) {
    if (z.empty()) throw SefError("empty-input", "median center of an empty cloud");
    std::vector<double> scratch;
    scratch.reserve(z.size());
    for (const auto& p : z) scratch.push_back(p.z_t);
    MedianCenter c;
    c.turnout = stats::median_inplace(scratch);
    scratch.clear();
    for (const auto& p : z) scratch.push_back(p.z_vw);
    c.winner = stats::median_inplace(scratch);
    return c;
}

double center_distance(double small_turnout, double small_winner, double large_turnout,
                       double large_winner) {
    return std::hypot(small_turnout - large_turnout, small_winner - large_winner);
}

SplitCenters split_centers(const SizeSplit& split) {
    const MedianCenter s = median_center(split.small);
    const MedianCenter l = median_center(split.large);
    SplitCenters c;
    c.small_turnout = s.turnout;
    c.small_winner = s.winner;
    c.large_turnout = l.turnout;
    c.large_winner = l.winner;
    c.distance = center_distance(c.small_turnout, c.small_winner, c.large_turnout,
                                 c.large_winner);
    return c;
}

TauResult thompson_tau(const std::vector<double>& x, double alpha) {
    if (x.size() < 3)
        throw SefError("too-few-observations", "Thompson Tau needs at least 3 observations");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("thompson_tau: alpha must be in (0,1)");

    TauResult result;
    result.alpha = alpha;
    std::vector<std::size_t> alive(x.size());
    std::iota(alive.begin(), alive.end(), std::size_t{0});

    while (alive.size() >= 3) {
        const double n = static_cast<double>(alive.size());
        std::vector<double> values;
        values.reserve(alive.size());
        for (std::size_t i : alive) values.push_back(x[i]);
        const double m = stats::mean(values);
        const double sd = stats::sample_std(values);
        const double t = stats::student_t_quantile(1.0 - alpha / 2.0, n - 2.0);
        const double r = t * (n - 1.0) / std::sqrt(n * (n - 2.0 + t * t));
        result.thresholds.push_back(r);

        // Identical observations carry no outliers; all deviations count as 0.
        if (zero_spread(sd, values)) break;

        std::size_t worst_pos = 0;
        double worst_dev = -1.0;
        for (std::size_t j = 0; j < alive.size(); ++j) {
            const double dev = std::fabs(x[alive[j]] - m) / sd;
            if (dev > worst_dev) {
                worst_dev = dev;
                worst_pos = j;
            }
        }
        if (worst_dev > r) {
            result.outlier_indices.push_back(alive[worst_pos]);
            alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst_pos));
        } else {
            break;
        }
    }
    return result;
}

std::vector<double> default_p_grid() { return make_p_grid(0.5, 0.5, 90.0); }

std::vector<double> make_p_grid(double start, double step, double end) {
    if (!(start > 0.0 && start < 100.0 && end > 0.0 && end < 100.0 && step > 0.0 &&
          start <= end))
        throw std::invalid_argument("p grid must satisfy 0 < start <= end < 100, step > 0");
    std::vector<double> grid;
    for (int k = 0;; ++k) {
        const double p = start + step * k;
        if (p > end + 1e-9) break;
        grid.push_back(p);
    }
    return grid;
}

std::vector<std::string> build_reference_set(const std::vector<DCurve>& curves, double alpha) {
    if (curves.size() < 3)
        throw SefError("too-few-elections", "reference set needs at least 3 elections");
    const std::size_t n_p = curves.empty() ? 0 : curves.front().distances.size();
    for (const auto& c : curves) {
        if (c.distances.size() != n_p)
            throw std::invalid_argument("build_reference_set: misaligned D curves");
    }

    std::vector<std::size_t> valid_count(curves.size(), 0);
    std::vector<std::size_t> flagged_count(curves.size(), 0);
    for (std::size_t ip = 0; ip < n_p; ++ip) {
        std::vector<double> values;
        std::vector<std::size_t> who;
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const double d = curves[k].distances[ip];
            if (std::isfinite(d)) {
                ++valid_count[k];
                values.push_back(d);
                who.push_back(k);
            }
        }
        if (values.size() < 3) continue;  // Tau cannot run; nobody is flagged here
        const TauResult tau = thompson_tau(values, alpha);
        for (std::size_t idx : tau.outlier_indices) ++flagged_count[who[idx]];
    }

    std::vector<std::string> reference;
    for (std::size_t k = 0; k < curves.size(); ++k) {
        if (valid_count[k] == 0) continue;
        const double kept_fraction =
            static_cast<double>(valid_count[k] - flagged_count[k]) /
            static_cast<double>(valid_count[k]);
        if (kept_fraction >= kReferenceMembership) reference.push_back(curves[k].election);
    }
    if (reference.empty())
        throw SefError("empty-reference-set", "no trusted baseline elections remain");
    return reference;
}

double delta(double d_value, const std::vector<double>& reference_distances) {
    if (reference_distances.size() < 2)
        throw SefError("too-few-observations", "delta needs at least 2 reference distances");
    const double m = stats::mean(reference_distances);
    const double sd = stats::sample_std(reference_distances);
    if (zero_spread(sd, reference_distances))
        throw SefError("zero-reference-spread", "reference distances have zero spread");
    return (d_value - m) / sd;
}

std::string classify_verdict(bool in_reference_set, const std::vector<PerPState>& per_p) {
    std::size_t valid = 0, outlier = 0, rigging = 0;
    for (const auto& s : per_p) {
        if (!s.valid) continue;
        ++valid;
        if (s.is_outlier) {
            ++outlier;
            if (s.upper_right) ++rigging;
        }
    }
    if (valid == 0) return "indeterminate";
    if (in_reference_set) return "no-anomaly";
    if (2 * rigging > valid) return "consistent-with-rigging";
    if (2 * outlier > valid) return "indeterminate";
    return "no-anomaly";
}

namespace {

// Per-election cloud sorted by elector count, strings stripped for the sweep.
struct Cloud {
    std::vector<long long> electors;  // ascending
    std::vector<double> z_t;
    std::vector<double> z_vw;
};

Cloud make_cloud(const ElectionZ& e) {
    std::vector<std::size_t> order(e.pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (e.pairs[a].electors != e.pairs[b].electors)
            return e.pairs[a].electors < e.pairs[b].electors;
        return a < b;
    });
    Cloud c;
    c.electors.reserve(order.size());
    c.z_t.reserve(order.size());
    c.z_vw.reserve(order.size());
    for (std::size_t i : order) {
        c.electors.push_back(e.pairs[i].electors);
        c.z_t.push_back(e.pairs[i].z_t);
        c.z_vw.push_back(e.pairs[i].z_vw);
    }
    return c;
}

double range_median(std::span<const double> values, std::vector<double>& scratch) {
    scratch.assign(values.begin(), values.end());
    return stats::median_inplace(scratch);
}

}  // namespace

EnsembleResult run_rigging_test(const std::vector<ElectionZ>& elections,
                                const RiggingTestConfig& cfg) {
    if (elections.size() < 3)
        throw SefError("too-few-elections", "the comparative test needs at least 3 elections");

    const std::size_t n_elec = elections.size();
    const std::size_t n_p = cfg.p_grid.size();

    std::vector<Cloud> clouds;
    clouds.reserve(n_elec);
    for (const auto& e : elections) clouds.push_back(make_cloud(e));

    EnsembleResult result;
    result.p_grid = cfg.p_grid;
    result.reports.resize(n_elec);
    for (std::size_t k = 0; k < n_elec; ++k) {
        result.reports[k].election = elections[k].name;
        result.reports[k].per_p.assign(n_p, PerPState{false, kNaN, kNaN, kNaN, false, false});
    }
    result.accepted_upper.assign(n_p, kNaN);
    result.accepted_lower.assign(n_p, kNaN);

    // Stage 1: per-election center distances over the grid.
    std::vector<double> scratch;
    for (std::size_t k = 0; k < n_elec; ++k) {
        const Cloud& c = clouds[k];
        const std::size_t n = c.electors.size();
        for (std::size_t ip = 0; ip < n_p; ++ip) {
            if (n == 0) break;
            const long long thr = stats::nearest_rank_threshold(c.electors, cfg.p_grid[ip]);
            const auto idx = static_cast<std::size_t>(
                std::lower_bound(c.electors.begin(), c.electors.end(), thr) -
                c.electors.begin());
            if (idx < kMinSideSize || n - idx < kMinSideSize) continue;

            auto& state = result.reports[k].per_p[ip];
            const double mts = range_median({c.z_t.data(), idx}, scratch);
            const double mtl = range_median({c.z_t.data() + idx, n - idx}, scratch);
            const double mvs = range_median({c.z_vw.data(), idx}, scratch);
            const double mvl = range_median({c.z_vw.data() + idx, n - idx}, scratch);
            state.valid = true;
            state.d = center_distance(mts, mvs, mtl, mvl);
            state.upper_right = mts > mtl && mvs > mvl;
        }
    }

    // Stage 2: cross-election Tau at each percentile.
    struct TauBand {
        bool defined = false;
        double lower = 0.0, upper = 0.0;  // acceptance band in D units
    };
    std::vector<TauBand> bands(n_p);
    for (std::size_t ip = 0; ip < n_p; ++ip) {
        std::vector<double> values;
        std::vector<std::size_t> who;
        for (std::size_t k = 0; k < n_elec; ++k) {
            if (result.reports[k].per_p[ip].valid) {
                values.push_back(result.reports[k].per_p[ip].d);
                who.push_back(k);
            }
        }
        if (values.size() < 3) continue;
        const TauResult tau = thompson_tau(values, cfg.alpha);
        std::vector<bool> flagged(values.size(), false);
        for (std::size_t idx : tau.outlier_indices) flagged[idx] = true;
        const double r = tau.thresholds.back();
        std::vector<double> survivors;
        for (std::size_t j = 0; j < values.size(); ++j)
            if (!flagged[j]) survivors.push_back(values[j]);
        const double mu_s = stats::mean(survivors);
        const double sd_s = stats::sample_std(survivors);
        bands[ip] = {true, mu_s - r * sd_s, mu_s + r * sd_s};
        for (std::size_t j = 0; j < values.size(); ++j) {
            result.reports[who[j]].per_p[ip].is_outlier = flagged[j];
            result.reports[who[j]].per_p[ip].tau_threshold = r;
        }
    }

    // Stage 3: reference set.
    {
        std::vector<DCurve> curves(n_elec);
        for (std::size_t k = 0; k < n_elec; ++k) {
            curves[k].election = elections[k].name;
            curves[k].distances.reserve(n_p);
            for (std::size_t ip = 0; ip < n_p; ++ip)
                curves[k].distances.push_back(result.reports[k].per_p[ip].d);
        }
        result.reference_set = build_reference_set(curves, cfg.alpha);
    }
    std::vector<bool> in_ref(n_elec, false);
    for (std::size_t k = 0; k < n_elec; ++k) {
        in_ref[k] = std::find(result.reference_set.begin(), result.reference_set.end(),
                              elections[k].name) != result.reference_set.end();
        result.reports[k].in_reference_set = in_ref[k];
    }

    // Stage 4: effect sizes and the acceptance band in delta units.
    for (std::size_t ip = 0; ip < n_p; ++ip) {
        std::vector<double> reference_d;
        for (std::size_t k = 0; k < n_elec; ++k) {
            if (in_ref[k] && result.reports[k].per_p[ip].valid)
                reference_d.push_back(result.reports[k].per_p[ip].d);
        }
        if (reference_d.size() < 2) continue;
        const double mu_r = stats::mean(reference_d);
        const double sd_r = stats::sample_std(reference_d);
        if (zero_spread(sd_r, reference_d)) continue;
        for (std::size_t k = 0; k < n_elec; ++k) {
            auto& state = result.reports[k].per_p[ip];
            if (state.valid) state.delta = (state.d - mu_r) / sd_r;
        }
        if (bands[ip].defined) {
            result.accepted_lower[ip] = (bands[ip].lower - mu_r) / sd_r;
            result.accepted_upper[ip] = (bands[ip].upper - mu_r) / sd_r;
        }
    }

    // Stage 5: verdicts.
    for (std::size_t k = 0; k < n_elec; ++k) {
        result.reports[k].verdict = classify_verdict(in_ref[k], result.reports[k].per_p);
    }
    return result;
}

namespace {

nlohmann::ordered_json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

nlohmann::ordered_json report_to_json(const TestReport& report,
                                      const std::vector<double>& p_grid, double alpha) {
    nlohmann::ordered_json doc;
    doc["election"] = report.election;
    doc["alpha"] = alpha;
    doc["in_reference_set"] = report.in_reference_set;
    doc["delta_self_referential"] = report.in_reference_set;
    doc["verdict"] = report.verdict;
    auto per_p = nlohmann::ordered_json::array();
    for (std::size_t ip = 0; ip < report.per_p.size(); ++ip) {
        const auto& s = report.per_p[ip];
        per_p.push_back({{"p", p_grid[ip]},
                         {"valid", s.valid},
                         {"D", finite_or_null(s.d)},
                         {"delta", finite_or_null(s.delta)},
                         {"tau_threshold", finite_or_null(s.tau_threshold)},
                         {"is_outlier", s.is_outlier},
                         {"upper_right", s.upper_right}});
    }
    doc["per_p"] = std::move(per_p);
    return doc;
}

nlohmann::ordered_json ensemble_to_json(const EnsembleResult& result, double alpha) {
    nlohmann::ordered_json doc;
    doc["alpha"] = alpha;
    doc["p_grid"] = result.p_grid;
    doc["reference_set"] = result.reference_set;
    auto region = nlohmann::ordered_json::object();
    auto upper = nlohmann::ordered_json::array();
    auto lower = nlohmann::ordered_json::array();
    for (std::size_t ip = 0; ip < result.p_grid.size(); ++ip) {
        upper.push_back(finite_or_null(result.accepted_upper[ip]));
        lower.push_back(finite_or_null(result.accepted_lower[ip]));
    }
    region["upper"] = std::move(upper);
    region["lower"] = std::move(lower);
    doc["accepted_region"] = std::move(region);
    doc["delta_reference_line"] = 3.0;
    auto elections = nlohmann::ordered_json::array();
    for (const auto& report : result.reports) {
        nlohmann::ordered_json e;
        e["name"] = report.election;
        e["in_reference_set"] = report.in_reference_set;
        e["verdict"] = report.verdict;
        nlohmann::ordered_json d = nlohmann::ordered_json::array();
        nlohmann::ordered_json dl = nlohmann::ordered_json::array();
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        nlohmann::ordered_json ur = nlohmann::ordered_json::array();
        for (const auto& s : report.per_p) {
            d.push_back(finite_or_null(s.d));
            dl.push_back(finite_or_null(s.delta));
            out.push_back(s.is_outlier);
            ur.push_back(s.upper_right);
        }
        e["D"] = std::move(d);
        e["delta"] = std::move(dl);
        e["is_outlier"] = std::move(out);
        e["upper_right"] = std::move(ur);
        elections.push_back(std::move(e));
    }
    doc["elections"] = std::move(elections);
    return doc;
}

void write_delta_curves_csv(std::ostream& out, const EnsembleResult& result) {
    out << "p";
    for (const auto& report : result.reports) out << ',' << report.election;
    out << '\n';
    char buf[32];
    const auto emit = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        out.write(buf, ptr - buf);
    };
    for (std::size_t ip = 0; ip < result.p_grid.size(); ++ip) {
        emit(result.p_grid[ip]);
        for (const auto& report : result.reports) {
            out << ',';
            if (std::isfinite(report.per_p[ip].delta)) emit(report.per_p[ip].delta);
        }
        out << '\n';
    }
}

}  // namespace sefkit
