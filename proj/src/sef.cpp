#include "sefkit/sef.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "sefkit/error.hpp"
#include "sefkit/stats.hpp"

namespace sefkit {

namespace {

// Spread below this (in percentage points) is treated as zero; percentages
// live in [0,100], so anything smaller is rounding noise.
constexpr double kSigmaFloor = 1e-9;

struct LooStats {
    double mean;
    double ss;  // sum of squared deviations about the leave-one-out mean
};

// Leave-one-out mean and squared-deviation sum from whole-stratum mean and M2.
LooStats leave_one_out(double value, double stratum_mean, double m2, std::size_t m) {
    const double d = value - stratum_mean;
    const double md = static_cast<double>(m);
    LooStats s;
    s.mean = stratum_mean - d / (md - 1.0);
    s.ss = std::max(0.0, m2 - d * d * md / (md - 1.0));
    return s;
}

double squared_deviations(const std::vector<double>& x, double mean) {
    double m2 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
    }
    return m2;
}

}  // namespace

ZScoreResult compute_zscores(const Election& e, bool leave_one_out_mode) {
    struct Slot {
        bool has_pair = false;
        ZScorePair pair;
        bool skipped = false;
    };
    std::vector<Slot> slots(e.units.size());

    for (const auto& [nbhd_id, members] : e.neighborhoods) {
        const std::size_t m = members.size();
        std::vector<double> t, vw;
        t.reserve(m);
        vw.reserve(m);
        for (std::size_t idx : members) {
            t.push_back(e.units[idx].turnout_pct);
            vw.push_back(e.units[idx].winner_pct);
        }
        const std::size_t min_members = leave_one_out_mode ? 3 : 2;
        if (m < min_members) {
            for (std::size_t idx : members) slots[idx].skipped = true;
            continue;
        }

        const double mu_t = stats::mean(t);
        const double mu_vw = stats::mean(vw);
        const double m2_t = squared_deviations(t, mu_t);
        const double m2_vw = squared_deviations(vw, mu_vw);

        if (!leave_one_out_mode) {
            const double sd_t = std::sqrt(m2_t / static_cast<double>(m - 1));
            const double sd_vw = std::sqrt(m2_vw / static_cast<double>(m - 1));
            const bool degenerate = sd_t <= kSigmaFloor || sd_vw <= kSigmaFloor;
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t idx = members[j];
                if (degenerate) {
                    slots[idx].skipped = true;
                    continue;
                }
                slots[idx].has_pair = true;
                slots[idx].pair = {e.units[idx].unit_id, (t[j] - mu_t) / sd_t,
                                   (vw[j] - mu_vw) / sd_vw, e.units[idx].electors};
            }
            continue;
        }

        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t idx = members[j];
            const LooStats st = leave_one_out(t[j], mu_t, m2_t, m);
            const LooStats sv = leave_one_out(vw[j], mu_vw, m2_vw, m);
            const double sd_t = std::sqrt(st.ss / static_cast<double>(m - 2));
            const double sd_vw = std::sqrt(sv.ss / static_cast<double>(m - 2));
            if (sd_t <= kSigmaFloor || sd_vw <= kSigmaFloor) {
                slots[idx].skipped = true;
                continue;
            }
            slots[idx].has_pair = true;
            slots[idx].pair = {e.units[idx].unit_id, (t[j] - st.mean) / sd_t,
                               (vw[j] - sv.mean) / sd_vw, e.units[idx].electors};
        }
    }

    ZScoreResult result;
    result.pairs.reserve(e.units.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].has_pair) {
            result.pairs.push_back(std::move(slots[i].pair));
        } else if (slots[i].skipped) {
            result.skipped.push_back({e.units[i].unit_id, "degenerate-stratum", -1});
        }
    }
    return result;
}

std::vector<NeighborhoodStats> neighborhood_stats(const Election& e) {
    std::vector<NeighborhoodStats> out;
    out.reserve(e.neighborhoods.size());
    for (const auto& [nbhd_id, members] : e.neighborhoods) {
        std::vector<double> t, vw;
        t.reserve(members.size());
        vw.reserve(members.size());
        for (std::size_t idx : members) {
            t.push_back(e.units[idx].turnout_pct);
            vw.push_back(e.units[idx].winner_pct);
        }
        NeighborhoodStats s;
        s.neighborhood_id = nbhd_id;
        s.member_count = members.size();
        s.mean_turnout = stats::mean(t);
        s.std_turnout = stats::sample_std(t);
        s.mean_winner = stats::mean(vw);
        s.std_winner = stats::sample_std(vw);
        out.push_back(std::move(s));
    }
    return out;
}

EllipseSplit remove_ellipse_outliers(const std::vector<ZScorePair>& z, double confidence) {
    if (z.size() < 3)
        throw SefError("too-few-observations", "ellipse removal needs at least 3 pairs");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("confidence must be in (0,1)");

    const double n = static_cast<double>(z.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : z) {
        mx += p.z_t;
        my += p.z_vw;
    }
    mx /= n;
    my /= n;

    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& p : z) {
        const double dx = p.z_t - mx;
        const double dy = p.z_vw - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n - 1.0;
    syy /= n - 1.0;
    sxy /= n - 1.0;

    const double det = sxx * syy - sxy * sxy;
    if (!(det > 1e-12 * std::max(sxx * syy, 1e-300))) {
        throw SefError("singular-covariance",
                       "z-score cloud is collinear; confidence ellipse undefined");
    }

    EllipseSplit split;
    split.squared_distance_cutoff = stats::chi_squared_quantile_2dof(confidence);
    for (const auto& p : z) {
        const double dx = p.z_t - mx;
        const double dy = p.z_vw - my;
        const double d2 = (syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det;
        if (d2 > split.squared_distance_cutoff) {
            split.removed.push_back(p);
        } else {
            split.kept.push_back(p);
        }
    }
    return split;
}

double SefHistogram::total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
}

double SefHistogram::max_value() const {
    double m = 0.0;
    for (double c : counts) m = std::max(m, c);
    return m;
}

SefHistogram sef_histogram(const std::vector<ZScorePair>& z, int bins, double lo, double hi) {
    if (bins < 10) throw std::invalid_argument("sef_histogram: bins >= 10 required");
    if (!(lo < hi)) throw std::invalid_argument("sef_histogram: lo < hi required");

    SefHistogram h;
    h.bins_x = h.bins_y = bins;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    const double width = (hi - lo) / bins;
    for (const auto& p : z) {
        const double x = p.z_t;
        const double y = p.z_vw;
        if (x < lo || x > hi || y < lo || y > hi) {
            ++h.overflow;
            continue;
        }
        const int col = std::min(bins - 1, static_cast<int>(std::floor((x - lo) / width)));
        const int row = std::min(bins - 1, static_cast<int>(std::floor((y - lo) / width)));
        h.at(row, col) += 1.0;
    }
    return h;
}

SefHistogram convolve_box_once(const SefHistogram& h) {
    if (h.bins_x < 10 || h.bins_y < 10)
        throw SefError("grid-too-small", "smoothing kernel needs a grid of at least 10x10");
    SefHistogram out = h;
    for (int r = 0; r < h.bins_y; ++r) {
        const int r0 = std::max(0, r - 5);
        const int r1 = std::min(h.bins_y - 1, r + 4);
        for (int c = 0; c < h.bins_x; ++c) {
            const int c0 = std::max(0, c - 5);
            const int c1 = std::min(h.bins_x - 1, c + 4);
            // Kahan summation keeps the window sum within a few ulps, which
            // the mass-conservation and linearity contracts rely on.
            double sum = 0.0, comp = 0.0;
            for (int rr = r0; rr <= r1; ++rr) {
                for (int cc = c0; cc <= c1; ++cc) {
                    const double y = h.at(rr, cc) - comp;
                    const double t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
            }
            out.at(r, c) = 0.01 * sum;
        }
    }
    return out;
}

SefHistogram smooth_histogram(const SefHistogram& h) {
    return convolve_box_once(convolve_box_once(h));
}

ContourDoc export_contour_grid(const SefHistogram& h, int levels) {
    if (levels < 1) throw std::invalid_argument("export_contour_grid: levels >= 1");
    ContourDoc doc;
    doc.grid = h;
    const double max = h.max_value();
    doc.empty = !(max > 0.0);
    doc.levels.reserve(static_cast<std::size_t>(levels));
    for (int i = 1; i <= levels; ++i) {
        doc.levels.push_back(doc.empty ? 0.0
                                       : max * static_cast<double>(i) /
                                             static_cast<double>(levels + 1));
    }
    return doc;
}

nlohmann::ordered_json contour_to_json(const ContourDoc& doc) {
    nlohmann::ordered_json j;
    j["bins_x"] = doc.grid.bins_x;
    j["bins_y"] = doc.grid.bins_y;
    j["range"] = {doc.grid.lo, doc.grid.hi};
    j["row_axis"] = "z_vw";
    j["col_axis"] = "z_t";
    j["counts"] = doc.grid.counts;
    j["overflow"] = doc.grid.overflow;
    j["max"] = doc.grid.max_value();
    j["levels"] = doc.levels;
    j["empty"] = doc.empty;
    return j;
}

namespace {

void format_double(std::ostream& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

double parse_double_field(const std::string& field, long long line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw SefError("record-malformed", "not a number: '" + field + "'", line);
    return v;
}

}  // namespace

void write_zscores_csv(std::ostream& out, const std::vector<ZScorePair>& pairs) {
    out << "unit_id,z_t,z_vw,electors\n";
    for (const auto& p : pairs) {
        out << p.unit_id << ',';
        format_double(out, p.z_t);
        out << ',';
        format_double(out, p.z_vw);
        out << ',' << p.electors << '\n';
    }
}

std::vector<ZScorePair> read_zscores_csv(std::istream& in) {
    std::vector<ZScorePair> pairs;
    std::string line;
    long long line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "unit_id,z_t,z_vw,electors")
                throw SefError("schema-mismatch", "unexpected z-score header: '" + line + "'");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 4)
            throw SefError("record-malformed", "expected 4 fields", line_no);
        ZScorePair p;
        p.unit_id = fields[0];
        p.z_t = parse_double_field(fields[1], line_no);
        p.z_vw = parse_double_field(fields[2], line_no);
        long long electors = 0;
        auto [ptr, ec] =
            std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), electors);
        if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size())
            throw SefError("record-malformed", "not an integer: '" + fields[3] + "'", line_no);
        p.electors = electors;
        pairs.push_back(std::move(p));
    }
    if (!header_seen) throw SefError("schema-mismatch", "empty z-score file");
    return pairs;
}

std::vector<ZScorePair> read_zscores_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SefError("file-unreadable", "cannot open '" + path + "'");
    return read_zscores_csv(in);
}

}  // namespace sefkit
