#include "sefkit/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sefkit/error.hpp"
#include "sefkit/stats.hpp"

namespace sefkit {

namespace {

std::string trim(std::string s) {
    const auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            fields.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return fields;
}

long long parse_count(const std::string& field, const std::string& col, long long line) {
    long long value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty()) {
        throw SefError("record-malformed",
                       "column '" + col + "': not an integer: '" + field + "'", line);
    }
    if (value < 0) {
        throw SefError("record-malformed", "column '" + col + "': negative count", line);
    }
    return value;
}

}  // namespace

const char* to_string(RecordStatus status) {
    switch (status) {
        case RecordStatus::Valid: return "valid";
        case RecordStatus::ZeroElectors: return "zero-electors";
        case RecordStatus::ZeroBallots: return "zero-ballots";
        case RecordStatus::IncompatibleCounts: return "incompatible-counts";
    }
    return "unknown";
}

RecordStatus validate_record(const RawRecord& rec) {
    if (rec.electors <= 0) return RecordStatus::ZeroElectors;
    if (rec.ballots_cast <= 0) return RecordStatus::ZeroBallots;
    if (rec.winner_votes > rec.ballots_cast || rec.ballots_cast > rec.electors)
        return RecordStatus::IncompatibleCounts;
    return RecordStatus::Valid;
}

long long ballots_cast_of(const ElectoralUnit& u) {
    return std::llround(u.turnout_pct * static_cast<double>(u.electors) / 100.0);
}

long long winner_votes_of(const ElectoralUnit& u) {
    const auto cast = ballots_cast_of(u);
    return std::llround(u.winner_pct * static_cast<double>(cast) / 100.0);
}

std::vector<RawRecord> parse_records_csv(std::istream& in, const CsvFormat& fmt) {
    std::string line;
    long long line_no = 0;

    // Header row.
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        header = split_line(line, fmt.delimiter);
        break;
    }
    if (header.empty()) throw SefError("schema-mismatch", "no header row found");

    const auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SefError("schema-mismatch", "missing column '" + name + "'");
    };
    const std::size_t c_unit = column(fmt.unit_col);
    const std::size_t c_nbhd = column(fmt.neighborhood_col);
    const std::size_t c_elec = column(fmt.electors_col);
    const std::size_t c_cast = column(fmt.ballots_col);
    const std::size_t c_win = column(fmt.winner_col);

    std::vector<RawRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_line(line, fmt.delimiter);
        if (fields.size() != header.size()) {
            throw SefError("record-malformed",
                           "expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()),
                           line_no);
        }
        RawRecord rec;
        rec.unit_id = fields[c_unit];
        rec.neighborhood_id = fields[c_nbhd];
        if (rec.unit_id.empty())
            throw SefError("record-malformed", "empty unit_id", line_no);
        if (rec.neighborhood_id.empty())
            throw SefError("record-malformed", "empty neighborhood_id", line_no);
        rec.electors = parse_count(fields[c_elec], fmt.electors_col, line_no);
        rec.ballots_cast = parse_count(fields[c_cast], fmt.ballots_col, line_no);
        rec.winner_votes = parse_count(fields[c_win], fmt.winner_col, line_no);
        rec.line = line_no;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<RawRecord> read_records_file(const std::string& path, const CsvFormat& fmt) {
    std::ifstream in(path);
    if (!in) throw SefError("file-unreadable", "cannot open '" + path + "'");
    return parse_records_csv(in, fmt);
}

void write_records_csv(std::ostream& out, const std::vector<RawRecord>& records,
                       const CsvFormat& fmt) {
    const char d = fmt.delimiter;
    out << fmt.unit_col << d << fmt.neighborhood_col << d << fmt.electors_col << d
        << fmt.ballots_col << d << fmt.winner_col << '\n';
    for (const auto& r : records) {
        out << r.unit_id << d << r.neighborhood_id << d << r.electors << d << r.ballots_cast
            << d << r.winner_votes << '\n';
    }
}

Election assemble_election(const std::string& name, const std::vector<RawRecord>& records) {
    struct Candidate {
        ElectoralUnit unit;
        long long line;
    };
    std::vector<Candidate> candidates;
    std::vector<Exclusion> exclusions;
    std::set<std::string> seen_ids;

    for (const auto& rec : records) {
        if (!seen_ids.insert(rec.unit_id).second) {
            exclusions.push_back({rec.unit_id, "duplicate-unit-id", rec.line});
            continue;
        }
        const RecordStatus status = validate_record(rec);
        if (status != RecordStatus::Valid) {
            exclusions.push_back({rec.unit_id, to_string(status), rec.line});
            continue;
        }
        ElectoralUnit u;
        u.unit_id = rec.unit_id;
        u.neighborhood_id = rec.neighborhood_id;
        u.electors = rec.electors;
        u.turnout_pct = 100.0 * static_cast<double>(rec.ballots_cast) /
                        static_cast<double>(rec.electors);
        u.winner_pct = 100.0 * static_cast<double>(rec.winner_votes) /
                       static_cast<double>(rec.ballots_cast);
        candidates.push_back({std::move(u), rec.line});
    }

    // The 10-unit neighborhood floor binds before the global gates.
    std::map<std::string, std::size_t> neighborhood_sizes;
    for (const auto& c : candidates) ++neighborhood_sizes[c.unit.neighborhood_id];
    std::set<std::string> dropped;
    for (const auto& [id, count] : neighborhood_sizes) {
        if (count < kMinUnitsPerNeighborhood) {
            dropped.insert(id);
            exclusions.push_back({id, "small-neighborhood", -1});
        }
    }

    Election e;
    e.name = name;
    for (auto& c : candidates) {
        if (dropped.count(c.unit.neighborhood_id)) continue;
        e.neighborhoods[c.unit.neighborhood_id].push_back(e.units.size());
        e.units.push_back(std::move(c.unit));
    }
    e.exclusion_log = std::move(exclusions);

    if (e.units.size() <= kMinUnitsGate || e.neighborhoods.size() <= kMinNeighborhoodsGate) {
        throw SefError("election-rejected",
                       "'" + name + "': " + std::to_string(e.units.size()) +
                           " units in " + std::to_string(e.neighborhoods.size()) +
                           " neighborhoods after filtering (need > " +
                           std::to_string(kMinUnitsGate) + " units and > " +
                           std::to_string(kMinNeighborhoodsGate) + " neighborhoods)");
    }
    return e;
}

Election load_election(const std::string& path, const std::string& name,
                       const CsvFormat& fmt) {
    return assemble_election(name, read_records_file(path, fmt));
}

ElectionSummary summarize(const Election& e) {
    ElectionSummary s;
    s.name = e.name;
    s.n_units = static_cast<long long>(e.units.size());
    std::vector<double> electors;
    electors.reserve(e.units.size());
    for (const auto& u : e.units) electors.push_back(static_cast<double>(u.electors));
    s.mean_electors = stats::mean(electors);
    s.std_electors = stats::sample_std(electors);
    return s;
}

nlohmann::ordered_json election_to_json(const Election& e) {
    nlohmann::ordered_json doc;
    doc["name"] = e.name;
    auto units = nlohmann::ordered_json::array();
    for (const auto& u : e.units) {
        units.push_back({{"unit_id", u.unit_id},
                         {"neighborhood_id", u.neighborhood_id},
                         {"electors", u.electors},
                         {"turnout_pct", u.turnout_pct},
                         {"winner_pct", u.winner_pct}});
    }
    doc["units"] = std::move(units);
    auto log = nlohmann::ordered_json::array();
    for (const auto& x : e.exclusion_log) {
        log.push_back({{"id", x.id}, {"reason", x.reason}, {"line", x.line}});
    }
    doc["exclusion_log"] = std::move(log);
    return doc;
}

Election election_from_json(const nlohmann::json& doc) {
    Election e;
    try {
        e.name = doc.at("name").get<std::string>();
        for (const auto& ju : doc.at("units")) {
            ElectoralUnit u;
            u.unit_id = ju.at("unit_id").get<std::string>();
            u.neighborhood_id = ju.at("neighborhood_id").get<std::string>();
            u.electors = ju.at("electors").get<long long>();
            u.turnout_pct = ju.at("turnout_pct").get<double>();
            u.winner_pct = ju.at("winner_pct").get<double>();
            e.neighborhoods[u.neighborhood_id].push_back(e.units.size());
            e.units.push_back(std::move(u));
        }
        for (const auto& jx : doc.at("exclusion_log")) {
            Exclusion x;
            x.id = jx.at("id").get<std::string>();
            x.reason = jx.at("reason").get<std::string>();
            x.line = jx.at("line").get<long long>();
            e.exclusion_log.push_back(std::move(x));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw SefError("schema-mismatch", std::string("bad election document: ") + ex.what());
    }
    return e;
}

Election load_election_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SefError("file-unreadable", "cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& ex) {
        throw SefError("schema-mismatch", "'" + path + "': " + ex.what());
    }
    return election_from_json(doc);
}

nlohmann::ordered_json summary_to_json(const ElectionSummary& s) {
    return nlohmann::ordered_json{
        {"name", s.name}, {"N", s.n_units}, {"mu_n", s.mean_electors}, {"sigma_n", s.std_electors}};
}

}  // namespace sefkit
