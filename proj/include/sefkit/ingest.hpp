#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace sefkit {

// One line of a raw results file, counts as published.
struct RawRecord {
    std::string unit_id;
    std::string neighborhood_id;
    long long electors = 0;
    long long ballots_cast = 0;
    long long winner_votes = 0;
    long long line = -1;  // 1-based source line; -1 when synthesized
};

enum class RecordStatus { Valid, ZeroElectors, ZeroBallots, IncompatibleCounts };

const char* to_string(RecordStatus status);

// Total function: a record is valid iff electors > 0, ballots_cast > 0 and
// winner_votes <= ballots_cast <= electors.
RecordStatus validate_record(const RawRecord& rec);

// A retained polling station.  Percentages are computed once, in double
// precision, and never rounded until output.
struct ElectoralUnit {
    std::string unit_id;
    std::string neighborhood_id;
    long long electors = 0;
    double turnout_pct = 0.0;  // 100 * ballots_cast / electors
    double winner_pct = 0.0;   // 100 * winner_votes / ballots_cast
    bool operator==(const ElectoralUnit&) const = default;
};

// Integer counts reconstructed from the stored percentages.  Exact for any
// unit built from compatible integer counts.
long long ballots_cast_of(const ElectoralUnit& u);
long long winner_votes_of(const ElectoralUnit& u);

struct Exclusion {
    std::string id;      // unit_id or neighborhood_id
    std::string reason;  // stable reason code
    long long line = -1;
    bool operator==(const Exclusion&) const = default;
};

struct Election {
    std::string name;
    std::vector<ElectoralUnit> units;
    std::map<std::string, std::vector<std::size_t>> neighborhoods;  // id -> unit indices
    std::vector<Exclusion> exclusion_log;
    bool operator==(const Election&) const = default;
};

struct ElectionSummary {
    std::string name;
    long long n_units = 0;
    double mean_electors = 0.0;
    double std_electors = 0.0;  // sample standard deviation, divisor N-1
};

// Inclusion gates.  The unit and neighborhood gates are strict ("more than").
inline constexpr std::size_t kMinUnitsPerNeighborhood = 10;
inline constexpr std::size_t kMinUnitsGate = 1000;
inline constexpr std::size_t kMinNeighborhoodsGate = 100;

struct CsvFormat {
    char delimiter = ',';
    std::string unit_col = "unit_id";
    std::string neighborhood_col = "neighborhood_id";
    std::string electors_col = "electors";
    std::string ballots_col = "ballots_cast";
    std::string winner_col = "winner_votes";
};

// Parses a delimited text stream with a header row.  Lines starting with '#'
// and blank lines are skipped.  Throws SefError("schema-mismatch") for a
// missing column and SefError("record-malformed") with the offending line
// number for unparseable rows.
std::vector<RawRecord> parse_records_csv(std::istream& in, const CsvFormat& fmt = {});

// Same, reading from a file.  Throws SefError("file-unreadable").
std::vector<RawRecord> read_records_file(const std::string& path, const CsvFormat& fmt = {});

// Serializes records in the same delimited format the parser accepts.
void write_records_csv(std::ostream& out, const std::vector<RawRecord>& records,
                       const CsvFormat& fmt = {});

// Applies record validation, the >= 10 units-per-neighborhood floor, then the
// global gates (N > 1000 units, > 100 neighborhoods).  Every dropped record or
// neighborhood lands in the exclusion log.  Throws
// SefError("election-rejected") when a global gate fails.
Election assemble_election(const std::string& name, const std::vector<RawRecord>& records);

Election load_election(const std::string& path, const std::string& name,
                       const CsvFormat& fmt = {});

ElectionSummary summarize(const Election& e);

// Canonical JSON serialization (units + exclusion_log); the inverse of
// election_from_json.  Neighborhood grouping is rebuilt on load.
nlohmann::ordered_json election_to_json(const Election& e);
Election election_from_json(const nlohmann::json& doc);

Election load_election_json(const std::string& path);

nlohmann::ordered_json summary_to_json(const ElectionSummary& s);

}  // namespace sefkit
