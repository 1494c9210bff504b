#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sefkit/diagnostics.hpp"
#include "sefkit/error.hpp"
#include "sefkit/ingest.hpp"
#include "sefkit/riggingtest.hpp"
#include "sefkit/sef.hpp"
#include "sefkit/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sefkit::SefError("file-unreadable", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Every output carries tool version, a hash of the effective configuration,
// and digests of the input files, so artifacts are traceable and reruns are
// byte-comparable.
struct Provenance {
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, digest

    ordered_json to_json() const {
        ordered_json j;
        j["tool"] = "sefkit";
        j["version"] = sefkit::kVersion;
        j["config_hash"] = config_hash;
        auto arr = ordered_json::array();
        for (const auto& [path, digest] : inputs)
            arr.push_back({{"path", path}, {"digest", digest}});
        j["inputs"] = std::move(arr);
        return j;
    }

    std::string csv_block() const {
        std::string block = "# sefkit ";
        block += sefkit::kVersion;
        block += "\n# config ";
        block += config_hash;
        block += "\n";
        for (const auto& [path, digest] : inputs)
            block += "# input " + path + " " + digest + "\n";
        return block;
    }
};

Provenance make_provenance(const ordered_json& config, const std::vector<std::string>& inputs) {
    Provenance p;
    p.config_hash = hex16(fnv1a(config.dump()));
    for (const auto& path : inputs) p.inputs.emplace_back(path, hex16(fnv1a(read_file_bytes(path))));
    return p;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sefkit::SefError("file-unreadable", "cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw sefkit::SefError("file-unreadable", "write failed for '" + path.string() + "'");
}

void write_json_file(const fs::path& path, const ordered_json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

sefkit::Election load_any(const std::string& path, const std::string& name,
                          const sefkit::CsvFormat& fmt) {
    if (fs::path(path).extension() == ".json") return sefkit::load_election_json(path);
    return sefkit::load_election(path, name, fmt);
}

struct CommonOpts {
    std::vector<std::string> inputs;
    std::string out_dir = ".";
    std::string name_override;
    std::string delimiter = ",";
    sefkit::CsvFormat fmt;

    void attach_format_flags(CLI::App* cmd) {
        cmd->add_option("--delimiter", delimiter, "Field delimiter (single character)")
            ->capture_default_str();
        cmd->add_option("--col-unit", fmt.unit_col, "Unit id column name")->capture_default_str();
        cmd->add_option("--col-neighborhood", fmt.neighborhood_col,
                        "Neighborhood id column name")
            ->capture_default_str();
        cmd->add_option("--col-electors", fmt.electors_col, "Electors column name")
            ->capture_default_str();
        cmd->add_option("--col-ballots", fmt.ballots_col, "Ballots-cast column name")
            ->capture_default_str();
        cmd->add_option("--col-winner", fmt.winner_col, "Winner-votes column name")
            ->capture_default_str();
    }

    sefkit::CsvFormat format() const {
        sefkit::CsvFormat f = fmt;
        if (delimiter.size() != 1)
            throw sefkit::SefError("invalid-argument", "--delimiter must be one character");
        f.delimiter = delimiter[0];
        return f;
    }

    std::string election_name(const std::string& path) const {
        return name_override.empty() ? stem_of(path) : name_override;
    }
};

struct SefOpts {
    bool inclusive_strata = false;
    bool no_ellipse = false;
    double confidence = 0.95;
    int bins = 100;
    std::string range = "-5:5";
    int levels = 8;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--inclusive-strata", inclusive_strata,
                      "Include each unit in its own stratum statistics");
        cmd->add_flag("--no-ellipse", no_ellipse, "Skip confidence-ellipse outlier removal");
        cmd->add_option("--confidence", confidence, "Ellipse confidence level")
            ->capture_default_str()
            ->check(CLI::Range(0.0, 1.0));
    }
};

std::pair<double, double> parse_range(const std::string& range) {
    const auto colon = range.find(':');
    if (colon == std::string::npos)
        throw sefkit::SefError("invalid-argument", "--range expects lo:hi");
    try {
        const double lo = std::stod(range.substr(0, colon));
        const double hi = std::stod(range.substr(colon + 1));
        if (!(lo < hi)) throw std::invalid_argument("lo < hi");
        return {lo, hi};
    } catch (const std::exception&) {
        throw sefkit::SefError("invalid-argument", "--range expects lo:hi with lo < hi");
    }
}

std::vector<double> parse_p_grid(const std::string& grid) {
    std::vector<double> parts;
    std::stringstream ss(grid);
    std::string token;
    while (std::getline(ss, token, ':')) parts.push_back(std::stod(token));
    if (parts.size() != 3)
        throw sefkit::SefError("invalid-argument", "--p-grid expects start:step:end");
    return sefkit::make_p_grid(parts[0], parts[1], parts[2]);
}

// ---------------------------------------------------------------------------

int run_validate(const CommonOpts& common) {
    const auto fmt = common.format();
    ordered_json config{{"command", "validate"}, {"delimiter", common.delimiter}};
    for (const auto& path : common.inputs) {
        const auto name = common.election_name(path);
        const sefkit::Election e = load_any(path, name, fmt);
        const Provenance prov = make_provenance(config, {path});
        ordered_json doc;
        doc["provenance"] = prov.to_json();
        ordered_json body = sefkit::election_to_json(e);
        for (auto& [key, value] : body.items()) doc[key] = std::move(value);
        fs::create_directories(common.out_dir);
        write_json_file(fs::path(common.out_dir) / (name + ".election.json"), doc);
        std::cout << name << ": accepted, " << e.units.size() << " units in "
                  << e.neighborhoods.size() << " neighborhoods, " << e.exclusion_log.size()
                  << " exclusions\n";
    }
    return 0;
}

int run_summarize(const CommonOpts& common) {
    const auto fmt = common.format();
    ordered_json config{{"command", "summarize"}, {"delimiter", common.delimiter}};
    for (const auto& path : common.inputs) {
        const auto name = common.election_name(path);
        const sefkit::ElectionSummary s = sefkit::summarize(load_any(path, name, fmt));
        ordered_json doc;
        doc["provenance"] = make_provenance(config, {path}).to_json();
        ordered_json body = sefkit::summary_to_json(s);
        for (auto& [key, value] : body.items()) doc[key] = std::move(value);
        fs::create_directories(common.out_dir);
        write_json_file(fs::path(common.out_dir) / (name + ".summary.json"), doc);
        std::cout << name << ": N=" << s.n_units << " mu_n=" << s.mean_electors
                  << " sigma_n=" << s.std_electors << "\n";
    }
    return 0;
}

int run_sef(const CommonOpts& common, const SefOpts& sef, int bins, const std::string& range,
            int levels) {
    const auto fmt = common.format();
    const auto [lo, hi] = parse_range(range);
    ordered_json config{{"command", "sef"},
                        {"delimiter", common.delimiter},
                        {"inclusive_strata", sef.inclusive_strata},
                        {"no_ellipse", sef.no_ellipse},
                        {"confidence", sef.confidence},
                        {"bins", bins},
                        {"range", {lo, hi}},
                        {"levels", levels}};
    for (const auto& path : common.inputs) {
        const auto name = common.election_name(path);
        const sefkit::Election e = load_any(path, name, fmt);
        const sefkit::ZScoreResult z = sefkit::compute_zscores(e, !sef.inclusive_strata);

        std::vector<sefkit::ZScorePair> pairs;
        std::size_t removed = 0;
        if (sef.no_ellipse) {
            pairs = z.pairs;
        } else {
            auto split = sefkit::remove_ellipse_outliers(z.pairs, sef.confidence);
            removed = split.removed.size();
            pairs = std::move(split.kept);
        }

        const Provenance prov = make_provenance(config, {path});
        fs::create_directories(common.out_dir);

        std::ostringstream csv;
        csv << prov.csv_block();
        sefkit::write_zscores_csv(csv, pairs);
        write_text_file(fs::path(common.out_dir) / (name + ".zscores.csv"), csv.str());

        const sefkit::SefHistogram smoothed =
            sefkit::smooth_histogram(sefkit::sef_histogram(pairs, bins, lo, hi));
        const sefkit::ContourDoc contour = sefkit::export_contour_grid(smoothed, levels);
        ordered_json doc;
        doc["provenance"] = prov.to_json();
        doc["election"] = name;
        doc["zscore_stats"] = {{"pairs", pairs.size()},
                               {"skipped_degenerate", z.skipped.size()},
                               {"removed_outliers", removed}};
        ordered_json body = sefkit::contour_to_json(contour);
        for (auto& [key, value] : body.items()) doc[key] = std::move(value);
        write_json_file(fs::path(common.out_dir) / (name + ".sef.json"), doc);

        std::cout << name << ": " << pairs.size() << " z-score pairs (" << z.skipped.size()
                  << " degenerate skipped, " << removed << " ellipse outliers removed)\n";
    }
    return 0;
}

int run_cumulative(const CommonOpts& common) {
    const auto fmt = common.format();
    ordered_json config{{"command", "cumulative"}, {"delimiter", common.delimiter}};
    for (const auto& path : common.inputs) {
        const auto name = common.election_name(path);
        const sefkit::CumulativeCurve curve =
            sefkit::cumulative_winner_share(load_any(path, name, fmt));
        const Provenance prov = make_provenance(config, {path});
        fs::create_directories(common.out_dir);
        std::ostringstream csv;
        csv << prov.csv_block();
        sefkit::write_cumulative_csv(csv, curve);
        write_text_file(fs::path(common.out_dir) / (name + ".cumulative.csv"), csv.str());
        std::cout << name << ": " << curve.points.size() << " ranks, final winner share "
                  << (curve.points.empty() ? 0.0 : curve.points.back().cum_winner_pct) << "\n";
    }
    return 0;
}

int run_test(const CommonOpts& common, const SefOpts& sef, double alpha,
             const std::string& p_grid, bool from_zscores) {
    if (common.inputs.size() < 3)
        throw sefkit::SefError("too-few-elections",
                               "the comparative test needs at least 3 election inputs, got " +
                                   std::to_string(common.inputs.size()));
    const auto fmt = common.format();
    sefkit::RiggingTestConfig cfg;
    cfg.alpha = alpha;
    cfg.p_grid = parse_p_grid(p_grid);

    ordered_json config{{"command", "test"},
                        {"delimiter", common.delimiter},
                        {"alpha", alpha},
                        {"p_grid", p_grid},
                        {"inclusive_strata", sef.inclusive_strata},
                        {"no_ellipse", sef.no_ellipse},
                        {"confidence", sef.confidence},
                        {"from_zscores", from_zscores}};

    std::vector<sefkit::ElectionZ> elections;
    for (const auto& path : common.inputs) {
        sefkit::ElectionZ ez;
        ez.name = stem_of(path);
        if (from_zscores) {
            ez.pairs = sefkit::read_zscores_file(path);
        } else {
            const sefkit::Election e = load_any(path, ez.name, fmt);
            sefkit::ZScoreResult z = sefkit::compute_zscores(e, !sef.inclusive_strata);
            if (sef.no_ellipse) {
                ez.pairs = std::move(z.pairs);
            } else {
                ez.pairs = sefkit::remove_ellipse_outliers(z.pairs, sef.confidence).kept;
            }
        }
        elections.push_back(std::move(ez));
    }

    const sefkit::EnsembleResult result = sefkit::run_rigging_test(elections, cfg);
    const Provenance prov = make_provenance(config, common.inputs);
    fs::create_directories(common.out_dir);

    for (const auto& report : result.reports) {
        ordered_json doc;
        doc["provenance"] = prov.to_json();
        ordered_json body = sefkit::report_to_json(report, result.p_grid, cfg.alpha);
        for (auto& [key, value] : body.items()) doc[key] = std::move(value);
        write_json_file(fs::path(common.out_dir) / (report.election + ".report.json"), doc);
    }

    ordered_json ensemble;
    ensemble["provenance"] = prov.to_json();
    ordered_json ensemble_body = sefkit::ensemble_to_json(result, cfg.alpha);
    for (auto& [key, value] : ensemble_body.items()) ensemble[key] = std::move(value);
    write_json_file(fs::path(common.out_dir) / "ensemble.json", ensemble);

    std::ostringstream csv;
    csv << prov.csv_block();
    sefkit::write_delta_curves_csv(csv, result);
    write_text_file(fs::path(common.out_dir) / "delta_curves.csv", csv.str());

    std::cout << "reference set:";
    for (const auto& name : result.reference_set) std::cout << ' ' << name;
    std::cout << "\n";
    for (const auto& report : result.reports)
        std::cout << report.election << ": " << report.verdict << "\n";
    return 0;
}

int run_synth(const std::string& spec_path, std::optional<std::uint64_t> seed,
              const std::string& name, std::optional<int> neighborhoods,
              std::optional<int> units, std::optional<double> rig_q,
              std::optional<double> rig_shift_t, std::optional<double> rig_shift_vw,
              std::optional<double> rig_fraction, const std::string& out_file) {
    sefkit::SynthSpec spec;
    std::vector<std::string> inputs;
    if (!spec_path.empty()) {
        nlohmann::json doc;
        std::ifstream in(spec_path);
        if (!in) throw sefkit::SefError("file-unreadable", "cannot open '" + spec_path + "'");
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& ex) {
            throw sefkit::SefError("invalid-spec", "'" + spec_path + "': " + ex.what());
        }
        spec = sefkit::synth_spec_from_json(doc);
        inputs.push_back(spec_path);
    }
    if (seed) spec.seed = *seed;
    if (!name.empty()) spec.name = name;
    if (neighborhoods) spec.n_neighborhoods = *neighborhoods;
    if (units) spec.units_per_neighborhood = *units;
    if (rig_q || rig_shift_t || rig_shift_vw || rig_fraction) {
        sefkit::RiggingSpec rig = spec.rigging.value_or(sefkit::RiggingSpec{});
        if (rig_q) rig.size_percentile_q = *rig_q;
        if (rig_shift_t) rig.shift_t = *rig_shift_t;
        if (rig_shift_vw) rig.shift_vw = *rig_shift_vw;
        if (rig_fraction) rig.fraction_affected = *rig_fraction;
        spec.rigging = rig;
    }
    sefkit::validate_spec(spec);

    const auto records = sefkit::generate_synthetic_records(spec);
    ordered_json config{{"command", "synth"}, {"spec", sefkit::synth_spec_to_json(spec)}};
    const Provenance prov = make_provenance(config, inputs);

    std::ostringstream csv;
    csv << prov.csv_block();
    sefkit::write_records_csv(csv, records);
    if (const auto parent = fs::path(out_file).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_text_file(out_file, csv.str());
    std::cout << spec.name << ": wrote " << records.size() << " units ("
              << spec.n_neighborhoods << " neighborhoods) to " << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Statistical toolkit for detecting voter-rigging traces in small polling "
                 "stations"};
    app.set_version_flag("--version", std::string("sefkit ") + sefkit::kVersion);
    app.require_subcommand(1);

    CommonOpts validate_opts, summarize_opts, sef_common, cumulative_opts, test_common;
    SefOpts sef_opts, test_sef_opts;
    int sef_bins = 100, sef_levels = 8;
    std::string sef_range = "-5:5";
    double test_alpha = 0.05;
    std::string test_p_grid = "0.5:0.5:90";
    bool test_from_zscores = false;

    auto* cmd_validate =
        app.add_subcommand("validate", "Parse and validate election files; emit canonical JSON");
    cmd_validate->add_option("inputs", validate_opts.inputs, "Election files (CSV or JSON)")
        ->required();
    cmd_validate->add_option("--out", validate_opts.out_dir, "Output directory")
        ->capture_default_str();
    cmd_validate->add_option("--name", validate_opts.name_override,
                             "Election name (default: file stem)");
    validate_opts.attach_format_flags(cmd_validate);

    auto* cmd_summarize =
        app.add_subcommand("summarize", "Report unit count and elector-size statistics");
    cmd_summarize->add_option("inputs", summarize_opts.inputs, "Election files")->required();
    cmd_summarize->add_option("--out", summarize_opts.out_dir, "Output directory")
        ->capture_default_str();
    cmd_summarize->add_option("--name", summarize_opts.name_override,
                              "Election name (default: file stem)");
    summarize_opts.attach_format_flags(cmd_summarize);

    auto* cmd_sef = app.add_subcommand(
        "sef", "Compute stratified z-scores and the smoothed fingerprint grid");
    cmd_sef->add_option("inputs", sef_common.inputs, "Election files")->required();
    cmd_sef->add_option("--out", sef_common.out_dir, "Output directory")->capture_default_str();
    cmd_sef->add_option("--name", sef_common.name_override, "Election name");
    cmd_sef->add_option("--bins", sef_bins, "Histogram bins per axis")
        ->capture_default_str()
        ->check(CLI::Range(10, 2000));
    cmd_sef->add_option("--range", sef_range, "Histogram axis range lo:hi")
        ->capture_default_str();
    cmd_sef->add_option("--levels", sef_levels, "Number of contour levels")
        ->capture_default_str()
        ->check(CLI::Range(1, 256));
    sef_common.attach_format_flags(cmd_sef);
    sef_opts.attach(cmd_sef);

    auto* cmd_test = app.add_subcommand(
        "test", "Run the comparative small-station rigging test across elections");
    cmd_test->add_option("inputs", test_common.inputs, "Election files (>= 3)")->required();
    cmd_test->add_option("--out", test_common.out_dir, "Output directory")
        ->capture_default_str();
    cmd_test->add_option("--alpha", test_alpha, "Tau significance level")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    cmd_test->add_option("--p-grid", test_p_grid, "Percentile grid start:step:end")
        ->capture_default_str();
    cmd_test->add_flag("--from-zscores", test_from_zscores,
                       "Inputs are z-score CSV files from the sef subcommand");
    test_common.attach_format_flags(cmd_test);
    test_sef_opts.attach(cmd_test);

    auto* cmd_cumulative = app.add_subcommand(
        "cumulative", "Descending-rank cumulative winner-share curve");
    cmd_cumulative->add_option("inputs", cumulative_opts.inputs, "Election files")->required();
    cmd_cumulative->add_option("--out", cumulative_opts.out_dir, "Output directory")
        ->capture_default_str();
    cmd_cumulative->add_option("--name", cumulative_opts.name_override, "Election name");
    cumulative_opts.attach_format_flags(cmd_cumulative);

    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic election dataset");
    std::string synth_spec_path, synth_name, synth_out;
    std::optional<std::uint64_t> synth_seed;
    std::optional<int> synth_neighborhoods, synth_units;
    std::optional<double> synth_rig_q, synth_rig_shift_t, synth_rig_shift_vw, synth_rig_fraction;
    cmd_synth->add_option("--spec", synth_spec_path, "Generator spec JSON file");
    cmd_synth->add_option("--seed", synth_seed, "Generator seed");
    cmd_synth->add_option("--name", synth_name, "Election name");
    cmd_synth->add_option("--neighborhoods", synth_neighborhoods, "Neighborhood count");
    cmd_synth->add_option("--units", synth_units, "Units per neighborhood");
    cmd_synth->add_option("--rig-q", synth_rig_q, "Rigging size percentile");
    cmd_synth->add_option("--rig-shift-t", synth_rig_shift_t,
                          "Turnout shift in neighborhood standard deviations");
    cmd_synth->add_option("--rig-shift-vw", synth_rig_shift_vw,
                          "Winner-share shift in neighborhood standard deviations");
    cmd_synth->add_option("--rig-fraction", synth_rig_fraction,
                          "Fraction of below-threshold units affected");
    cmd_synth->add_option("--out", synth_out, "Output CSV file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(cmd_validate)) return run_validate(validate_opts);
        if (app.got_subcommand(cmd_summarize)) return run_summarize(summarize_opts);
        if (app.got_subcommand(cmd_sef))
            return run_sef(sef_common, sef_opts, sef_bins, sef_range, sef_levels);
        if (app.got_subcommand(cmd_test))
            return run_test(test_common, test_sef_opts, test_alpha, test_p_grid,
                            test_from_zscores);
        if (app.got_subcommand(cmd_cumulative)) return run_cumulative(cumulative_opts);
        if (app.got_subcommand(cmd_synth))
            return run_synth(synth_spec_path, synth_seed, synth_name, synth_neighborhoods,
                             synth_units, synth_rig_q, synth_rig_shift_t, synth_rig_shift_vw,
                             synth_rig_fraction, synth_out);
    } catch (const sefkit::SefError& e) {
        ordered_json report{{"error",
                             {{"code", e.code()},
                              {"message", e.what()},
                              {"line", e.line() >= 0 ? ordered_json(e.line()) : ordered_json()}}}};
        std::cerr << report.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        ordered_json report{{"error", {{"code", "internal"}, {"message", e.what()}}}};
        std::cerr << report.dump() << "\n";
        return 1;
    }
    return 0;
}
