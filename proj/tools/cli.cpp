#include "cli.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dml/dataset.hpp"
#include "dml/dml.hpp"
#include "dml/encoding.hpp"
#include "dml/errors.hpp"
#include "dml/mc.hpp"
#include "dml/report.hpp"
#include "dml/table.hpp"

#ifndef DML_VERSION
#define DML_VERSION "0.0.0"
#endif

namespace dml::cli {

namespace {

struct Options {
    std::string data;
    std::string spec;
    std::string outcome;
    std::string treatments;
    std::string controls;
    std::string family = "logit";
    std::string penalty = "plugin";
    double level = 0.05;
    std::optional<std::uint64_t> seed;
    std::string format = "text";
    std::string out;
    bool fail_fast = false;
    std::optional<int> jobs;
    int precision = 3;
    std::string instrument = "sqrt-sigma";
    bool penalize_treatment = false;
    bool step2_union = false;
    bool one_se = false;
};

int resolve_jobs(const std::optional<int>& flag) {
    if (flag) {
        if (*flag < 1) throw InvalidArgument("--jobs must be at least 1");
        return *flag;
    }
    if (const char* env = std::getenv(kJobsEnv); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw InvalidArgument(std::string(kJobsEnv) + " must be a positive integer");
        return static_cast<int>(v);
    }
    return 1;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Comma-separated names or shell-style globs; every pattern must match.
std::vector<std::string> select_columns(const std::string& selector, const std::vector<std::string>& names,
                                        const char* what) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    const auto patterns = split_list(selector);
    if (patterns.empty()) throw InvalidArgument(std::string(what) + " selector is empty");
    for (const auto& pat : patterns) {
        bool hit = false;
        for (const auto& name : names) {
            if (fnmatch(pat.c_str(), name.c_str(), 0) == 0) {
                hit = true;
                if (seen.insert(name).second) out.push_back(name);
            }
        }
        if (!hit) throw InvalidArgument(std::string(what) + " selector '" + pat + "' matches no column");
    }
    return out;
}

/// A plain numeric table: outcome by name, everything else a control until
/// the treatment selector promotes it. Rows with missing cells are dropped.
Dataset dataset_from_table(const RawTable& raw, const std::string& outcome, const std::string& treatments) {
    const auto oi = raw.index_of(outcome);
    if (!oi) throw SchemaError("outcome column '" + outcome + "' not found");
    std::vector<std::string> names;
    for (std::size_t j = 0; j < raw.columns.size(); ++j) {
        if (j != *oi) names.push_back(raw.columns[j]);
    }
    std::set<std::string> treat;
    if (!treatments.empty()) {
        for (const auto& t : select_columns(treatments, names, "treatment")) treat.insert(t);
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
        bool complete = true;
        for (std::size_t j = 0; j < raw.columns.size(); ++j) {
            const Cell& c = raw.rows[i][j];
            if (c.kind == Cell::Kind::Missing) complete = false;
            if (c.kind == Cell::Kind::Text) {
                throw ParseError("row " + std::to_string(i + 1) + ", column '" + raw.columns[j] +
                                     "': non-numeric value '" + c.text + "' (encode categorical data with --spec)",
                                 i + 1);
            }
        }
        if (complete) keep.push_back(i);
    }
    if (keep.empty()) throw EmptyDatasetError("no complete rows remain after dropping missing values");
    const auto n = static_cast<Index>(keep.size());
    Vector y(n);
    Matrix design(n, static_cast<Index>(names.size()));
    std::vector<ColumnInfo> cols;
    for (const auto& name : names) {
        ColumnInfo c;
        c.name = name;
        c.source = name;
        c.role = treat.count(name) ? Role::Treatment : Role::Control;
        cols.push_back(std::move(c));
    }
    for (Index i = 0; i < n; ++i) {
        const auto& row = raw.rows[keep[static_cast<std::size_t>(i)]];
        Index k = 0;
        for (std::size_t j = 0; j < raw.columns.size(); ++j) {
            if (j == *oi) {
                y[i] = row[j].number;
            } else {
                design(i, k++) = row[j].number;
            }
        }
    }
    return Dataset(outcome, std::move(y), std::move(design), std::move(cols), raw.rows.size() - keep.size());
}

Dataset load_fit_data(const Options& o) {
    if (std::filesystem::exists(o.data + ".meta.yaml")) return read_dataset(o.data);
    const RawTable raw = load_table_file(o.data);
    if (!o.spec.empty()) return encode(raw, load_encoding_spec(o.spec));
    if (o.outcome.empty()) throw InvalidArgument("--outcome is required for a plain numeric table");
    return dataset_from_table(raw, o.outcome, o.treatments);
}

DmlConfig make_config(const Options& o) {
    DmlConfig config;
    if (o.penalty == "plugin") {
        config.penalty.method = PenaltyMethod::Plugin;
    } else if (o.penalty == "cv") {
        config.penalty.method = PenaltyMethod::CrossValidation;
        config.penalty.one_se_rule = o.one_se;
    } else {
        throw InvalidArgument("--penalty must be plugin or cv");
    }
    if (o.seed) config.penalty.cv_seed = *o.seed;
    if (!(o.level > 0.0 && o.level < 1.0)) throw InvalidArgument("--level must lie in (0,1)");
    config.level = o.level;
    config.instrument = o.instrument == "sigma" ? InstrumentScaling::Sigma : InstrumentScaling::SqrtSigma;
    config.penalize_treatment = o.penalize_treatment;
    config.step2_union = o.step2_union;
    config.fail_fast = o.fail_fast;
    config.jobs = resolve_jobs(o.jobs);
    return config;
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write '" + path + "'");
    f << text;
}

int cmd_encode(const Options& o, std::ostream& out) {
    const EncodingSpec spec = load_encoding_spec(o.spec);
    const Dataset data = encode(load_table_file(o.data), spec);
    write_dataset(data, o.out);
    out << "n = " << data.n() << ", p = " << data.p() << " (" << data.count(Role::Treatment) << " treatments, "
        << data.count(Role::Control) << " controls), dropped rows = " << data.dropped_rows() << "\n";
    out << "wrote " << o.out << " and " << o.out << ".meta.yaml\n";
    return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
    const DmlConfig config = make_config(o);
    const OutputFormat format = format_from_string(o.format);
    const Family family = o.family == "linear" ? Family::Linear : Family::Logistic;
    const Dataset data = load_fit_data(o);
    if (!o.outcome.empty() && o.outcome != data.outcome_name()) {
        throw InvalidArgument("--outcome '" + o.outcome + "' differs from the dataset outcome '" + data.outcome_name() + "'");
    }

    std::vector<std::string> treatments;
    std::vector<std::string> names;
    for (const auto& c : data.columns()) names.push_back(c.name);
    if (!o.treatments.empty()) {
        treatments = select_columns(o.treatments, names, "treatment");
    } else {
        for (Index j : data.indices_with_role(Role::Treatment)) treatments.push_back(names[static_cast<std::size_t>(j)]);
    }
    if (treatments.empty()) throw InvalidArgument("no treatment columns (use --treatments)");
    std::vector<std::string> controls;
    if (!o.controls.empty()) {
        std::vector<std::string> pool;
        for (const auto& nme : names) {
            if (std::find(treatments.begin(), treatments.end(), nme) == treatments.end()) pool.push_back(nme);
        }
        controls = select_columns(o.controls, pool, "control");
    }

    const MultiResult result = dml_multi(data, treatments, family, config, controls);
    const ResultTable table = make_result_table(result, family, config);
    write_output(o.out, render_result_table(table, format, o.precision), out);
    if (!o.out.empty()) {
        const auto failed = std::count_if(table.rows.begin(), table.rows.end(), [](const ResultRow& r) { return !r.ok; });
        out << "wrote " << o.out << " (" << table.rows.size() << " treatments, " << failed << " failed)\n";
    }
    return kExitOk;
}

int cmd_simulate(const Options& o, bool level_given, std::ostream& out) {
    StudySpec study = load_study_spec(o.spec);
    if (o.seed) study.base_seed = *o.seed;
    if (level_given) {
        if (!(o.level > 0.0 && o.level < 1.0)) throw InvalidArgument("--level must lie in (0,1)");
        study.level = o.level;
    }
    if (o.jobs || std::getenv(kJobsEnv)) study.jobs = resolve_jobs(o.jobs);
    const OutputFormat format = format_from_string(o.format);
    const auto reports = run_study(study);

    if (!o.out.empty()) write_output(o.out, dump_coverage_reports(reports), out);
    if (format == OutputFormat::Yaml && o.out.empty()) {
        out << dump_coverage_reports(reports);
    } else if (format != OutputFormat::Yaml) {
        out << render_coverage_table(reports);
    }
    int status = kExitOk;
    for (const auto& r : reports) {
        const bool too_many = r.failure_rate() > study.max_failure_rate;
        out << r.method << ": coverage " << fixed(r.coverage, 3) << ", mean bias " << fixed(r.mean_bias, 4)
            << ", failures " << r.failures << "/" << r.reps << (too_many ? " (exceeds failure ceiling)" : "") << "\n";
        if (too_many) status = kExitStudy;
    }
    return status;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Debiased lasso inference for treatment effects with many controls", "dmltool"};
    app.require_subcommand(0, 1);
    Options o;
    bool version = false;
    app.add_flag("--version", version, "Print version and estimator settings");

    auto* encode_cmd = app.add_subcommand("encode", "Encode a raw table into a design matrix");
    encode_cmd->add_option("--data", o.data, "Raw delimited table")->required()->check(CLI::ExistingFile);
    encode_cmd->add_option("--spec", o.spec, "Encoding spec (YAML)")->required()->check(CLI::ExistingFile);
    encode_cmd->add_option("--out", o.out, "Output CSV; metadata goes to <out>.meta.yaml")->required();

    auto* fit_cmd = app.add_subcommand("fit", "Estimate treatment effects");
    fit_cmd->add_option("--data", o.data, "Encoded dataset, raw table with --spec, or numeric table")
        ->required()
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--spec", o.spec, "Encoding spec for a raw table")->check(CLI::ExistingFile);
    fit_cmd->add_option("--outcome", o.outcome, "Outcome column");
    fit_cmd->add_option("--treatments", o.treatments, "Comma-separated treatment names or globs");
    fit_cmd->add_option("--controls", o.controls, "Comma-separated control names or globs");
    fit_cmd->add_option("--family", o.family, "Outcome family")->check(CLI::IsMember({"logit", "linear"}));
    fit_cmd->add_option("--penalty", o.penalty, "Penalty level rule")->check(CLI::IsMember({"plugin", "cv"}));
    fit_cmd->add_flag("--one-se", o.one_se, "Cross-validation one-standard-error rule");
    fit_cmd->add_option("--level", o.level, "Two-sided level of the intervals");
    fit_cmd->add_option("--seed", o.seed, "Seed for cross-validation folds");
    fit_cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"text", "tsv", "yaml"}));
    fit_cmd->add_option("--precision", o.precision, "Decimals in text and tsv output")->check(CLI::Range(0, 17));
    fit_cmd->add_option("--out", o.out, "Write the table here instead of stdout");
    fit_cmd->add_flag("--fail-fast", o.fail_fast, "Stop with exit status 3 at the first failed treatment");
    fit_cmd->add_option("--jobs", o.jobs, std::string("Worker threads (default: $") + kJobsEnv + ", else 1)");
    fit_cmd->add_option("--instrument", o.instrument, "Instrument scaling v/sqrt(sigma) or v/sigma")
        ->check(CLI::IsMember({"sqrt-sigma", "sigma"}));
    fit_cmd->add_flag("--penalize-treatment", o.penalize_treatment, "Penalize the treatment in the step-1 lasso");
    fit_cmd->add_flag("--step2-union", o.step2_union, "Keep step-1 controls in the step-2 refit");

    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study");
    sim_cmd->add_option("--spec", o.spec, "Study spec (YAML)")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", o.out, "Write coverage reports (YAML) here");
    sim_cmd->add_option("--seed", o.seed, "Override the base seed");
    auto* sim_level = sim_cmd->add_option("--level", o.level, "Override the study level");
    sim_cmd->add_option("--format", o.format, "Console format")->check(CLI::IsMember({"text", "tsv", "yaml"}));
    sim_cmd->add_option("--jobs", o.jobs, std::string("Worker threads (default: $") + kJobsEnv + ", else 1)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    if (version) {
        out << "dmltool " << DML_VERSION << "\n" << "settings: " << settings_fingerprint(DmlConfig{}) << "\n";
        return kExitOk;
    }
    try {
        if (encode_cmd->parsed()) return cmd_encode(o, out);
        if (fit_cmd->parsed()) return cmd_fit(o, out);
        if (sim_cmd->parsed()) return cmd_simulate(o, sim_level->count() > 0, out);
        err << "error: a subcommand is required (encode, fit or simulate)\n" << app.help();
        return kExitInput;
    } catch (const EstimationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitEstimation;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace dml::cli
