#include "dml/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dml/dataset.hpp"
#include "dml/errors.hpp"
#include "dml/rng.hpp"

namespace dml {

OutputFormat format_from_string(const std::string& s) {
    if (s == "text") return OutputFormat::Text;
    if (s == "tsv") return OutputFormat::Tsv;
    if (s == "yaml") return OutputFormat::Yaml;
    throw InvalidArgument("unknown output format '" + s + "' (expected text, tsv or yaml)");
}

std::string settings_fingerprint(const DmlConfig& config) {
    const PenaltyConfig& pc = config.penalty;
    std::ostringstream os;
    os << "instrument=" << to_string(config.instrument)
       << " step1_treatment=" << (config.penalize_treatment ? "penalized" : "unpenalized")
       << " step2_refit=" << (config.step2_union ? "union" : "step2-support") << " penalty=" << to_string(pc.method);
    if (pc.method == PenaltyMethod::Plugin) {
        os << "(c=" << format_number(pc.c) << ",gamma=" << (pc.gamma ? format_number(*pc.gamma) : "0.1/log(n)")
           << ",ls-factor=2,refinements=" << pc.refinement_iterations << ")";
    } else if (pc.method == PenaltyMethod::CrossValidation) {
        os << "(folds=" << pc.folds << ",rule=" << (pc.one_se_rule ? "1se" : "min") << ",seed=" << pc.cv_seed << ")";
    } else {
        os << "(lambda=" << format_number(pc.fixed_lambda) << ")";
    }
    os << " search=max(" << format_number(config.search_c0) << "/log(n),10*se0) grid=" << config.grid_points
       << " ci=alpha_check+-z*se rng=" << CounterRng::kName;
    return os.str();
}

ResultTable make_result_table(const MultiResult& result, Family family, const DmlConfig& config) {
    ResultTable table;
    table.family = family;
    table.level = config.level;
    table.multiplicity_adjusted = result.multiplicity_adjusted;
    table.settings = settings_fingerprint(config);
    for (const auto& tr : result.rows) {
        ResultRow row;
        row.treatment = tr.treatment;
        if (tr.estimate) {
            const DmlEstimate& e = *tr.estimate;
            row.ok = true;
            row.coefficient = e.alpha_check;
            row.std_error = e.std_error;
            row.p_value = e.p_value;
            row.ci_low = e.ci_low;
            row.ci_high = e.ci_high;
            row.n = e.n;
            row.step1_support = e.step1_names;
            row.step2_support = e.step2_names;
            for (const auto& w : e.warnings) {
                auto it = std::find(table.warnings.begin(), table.warnings.end(), w);
                if (it == table.warnings.end()) {
                    table.warnings.push_back(w);
                    it = table.warnings.end() - 1;
                }
                row.warnings.push_back(static_cast<std::size_t>(it - table.warnings.begin()));
            }
        } else {
            row.error = tr.error;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::pair<std::string, std::string> interval_labels(double level) {
    auto pct = [](double v) { return format_number(std::round(v * 1e8) / 1e8) + "%"; };
    return {pct(100.0 * level / 2.0), pct(100.0 * (1.0 - level / 2.0))};
}

std::string fixed(double v, int precision) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

namespace {

// Footnote ids are 1-based: warnings first, then one per failed row.
std::string markers(const ResultRow& row, std::size_t error_id) {
    std::vector<std::size_t> ids;
    for (std::size_t w : row.warnings) ids.push_back(w + 1);
    if (!row.ok) ids.push_back(error_id);
    std::string out;
    for (std::size_t id : ids) out += (out.empty() ? "[" : ",") + std::to_string(id);
    return out.empty() ? out : out + "]";
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
    return out;
}

std::string render_text(const ResultTable& t, int precision) {
    const auto [lo, hi] = interval_labels(t.level);
    const std::vector<std::string> head{"Coefficient", "p-value", lo, hi, "Std.Err"};
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> notes;
    std::size_t failed = 0;
    for (const auto& r : t.rows) {
        if (r.ok) {
            cells.push_back({fixed(r.coefficient, precision), fixed(r.p_value, precision), fixed(r.ci_low, precision),
                             fixed(r.ci_high, precision), fixed(r.std_error, precision)});
        } else {
            cells.push_back({"failed", "", "", "", ""});
        }
        notes.push_back(markers(r, t.warnings.size() + failed + 1));
        if (!r.ok) ++failed;
    }
    std::size_t name_w = 9;
    for (const auto& r : t.rows) name_w = std::max(name_w, r.treatment.size());
    std::vector<std::size_t> w(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        w[c] = head[c].size();
        for (const auto& row : cells) w[c] = std::max(w[c], row[c].size());
    }
    auto pad_left = [](const std::string& s, std::size_t width) { return std::string(width - s.size(), ' ') + s; };
    auto pad_right = [](const std::string& s, std::size_t width) { return s + std::string(width - s.size(), ' '); };

    std::ostringstream os;
    std::string line = pad_right("Treatment", name_w);
    for (std::size_t c = 0; c < head.size(); ++c) line += "  " + pad_left(head[c], w[c]);
    os << line << "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        line = pad_right(t.rows[i].treatment, name_w);
        for (std::size_t c = 0; c < head.size(); ++c) line += "  " + pad_left(cells[i][c], w[c]);
        if (!notes[i].empty()) line += "  " + notes[i];
        while (!line.empty() && line.back() == ' ') line.pop_back();
        os << line << "\n";
    }
    if (!t.warnings.empty() || failed > 0) os << "\n";
    for (std::size_t k = 0; k < t.warnings.size(); ++k) os << "[" << k + 1 << "] " << t.warnings[k] << "\n";
    std::size_t ordinal = 0;
    for (const auto& r : t.rows) {
        if (!r.ok) os << "[" << t.warnings.size() + ++ordinal << "] " << r.treatment << " failed: " << r.error << "\n";
    }
    Index n = 0;
    for (const auto& r : t.rows) {
        if (r.ok) {
            n = r.n;
            break;
        }
    }
    os << "\nfamily " << to_string(t.family) << ", n = " << n << ", level " << format_number(t.level)
       << "; p-values and intervals are per treatment, " << (t.multiplicity_adjusted ? "adjusted" : "no multiplicity adjustment")
       << "\n";
    os << "settings: " << t.settings << "\n";
    return os.str();
}

std::string render_tsv(const ResultTable& t, int precision) {
    const auto [lo, hi] = interval_labels(t.level);
    std::ostringstream os;
    os << "treatment\tCoefficient\tp-value\t" << lo << "\t" << hi << "\tStd.Err\tn\tstep1_support\tstep2_support\tnotes\n";
    std::size_t failed = 0;
    for (const auto& r : t.rows) {
        os << r.treatment;
        if (r.ok) {
            os << "\t" << fixed(r.coefficient, precision) << "\t" << fixed(r.p_value, precision) << "\t"
               << fixed(r.ci_low, precision) << "\t" << fixed(r.ci_high, precision) << "\t"
               << fixed(r.std_error, precision) << "\t" << r.n << "\t" << join(r.step1_support, ",") << "\t"
               << join(r.step2_support, ",");
        } else {
            os << "\tNA\tNA\tNA\tNA\tNA\tNA\t\t";
        }
        os << "\t" << markers(r, t.warnings.size() + failed + 1) << "\n";
        if (!r.ok) ++failed;
    }
    for (std::size_t k = 0; k < t.warnings.size(); ++k) os << "# [" << k + 1 << "] " << t.warnings[k] << "\n";
    std::size_t ordinal = 0;
    for (const auto& r : t.rows) {
        if (!r.ok) os << "# [" << t.warnings.size() + ++ordinal << "] " << r.treatment << " failed: " << r.error << "\n";
    }
    os << "# multiplicity_adjusted: " << (t.multiplicity_adjusted ? "true" : "false") << "\n";
    os << "# settings: " << t.settings << "\n";
    return os.str();
}

std::string render_yaml(const ResultTable& t) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "version" << YAML::Value << 1;
    out << YAML::Key << "family" << YAML::Value << to_string(t.family);
    out << YAML::Key << "level" << YAML::Value << format_number(t.level);
    out << YAML::Key << "multiplicity_adjusted" << YAML::Value << t.multiplicity_adjusted;
    out << YAML::Key << "settings" << YAML::Value << YAML::DoubleQuoted << t.settings;
    out << YAML::Key << "warnings" << YAML::Value << YAML::BeginSeq;
    for (const auto& w : t.warnings) out << YAML::DoubleQuoted << w;
    out << YAML::EndSeq;
    out << YAML::Key << "rows" << YAML::Value << YAML::BeginSeq;
    for (const auto& r : t.rows) {
        out << YAML::BeginMap;
        out << YAML::Key << "treatment" << YAML::Value << YAML::DoubleQuoted << r.treatment;
        if (r.ok) {
            out << YAML::Key << "coefficient" << YAML::Value << format_number(r.coefficient);
            out << YAML::Key << "std_error" << YAML::Value << format_number(r.std_error);
            out << YAML::Key << "p_value" << YAML::Value << format_number(r.p_value);
            out << YAML::Key << "ci_low" << YAML::Value << format_number(r.ci_low);
            out << YAML::Key << "ci_high" << YAML::Value << format_number(r.ci_high);
            out << YAML::Key << "n" << YAML::Value << r.n;
            out << YAML::Key << "step1_support" << YAML::Value << YAML::Flow << r.step1_support;
            out << YAML::Key << "step2_support" << YAML::Value << YAML::Flow << r.step2_support;
            out << YAML::Key << "warnings" << YAML::Value << YAML::Flow << r.warnings;
        } else {
            out << YAML::Key << "error" << YAML::Value << YAML::DoubleQuoted << r.error;
        }
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace

std::string render_result_table(const ResultTable& table, OutputFormat format, int precision) {
    if (precision < 0 || precision > 17) throw InvalidArgument("precision must lie in [0, 17]");
    switch (format) {
        case OutputFormat::Text: return render_text(table, precision);
        case OutputFormat::Tsv: return render_tsv(table, precision);
        case OutputFormat::Yaml: return render_yaml(table);
    }
    return {};
}

ResultTable parse_result_table(const std::string& yaml_text) {
    ResultTable t;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        const auto fam = root["family"].as<std::string>();
        t.family = fam == "linear" ? Family::Linear : Family::Logistic;
        t.level = root["level"].as<double>();
        t.multiplicity_adjusted = root["multiplicity_adjusted"].as<bool>();
        t.settings = root["settings"].as<std::string>();
        t.warnings = root["warnings"].as<std::vector<std::string>>();
        for (const auto& node : root["rows"]) {
            ResultRow r;
            r.treatment = node["treatment"].as<std::string>();
            if (node["error"]) {
                r.error = node["error"].as<std::string>();
            } else {
                r.ok = true;
                r.coefficient = node["coefficient"].as<double>();
                r.std_error = node["std_error"].as<double>();
                r.p_value = node["p_value"].as<double>();
                r.ci_low = node["ci_low"].as<double>();
                r.ci_high = node["ci_high"].as<double>();
                r.n = node["n"].as<Index>();
                r.step1_support = node["step1_support"].as<std::vector<std::string>>();
                r.step2_support = node["step2_support"].as<std::vector<std::string>>();
                r.warnings = node["warnings"].as<std::vector<std::size_t>>();
            }
            t.rows.push_back(std::move(r));
        }
    } catch (const YAML::Exception& e) {
        throw SchemaError(std::string("malformed result table: ") + e.what());
    }
    return t;
}

}  // namespace dml
