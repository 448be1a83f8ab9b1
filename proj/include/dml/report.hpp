#pragma once

#include <string>
#include <vector>

#include "dml/dml.hpp"

namespace dml {

enum class OutputFormat { Text, Tsv, Yaml };
OutputFormat format_from_string(const std::string& s);

struct ResultRow {
    std::string treatment;
    bool ok = false;
    double coefficient = 0.0;
    double std_error = 0.0;
    double p_value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    Index n = 0;
    std::vector<std::string> step1_support;
    std::vector<std::string> step2_support;
    std::vector<std::size_t> warnings;  // indices into ResultTable::warnings
    std::string error;
};

/// One row per treatment in request order. Warnings are pooled so that a
/// message shared by several rows is stored once.
struct ResultTable {
    Family family = Family::Logistic;
    double level = 0.05;
    bool multiplicity_adjusted = false;
    std::string settings;
    std::vector<std::string> warnings;
    std::vector<ResultRow> rows;
};

/// Estimator settings as one line, e.g. for --version and table footers.
std::string settings_fingerprint(const DmlConfig& config);

ResultTable make_result_table(const MultiResult& result, Family family, const DmlConfig& config);

/// Interval column labels for a level, "2.5%" and "97.5%" at 0.05.
std::pair<std::string, std::string> interval_labels(double level);

/// Fixed-point with `precision` decimals; never prints "-0.000".
std::string fixed(double v, int precision);

std::string render_result_table(const ResultTable& table, OutputFormat format, int precision = 3);
ResultTable parse_result_table(const std::string& yaml_text);

}  // namespace dml
