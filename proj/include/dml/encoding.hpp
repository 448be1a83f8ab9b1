#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dml/dataset.hpp"
#include "dml/expression.hpp"
#include "dml/table.hpp"

namespace dml {

/// Numeric passthrough: stored value = raw * scale + shift (then optionally standardized).
struct NumericRule {
    double scale = 1.0;
    double shift = 0.0;
};

/// Categorical recoding: raw categories are first mapped through `merge`
/// (categories equal to a level name map to themselves), then every level
/// other than `baseline` becomes one 0/1 column.
struct CategoricalRule {
    std::vector<std::string> levels;
    std::string baseline;
    std::map<std::string, std::string> merge;
    /// Optional output column name per level; defaults to "<name>_<level>".
    std::map<std::string, std::string> labels;
};

/// Numeric column computed from one raw column.
struct DerivedRule {
    Expression expression;
};

struct VariableRule {
    std::string column;  // raw column
    std::string name;    // output name (defaults to column)
    Role role = Role::Control;
    bool standardize = true;  // numeric and derived rules only
    std::variant<NumericRule, CategoricalRule, DerivedRule> rule;
};

/// Product of two design columns. Either side may also name a variable,
/// which expands to all of that variable's output columns.
struct InteractionSpec {
    std::string a;
    std::string b;
    Role role = Role::Control;
};

enum class MissingPolicy { DropListwise, IndicatorZero };

struct OutcomeRule {
    std::string column;
    /// When nonempty, outcome = 1 for these categories and 0 otherwise.
    std::vector<std::string> positive;
};

struct EncodingSpec {
    int version = 1;
    OutcomeRule outcome;
    MissingPolicy missing = MissingPolicy::DropListwise;
    std::vector<VariableRule> variables;
    std::vector<InteractionSpec> interactions;

    /// Checks internal consistency (baselines, merge targets, names).
    void validate() const;
};

EncodingSpec parse_encoding_spec(const std::string& yaml_text);
EncodingSpec load_encoding_spec(const std::string& path);
std::string dump_encoding_spec(const EncodingSpec& spec);

/// Builds the design matrix. Rows with a missing value in any used column are
/// dropped under DropListwise; the drop count is recorded on the Dataset.
Dataset encode(const RawTable& raw, const EncodingSpec& spec);

/// Appends product columns for each pair of existing column names.
Dataset interact(const Dataset& data, const std::vector<InteractionSpec>& pairs);

}  // namespace dml
