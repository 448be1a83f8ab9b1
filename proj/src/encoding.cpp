#include "dml/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dml/errors.hpp"

namespace dml {

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::string output_name(const VariableRule& v) {
    return v.name.empty() ? v.column : v.name;
}

std::string dummy_name(const VariableRule& v, const CategoricalRule& c, const std::string& level) {
    const auto it = c.labels.find(level);
    if (it != c.labels.end()) return it->second;
    return output_name(v) + "_" + level;
}

/// Maps a raw category to its post-merge level, or nullopt if unknown.
std::optional<std::string> resolve_level(const CategoricalRule& c, const std::string& raw) {
    const auto m = c.merge.find(raw);
    if (m != c.merge.end()) return m->second;
    if (std::find(c.levels.begin(), c.levels.end(), raw) != c.levels.end()) return raw;
    return std::nullopt;
}

}  // namespace

void EncodingSpec::validate() const {
    if (version != 1) throw SchemaError("unsupported encoding spec version " + std::to_string(version));
    if (outcome.column.empty()) throw SchemaError("encoding spec declares no outcome column");
    std::set<std::string> names;
    for (const auto& v : variables) {
        if (v.column.empty()) throw SchemaError("variable rule without a column");
        if (!names.insert(output_name(v)).second) {
            throw SchemaError("duplicate variable name '" + output_name(v) + "'");
        }
        if (const auto* c = std::get_if<CategoricalRule>(&v.rule)) {
            if (c->levels.empty()) throw SchemaError("categorical '" + v.column + "' declares no levels");
            std::set<std::string> lv(c->levels.begin(), c->levels.end());
            if (lv.size() != c->levels.size()) throw SchemaError("categorical '" + v.column + "' repeats a level");
            if (!lv.count(c->baseline)) {
                throw SchemaError("baseline '" + c->baseline + "' of '" + v.column + "' is not a declared level");
            }
            for (const auto& [from, to] : c->merge) {
                if (!lv.count(to)) {
                    throw SchemaError("merge target '" + to + "' (from '" + from + "') of '" + v.column +
                                      "' is not a declared level");
                }
            }
            for (const auto& [level, label] : c->labels) {
                if (!lv.count(level)) throw SchemaError("label for undeclared level '" + level + "'");
            }
        }
    }
    for (const auto& ia : interactions) {
        if (ia.a.empty() || ia.b.empty()) throw SchemaError("interaction with an empty parent name");
    }
}

// ---------------------------------------------------------------------------
// YAML (de)serialization

namespace {

Role parse_role(const YAML::Node& node) {
    return node ? role_from_string(node.as<std::string>()) : Role::Control;
}

VariableRule parse_variable(const YAML::Node& node) {
    VariableRule v;
    v.column = node["column"].as<std::string>();
    v.name = node["name"].as<std::string>("");
    v.role = parse_role(node["role"]);
    v.standardize = node["standardize"].as<bool>(true);
    const auto type = node["type"].as<std::string>("numeric");
    if (type == "numeric") {
        NumericRule r;
        r.scale = node["scale"].as<double>(1.0);
        r.shift = node["shift"].as<double>(0.0);
        v.rule = r;
    } else if (type == "categorical") {
        CategoricalRule r;
        r.levels = node["levels"].as<std::vector<std::string>>();
        r.baseline = node["baseline"].as<std::string>();
        if (node["merge"]) r.merge = node["merge"].as<std::map<std::string, std::string>>();
        if (node["labels"]) r.labels = node["labels"].as<std::map<std::string, std::string>>();
        v.rule = r;
    } else if (type == "derived") {
        v.rule = DerivedRule{Expression::parse(node["expression"].as<std::string>())};
    } else {
        throw SchemaError("unknown variable type '" + type + "' for column '" + v.column + "'");
    }
    return v;
}

}  // namespace

EncodingSpec parse_encoding_spec(const std::string& yaml_text) {
    EncodingSpec spec;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        if (!root.IsMap()) throw SchemaError("encoding spec must be a mapping");
        if (!root["version"]) throw SchemaError("encoding spec lacks the mandatory 'version' field");
        spec.version = root["version"].as<int>();
        const YAML::Node outcome = root["outcome"];
        if (!outcome) throw SchemaError("encoding spec lacks 'outcome'");
        if (outcome.IsScalar()) {
            spec.outcome.column = outcome.as<std::string>();
        } else {
            spec.outcome.column = outcome["column"].as<std::string>();
            if (outcome["positive"]) spec.outcome.positive = outcome["positive"].as<std::vector<std::string>>();
        }
        const auto missing = root["missing"].as<std::string>("drop");
        if (missing == "drop") spec.missing = MissingPolicy::DropListwise;
        else if (missing == "indicator") spec.missing = MissingPolicy::IndicatorZero;
        else throw SchemaError("unknown missing policy '" + missing + "'");
        for (const auto& node : root["variables"]) spec.variables.push_back(parse_variable(node));
        for (const auto& node : root["interactions"]) {
            InteractionSpec ia;
            if (node.IsSequence()) {
                ia.a = node[0].as<std::string>();
                ia.b = node[1].as<std::string>();
            } else {
                ia.a = node["a"].as<std::string>();
                ia.b = node["b"].as<std::string>();
                ia.role = parse_role(node["role"]);
            }
            spec.interactions.push_back(std::move(ia));
        }
    } catch (const YAML::Exception& e) {
        throw SchemaError(std::string("malformed encoding spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

EncodingSpec load_encoding_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open encoding spec '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_encoding_spec(buf.str());
}

std::string dump_encoding_spec(const EncodingSpec& spec) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "version" << YAML::Value << spec.version;
    if (spec.outcome.positive.empty()) {
        out << YAML::Key << "outcome" << YAML::Value << spec.outcome.column;
    } else {
        out << YAML::Key << "outcome" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "column" << YAML::Value << spec.outcome.column;
        out << YAML::Key << "positive" << YAML::Value << YAML::Flow << spec.outcome.positive;
        out << YAML::EndMap;
    }
    out << YAML::Key << "missing" << YAML::Value
        << (spec.missing == MissingPolicy::DropListwise ? "drop" : "indicator");
    out << YAML::Key << "variables" << YAML::Value << YAML::BeginSeq;
    for (const auto& v : spec.variables) {
        out << YAML::BeginMap;
        out << YAML::Key << "column" << YAML::Value << v.column;
        if (!v.name.empty()) out << YAML::Key << "name" << YAML::Value << v.name;
        out << YAML::Key << "role" << YAML::Value << to_string(v.role);
        std::visit(overloaded{
                       [&](const NumericRule& r) {
                           out << YAML::Key << "type" << YAML::Value << "numeric";
                           out << YAML::Key << "standardize" << YAML::Value << v.standardize;
                           if (r.scale != 1.0) out << YAML::Key << "scale" << YAML::Value << r.scale;
                           if (r.shift != 0.0) out << YAML::Key << "shift" << YAML::Value << r.shift;
                       },
                       [&](const CategoricalRule& r) {
                           out << YAML::Key << "type" << YAML::Value << "categorical";
                           out << YAML::Key << "levels" << YAML::Value << YAML::Flow << r.levels;
                           out << YAML::Key << "baseline" << YAML::Value << r.baseline;
                           if (!r.merge.empty()) out << YAML::Key << "merge" << YAML::Value << r.merge;
                           if (!r.labels.empty()) out << YAML::Key << "labels" << YAML::Value << r.labels;
                       },
                       [&](const DerivedRule& r) {
                           out << YAML::Key << "type" << YAML::Value << "derived";
                           out << YAML::Key << "expression" << YAML::Value << r.expression.text();
                           out << YAML::Key << "standardize" << YAML::Value << v.standardize;
                       },
                   },
                   v.rule);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "interactions" << YAML::Value << YAML::BeginSeq;
    for (const auto& ia : spec.interactions) {
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "a" << YAML::Value << ia.a;
        out << YAML::Key << "b" << YAML::Value << ia.b;
        out << YAML::Key << "role" << YAML::Value << to_string(ia.role);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

struct EncodedVariable {
    std::vector<ColumnInfo> columns;
    std::vector<Vector> values;  // one per column, over retained rows
};

double outcome_value(const OutcomeRule& rule, const Cell& cell, std::size_t row) {
    if (!rule.positive.empty()) {
        return std::find(rule.positive.begin(), rule.positive.end(), cell.text) != rule.positive.end() ? 1.0 : 0.0;
    }
    if (!cell.is_number()) {
        throw EncodingError("outcome '" + rule.column + "' is not numeric at row " + std::to_string(row + 1) +
                            " ('" + cell.text + "')");
    }
    return cell.number;
}

void standardize(Vector& values, const std::vector<bool>& present, ColumnInfo& info, const std::string& column) {
    double sum = 0.0;
    std::size_t count = 0;
    for (Index i = 0; i < values.size(); ++i) {
        if (present[static_cast<std::size_t>(i)]) {
            sum += values[i];
            ++count;
        }
    }
    if (count == 0) throw EncodingError("column '" + column + "' has no observed values");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Index i = 0; i < values.size(); ++i) {
        if (present[static_cast<std::size_t>(i)]) ss += (values[i] - mean) * (values[i] - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 0.0)) throw EncodingError("column '" + column + "' is constant and cannot be standardized");
    for (Index i = 0; i < values.size(); ++i) {
        values[i] = present[static_cast<std::size_t>(i)] ? (values[i] - mean) / sd : 0.0;
    }
    info.center = mean;
    info.scale = sd;
}

}  // namespace

Dataset encode(const RawTable& raw, const EncodingSpec& spec) {
    spec.validate();

    const auto outcome_col = raw.index_of(spec.outcome.column);
    if (!outcome_col) throw SchemaError("spec references absent column '" + spec.outcome.column + "'");
    std::vector<std::size_t> var_cols;
    for (const auto& v : spec.variables) {
        const auto idx = raw.index_of(v.column);
        if (!idx) throw SchemaError("spec references absent column '" + v.column + "'");
        var_cols.push_back(*idx);
    }

    // Unknown categories are an error wherever they occur.
    for (std::size_t k = 0; k < spec.variables.size(); ++k) {
        const auto* cat = std::get_if<CategoricalRule>(&spec.variables[k].rule);
        if (!cat) continue;
        for (std::size_t r = 0; r < raw.n_rows(); ++r) {
            const Cell& cell = raw.rows[r][var_cols[k]];
            if (!cell.missing() && !resolve_level(*cat, cell.text)) {
                throw EncodingError("column '" + spec.variables[k].column + "' has unseen level '" + cell.text +
                                    "' at row " + std::to_string(r + 1) + " with no merge rule");
            }
        }
    }

    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < raw.n_rows(); ++r) {
        const auto& row = raw.rows[r];
        bool drop = row[*outcome_col].missing();
        if (spec.missing == MissingPolicy::DropListwise) {
            for (std::size_t c : var_cols) drop = drop || row[c].missing();
        }
        if (!drop) kept.push_back(r);
    }
    if (kept.empty()) {
        throw EmptyDatasetError("no rows remain after dropping " + std::to_string(raw.n_rows()) +
                                " rows with missing values");
    }
    const auto n = static_cast<Index>(kept.size());

    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        const auto r = kept[static_cast<std::size_t>(i)];
        y[i] = outcome_value(spec.outcome, raw.rows[r][*outcome_col], r);
    }

    std::vector<ColumnInfo> infos;
    std::vector<Vector> columns;
    for (std::size_t k = 0; k < spec.variables.size(); ++k) {
        const VariableRule& v = spec.variables[k];
        const std::string name = output_name(v);
        std::vector<bool> present(static_cast<std::size_t>(n));
        bool any_missing = false;
        for (Index i = 0; i < n; ++i) {
            present[static_cast<std::size_t>(i)] = !raw.rows[kept[static_cast<std::size_t>(i)]][var_cols[k]].missing();
            any_missing = any_missing || !present[static_cast<std::size_t>(i)];
        }
        auto cell_at = [&](Index i) -> const Cell& { return raw.rows[kept[static_cast<std::size_t>(i)]][var_cols[k]]; };

        if (const auto* cat = std::get_if<CategoricalRule>(&v.rule)) {
            for (const auto& level : cat->levels) {
                if (level == cat->baseline) continue;
                Vector col = Vector::Zero(n);
                for (Index i = 0; i < n; ++i) {
                    if (present[static_cast<std::size_t>(i)] && *resolve_level(*cat, cell_at(i).text) == level) col[i] = 1.0;
                }
                ColumnInfo info;
                info.name = dummy_name(v, *cat, level);
                info.role = v.role;
                info.kind = ColumnKind::Dummy;
                info.source = v.column;
                info.level = level;
                infos.push_back(std::move(info));
                columns.push_back(std::move(col));
            }
        } else {
            Vector col = Vector::Zero(n);
            for (Index i = 0; i < n; ++i) {
                if (!present[static_cast<std::size_t>(i)]) continue;
                const Cell& cell = cell_at(i);
                if (!cell.is_number()) {
                    throw EncodingError("column '" + v.column + "' expects numbers but row " +
                                        std::to_string(kept[static_cast<std::size_t>(i)] + 1) + " holds '" + cell.text + "'");
                }
                if (const auto* num = std::get_if<NumericRule>(&v.rule)) {
                    col[i] = cell.number * num->scale + num->shift;
                } else {
                    col[i] = std::get<DerivedRule>(v.rule).expression(cell.number);
                }
            }
            ColumnInfo info;
            info.name = name;
            info.role = v.role;
            info.kind = ColumnKind::Numeric;
            info.source = v.column;
            if (v.standardize) standardize(col, present, info, v.column);
            infos.push_back(std::move(info));
            columns.push_back(std::move(col));
        }

        if (spec.missing == MissingPolicy::IndicatorZero && any_missing) {
            Vector ind(n);
            for (Index i = 0; i < n; ++i) ind[i] = present[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
            ColumnInfo info;
            info.name = name + "_missing";
            info.role = Role::Control;
            info.kind = ColumnKind::MissingIndicator;
            info.source = v.column;
            infos.push_back(std::move(info));
            columns.push_back(std::move(ind));
        }
    }

    Matrix design(n, static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) design.col(static_cast<Index>(j)) = columns[j];
    Dataset base(spec.outcome.column, std::move(y), std::move(design), std::move(infos), raw.n_rows() - kept.size());

    if (spec.interactions.empty()) return base;

    // Resolve interaction parents: exact column names first, then variable names.
    auto expand = [&](const std::string& ref) {
        if (base.index_of(ref)) return std::vector<std::string>{ref};
        for (const auto& v : spec.variables) {
            if (output_name(v) != ref) continue;
            std::vector<std::string> out;
            for (const auto& c : base.columns()) {
                if (c.source == v.column && c.kind != ColumnKind::MissingIndicator) out.push_back(c.name);
            }
            return out;
        }
        throw SchemaError("interaction references unknown column or variable '" + ref + "'");
    };
    std::vector<InteractionSpec> pairs;
    for (const auto& ia : spec.interactions) {
        for (const auto& a : expand(ia.a)) {
            for (const auto& b : expand(ia.b)) pairs.push_back({a, b, ia.role});
        }
    }
    return interact(base, pairs);
}

Dataset interact(const Dataset& data, const std::vector<InteractionSpec>& pairs) {
    std::vector<ColumnInfo> infos = data.columns();
    std::set<std::string> names;
    for (const auto& c : infos) names.insert(c.name);

    Matrix design(data.n(), data.p() + static_cast<Index>(pairs.size()));
    design.leftCols(data.p()) = data.design();
    Index next = data.p();
    for (const auto& pair : pairs) {
        const auto ia = data.index_of(pair.a);
        const auto ib = data.index_of(pair.b);
        if (!ia) throw InvalidArgument("interaction parent '" + pair.a + "' does not exist");
        if (!ib) throw InvalidArgument("interaction parent '" + pair.b + "' does not exist");
        ColumnInfo info;
        info.name = pair.a + "*" + pair.b;
        if (!names.insert(info.name).second) {
            throw InvalidArgument("interaction column '" + info.name + "' already exists");
        }
        info.role = pair.role;
        info.kind = ColumnKind::Interaction;
        info.source = info.name;
        info.parents = {pair.a, pair.b};
        design.col(next++) = data.design().col(*ia).cwiseProduct(data.design().col(*ib));
        infos.push_back(std::move(info));
    }
    return Dataset(data.outcome_name(), data.y(), std::move(design), std::move(infos), data.dropped_rows());
}

}  // namespace dml
