#include "dml/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dml/errors.hpp"
#include "dml/table.hpp"

namespace dml {

const char* to_string(Role role) {
    switch (role) {
        case Role::Control: return "control";
        case Role::Treatment: return "treatment";
        case Role::Intercept: return "intercept";
    }
    return "control";
}

const char* to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Numeric: return "numeric";
        case ColumnKind::Dummy: return "dummy";
        case ColumnKind::Interaction: return "interaction";
        case ColumnKind::MissingIndicator: return "missing-indicator";
    }
    return "numeric";
}

Role role_from_string(const std::string& s) {
    if (s == "control") return Role::Control;
    if (s == "treatment") return Role::Treatment;
    if (s == "intercept") return Role::Intercept;
    throw SchemaError("unknown column role '" + s + "'");
}

ColumnKind kind_from_string(const std::string& s) {
    if (s == "numeric") return ColumnKind::Numeric;
    if (s == "dummy") return ColumnKind::Dummy;
    if (s == "interaction") return ColumnKind::Interaction;
    if (s == "missing-indicator") return ColumnKind::MissingIndicator;
    throw SchemaError("unknown column kind '" + s + "'");
}

Dataset::Dataset(std::string outcome_name, Vector y, Matrix design, std::vector<ColumnInfo> columns,
                 std::size_t dropped_rows)
    : outcome_name_(std::move(outcome_name)),
      y_(std::move(y)),
      design_(std::move(design)),
      columns_(std::move(columns)),
      dropped_rows_(dropped_rows) {
    if (y_.size() != design_.rows()) throw InvalidArgument("Dataset: outcome length differs from design rows");
    if (static_cast<Index>(columns_.size()) != design_.cols()) {
        throw InvalidArgument("Dataset: column metadata count differs from design columns");
    }
    std::vector<std::string> sorted;
    for (const auto& c : columns_) sorted.push_back(c.name);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw InvalidArgument("Dataset: duplicate column names");
    }
}

Index Dataset::count(Role role) const {
    return static_cast<Index>(
        std::count_if(columns_.begin(), columns_.end(), [role](const ColumnInfo& c) { return c.role == role; }));
}

std::optional<Index> Dataset::index_of(const std::string& name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        if (columns_[j].name == name) return static_cast<Index>(j);
    }
    return std::nullopt;
}

Index Dataset::require_index(const std::string& name) const {
    const auto idx = index_of(name);
    if (!idx) throw InvalidArgument("unknown column '" + name + "'");
    return *idx;
}

std::vector<Index> Dataset::indices_with_role(Role role) const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        if (columns_[j].role == role) out.push_back(static_cast<Index>(j));
    }
    return out;
}

std::vector<std::string> Dataset::names(std::span<const Index> idx) const {
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (Index j : idx) out.push_back(column_info(j).name);
    return out;
}

bool Dataset::binary_outcome() const {
    return (y_.array() == 0.0 || y_.array() == 1.0).all();
}

std::uint64_t Dataset::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* data, Index count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    mix(y_.data(), y_.size());
    mix(design_.data(), design_.size());
    return h;
}

bool Dataset::operator==(const Dataset& other) const {
    return outcome_name_ == other.outcome_name_ && columns_ == other.columns_ &&
           dropped_rows_ == other.dropped_rows_ && y_.size() == other.y_.size() &&
           design_.rows() == other.design_.rows() && design_.cols() == other.design_.cols() &&
           std::memcmp(y_.data(), other.y_.data(), sizeof(double) * static_cast<std::size_t>(y_.size())) == 0 &&
           std::memcmp(design_.data(), other.design_.data(),
                       sizeof(double) * static_cast<std::size_t>(design_.size())) == 0;
}

std::string format_number(double v) {
    if (v == 0.0) return "0";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

namespace {

std::string quote_field(const std::string& s, char delimiter) {
    if (s.find(delimiter) == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    return out + "\"";
}

}  // namespace

void write_dataset(const Dataset& data, const std::string& path, char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write '" + path + "'");
    out << quote_field(data.outcome_name(), delimiter);
    for (const auto& c : data.columns()) out << delimiter << quote_field(c.name, delimiter);
    out << '\n';
    for (Index i = 0; i < data.n(); ++i) {
        out << format_number(data.y()[i]);
        for (Index j = 0; j < data.p(); ++j) out << delimiter << format_number(data.design()(i, j));
        out << '\n';
    }

    YAML::Emitter meta;
    meta << YAML::BeginMap;
    meta << YAML::Key << "version" << YAML::Value << 1;
    meta << YAML::Key << "outcome" << YAML::Value << data.outcome_name();
    meta << YAML::Key << "n" << YAML::Value << data.n();
    meta << YAML::Key << "p" << YAML::Value << data.p();
    meta << YAML::Key << "dropped_rows" << YAML::Value << data.dropped_rows();
    meta << YAML::Key << "columns" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : data.columns()) {
        meta << YAML::BeginMap;
        meta << YAML::Key << "name" << YAML::Value << c.name;
        meta << YAML::Key << "role" << YAML::Value << to_string(c.role);
        meta << YAML::Key << "kind" << YAML::Value << to_string(c.kind);
        meta << YAML::Key << "source" << YAML::Value << c.source;
        meta << YAML::Key << "level" << YAML::Value << c.level;
        if (!c.parents.empty()) {
            meta << YAML::Key << "parents" << YAML::Value << YAML::Flow << c.parents;
        }
        if (c.center != 0.0 || c.scale != 1.0) {
            meta << YAML::Key << "center" << YAML::Value << format_number(c.center);
            meta << YAML::Key << "scale" << YAML::Value << format_number(c.scale);
        }
        meta << YAML::EndMap;
    }
    meta << YAML::EndSeq << YAML::EndMap;

    std::ofstream side(path + ".meta.yaml", std::ios::binary);
    if (!side) throw InvalidArgument("cannot write '" + path + ".meta.yaml'");
    side << meta.c_str() << '\n';
}

Dataset read_dataset(const std::string& path) {
    YAML::Node meta;
    try {
        meta = YAML::LoadFile(path + ".meta.yaml");
    } catch (const YAML::Exception& e) {
        throw SchemaError("cannot read metadata sidecar '" + path + ".meta.yaml': " + e.what());
    }
    std::vector<ColumnInfo> columns;
    std::string outcome;
    try {
        outcome = meta["outcome"].as<std::string>();
        for (const auto& node : meta["columns"]) {
            ColumnInfo c;
            c.name = node["name"].as<std::string>();
            c.role = role_from_string(node["role"].as<std::string>());
            c.kind = kind_from_string(node["kind"].as<std::string>("numeric"));
            c.source = node["source"].as<std::string>("");
            c.level = node["level"].as<std::string>("");
            if (node["parents"]) c.parents = node["parents"].as<std::vector<std::string>>();
            c.center = node["center"].as<double>(0.0);
            c.scale = node["scale"].as<double>(1.0);
            columns.push_back(std::move(c));
        }
    } catch (const YAML::Exception& e) {
        throw SchemaError("malformed metadata sidecar: " + std::string(e.what()));
    }
    const auto dropped = meta["dropped_rows"].as<std::size_t>(0);

    TableFormat fmt;
    fmt.missing_tokens.clear();
    const RawTable table = load_table_file(path, fmt);
    if (table.columns.size() != columns.size() + 1) {
        throw SchemaError("matrix has " + std::to_string(table.columns.size()) + " columns, metadata describes " +
                          std::to_string(columns.size() + 1));
    }
    if (table.columns.front() != outcome) {
        throw SchemaError("first matrix column '" + table.columns.front() + "' is not the outcome '" + outcome + "'");
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (table.columns[j + 1] != columns[j].name) {
            throw SchemaError("matrix column '" + table.columns[j + 1] + "' does not match metadata '" +
                              columns[j].name + "'");
        }
    }
    const auto n = static_cast<Index>(table.n_rows());
    Vector y(n);
    Matrix x(n, static_cast<Index>(columns.size()));
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (!row[j].is_number()) {
                throw ParseError("non-numeric cell in column '" + table.columns[j] + "'", static_cast<std::size_t>(i + 1));
            }
            if (j == 0) y[i] = row[j].number;
            else x(i, static_cast<Index>(j - 1)) = row[j].number;
        }
    }
    return Dataset(outcome, std::move(y), std::move(x), std::move(columns), dropped);
}

}  // namespace dml
