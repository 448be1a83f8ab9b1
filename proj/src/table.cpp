#include "dml/table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <set>

#include "dml/errors.hpp"

namespace dml {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

char sniff_delimiter(const std::string& header) {
    std::size_t tabs = 0;
    std::size_t commas = 0;
    bool quoted = false;
    for (char c : header) {
        if (c == '"') quoted = !quoted;
        if (quoted) continue;
        if (c == '\t') ++tabs;
        if (c == ',') ++commas;
    }
    return (tabs > 0 && tabs >= commas) ? '\t' : ',';
}

Cell make_cell(const std::string& raw, const TableFormat& format) {
    Cell cell;
    const std::string token = trim(raw);
    if (std::find(format.missing_tokens.begin(), format.missing_tokens.end(), token) !=
        format.missing_tokens.end()) {
        return cell;
    }
    cell.text = token;
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec == std::errc() && ptr == end && !token.empty()) {
        cell.kind = Cell::Kind::Number;
        cell.number = value;
    } else {
        cell.kind = Cell::Kind::Text;
    }
    return cell;
}

}  // namespace

std::optional<std::size_t> RawTable::index_of(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<std::string> split_record(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delimiter) {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

RawTable load_table(std::istream& in, const TableFormat& format) {
    RawTable table;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("table has no header row", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const char delim = format.delimiter.value_or(sniff_delimiter(line));
    std::set<std::string> seen;
    for (auto& name : split_record(line, delim)) {
        name = trim(name);
        if (!seen.insert(name).second) throw SchemaError("duplicate column name '" + name + "'");
        table.columns.push_back(std::move(name));
    }

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && table.columns.size() > 1) continue;
        ++row;
        const auto fields = split_record(line, delim);
        if (fields.size() != table.columns.size()) {
            throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                 " cells but the header declares " + std::to_string(table.columns.size()),
                             row);
        }
        std::vector<Cell> cells;
        cells.reserve(fields.size());
        for (const auto& f : fields) cells.push_back(make_cell(f, format));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

RawTable load_table_file(const std::string& path, const TableFormat& format) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open table '" + path + "'");
    return load_table(in, format);
}

}  // namespace dml
