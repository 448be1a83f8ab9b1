#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dml {

/// One cell of a raw table. Numbers keep their original token so that
/// numeric category codes can still be matched as level labels.
struct Cell {
    enum class Kind { Missing, Number, Text };

    Kind kind = Kind::Missing;
    double number = 0.0;
    std::string text;

    bool missing() const noexcept { return kind == Kind::Missing; }
    bool is_number() const noexcept { return kind == Kind::Number; }
};

struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    std::size_t n_rows() const noexcept { return rows.size(); }
    std::optional<std::size_t> index_of(const std::string& name) const;
};

struct TableFormat {
    /// Auto-detected from the header row (tab wins over comma) when unset.
    std::optional<char> delimiter;
    std::vector<std::string> missing_tokens{"", "NA"};
};

/// Reads a delimited text table with a header row. Fields may be wrapped in
/// double quotes; a doubled quote inside a quoted field is a literal quote.
RawTable load_table(std::istream& in, const TableFormat& format = {});
RawTable load_table_file(const std::string& path, const TableFormat& format = {});

/// Splits one delimited record, honouring double quotes.
std::vector<std::string> split_record(const std::string& line, char delimiter);

}  // namespace dml
