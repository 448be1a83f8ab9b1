#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dml/numerics.hpp"

namespace dml {

enum class Role { Control, Treatment, Intercept };

enum class ColumnKind { Numeric, Dummy, Interaction, MissingIndicator };

const char* to_string(Role role);
const char* to_string(ColumnKind kind);
Role role_from_string(const std::string& s);
ColumnKind kind_from_string(const std::string& s);

/// Provenance of one design column.
struct ColumnInfo {
    std::string name;
    Role role = Role::Control;
    ColumnKind kind = ColumnKind::Numeric;
    std::string source;              // raw variable (or "a*b" for products)
    std::string level;               // dummy level label, empty otherwise
    std::vector<std::string> parents;  // interaction parents
    // Standardization applied at encode time: stored = (raw - center) / scale.
    double center = 0.0;
    double scale = 1.0;

    bool operator==(const ColumnInfo&) const = default;
};

/// Outcome plus design matrix (treatments and controls, intercept implicit).
/// Immutable once built.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string outcome_name, Vector y, Matrix design, std::vector<ColumnInfo> columns,
            std::size_t dropped_rows = 0);

    const std::string& outcome_name() const noexcept { return outcome_name_; }
    const Vector& y() const noexcept { return y_; }
    const Matrix& design() const noexcept { return design_; }
    const std::vector<ColumnInfo>& columns() const noexcept { return columns_; }
    const ColumnInfo& column_info(Index j) const { return columns_.at(static_cast<std::size_t>(j)); }
    std::size_t dropped_rows() const noexcept { return dropped_rows_; }

    Index n() const noexcept { return design_.rows(); }
    Index p() const noexcept { return design_.cols(); }
    Index count(Role role) const;

    std::optional<Index> index_of(const std::string& name) const;
    Index require_index(const std::string& name) const;
    std::vector<Index> indices_with_role(Role role) const;
    std::vector<std::string> names(std::span<const Index> idx) const;

    bool binary_outcome() const;

    /// FNV-1a digest over the raw bytes of y and the design (column-major).
    std::uint64_t checksum() const;

    bool operator==(const Dataset& other) const;

private:
    std::string outcome_name_;
    Vector y_;
    Matrix design_;
    std::vector<ColumnInfo> columns_;
    std::size_t dropped_rows_ = 0;
};

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

/// Writes the design as a delimited numeric matrix (outcome first) and a
/// YAML sidecar at `path + ".meta.yaml"` describing every column.
void write_dataset(const Dataset& data, const std::string& path, char delimiter = ',');
Dataset read_dataset(const std::string& path);

}  // namespace dml
