#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Weighted Gram matrix (or refit design) is singular.
class RankDeficientError : public Error {
public:
    RankDeficientError(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

/// Malformed delimited input; row is 1-based over data rows (header excluded).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class EncodingError : public Error {
public:
    using Error::Error;
};

class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

class DegenerateTreatmentError : public Error {
public:
    using Error::Error;
};

class DegenerateOutcomeError : public Error {
public:
    using Error::Error;
};

class WeakInstrumentError : public Error {
public:
    WeakInstrumentError(const std::string& what, double mean_z2) : Error(what), mean_z2_(mean_z2) {}
    double mean_z2() const noexcept { return mean_z2_; }

private:
    double mean_z2_;
};

class DegenerateMomentError : public Error {
public:
    using Error::Error;
};

/// A per-treatment estimation failure surfaced by the multi-treatment driver.
class EstimationError : public Error {
public:
    EstimationError(const std::string& treatment, const std::string& what)
        : Error("treatment '" + treatment + "': " + what), treatment_(treatment) {}
    const std::string& treatment() const noexcept { return treatment_; }

private:
    std::string treatment_;
};

}  // namespace dml
