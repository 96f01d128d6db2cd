#pragma once

#include <stdexcept>
#include <string>

namespace bscb {

/// Raised for invalid configuration values or inputs violating a documented precondition.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an input file cannot be ingested. Carries the 1-based data row
/// (0 when the problem is not row specific) and the offending field.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row, std::string field)
        : std::runtime_error(what), row_(row), field_(std::move(field)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t row_;
    std::string field_;
};

}  // namespace bscb
