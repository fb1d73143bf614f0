#pragma once

#include <stdexcept>
#include <string>

namespace poseflow {

// Shape/axis disagreement between operands. Message names the offending axes.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Value outside the mathematical domain of an operation (log of <= 0, zero divisor, ...).
struct DomainError : std::domain_error {
    explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

// Malformed argument (even window size, bad epsilon, too-short trajectory, ...).
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A caller broke an API contract (non-scalar function handed to the gradient checker, ...).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Unparseable external input; message carries the line number where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parseable but invalid data (non-orthonormal rotation beyond tolerance, bad checkpoint, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometry too degenerate for the requested computation (collinear trajectory, ...).
struct DegenerateGeometryError : std::runtime_error {
    explicit DegenerateGeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace poseflow
