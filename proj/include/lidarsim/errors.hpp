#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lidarsim {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad input that was detectable before doing any work (CLI exit code 2).
struct ValidationError : Error {
    using Error::Error;
};

/// Malformed file content. Carries the byte offset where parsing failed.
struct ParseError : Error {
    std::size_t byte_offset;

    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

struct IoError : Error {
    using Error::Error;
};

struct EmptyCloudError : ValidationError {
    EmptyCloudError() : ValidationError("point cloud is empty") {}
};

struct NoGroundPointsError : ValidationError {
    NoGroundPointsError() : ValidationError("cloud contains no ground-labeled points") {}
};

struct NoPlacementMassError : ValidationError {
    NoPlacementMassError()
        : ValidationError("probability map has zero weight within sensor range") {}
    explicit NoPlacementMassError(const std::string& category)
        : ValidationError("probability map for '" + category +
                          "' has zero weight within sensor range") {}
};

struct NoAnnotationsError : ValidationError {
    NoAnnotationsError() : ValidationError("annotation set is empty") {}
};

struct TooFewPointsError : ValidationError {
    using ValidationError::ValidationError;
    TooFewPointsError(std::size_t got, std::size_t need)
        : ValidationError("need at least " + std::to_string(need) + " points, got " +
                          std::to_string(got)) {}
};

struct UnknownCategoryError : ValidationError {
    explicit UnknownCategoryError(const std::string& category)
        : ValidationError("category not present in library: " + category) {}
};

}  // namespace lidarsim
