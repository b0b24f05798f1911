#pragma once

#include <stdexcept>
#include <string>

namespace spattn {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct PartitionError : std::runtime_error {
    explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& what) : std::runtime_error(what) {}
};

struct AlignmentError : std::runtime_error {
    explicit AlignmentError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyCacheError : std::runtime_error {
    explicit EmptyCacheError(const std::string& what) : std::runtime_error(what) {}
};

// Collective misuse: mismatched arguments across ranks, a rank leaving the
// worker pool while peers are blocked inside a collective, etc.
struct CollectiveError : std::runtime_error {
    explicit CollectiveError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace spattn
