#pragma once

#include <stdexcept>
#include <string>

namespace pear {

// Malformed input file (bad JSON, unknown enum string, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that violates a data invariant.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pear
