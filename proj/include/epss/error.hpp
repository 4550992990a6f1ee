#pragma once

#include <stdexcept>
#include <string>

namespace epss {

/// Base error for all pipeline failures surfaced to callers.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input validation failure (bad config, missing file, bad record in strict mode).
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace epss
