#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mamorl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Violated call contract, e.g. backward() on a non-scalar loss.
class ContractError : public Error {
public:
    using Error::Error;
};

class NumericInputError : public Error {
public:
    using Error::Error;
};

class DivergedTrainingError : public Error {
public:
    DivergedTrainingError(std::string parameter, const std::string& what)
        : Error(what), parameter_(std::move(parameter)) {}

    const std::string& parameter() const { return parameter_; }

private:
    std::string parameter_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class EpisodeFinishedError : public Error {
public:
    using Error::Error;
};

class UnsupportedDimensionError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace mamorl
