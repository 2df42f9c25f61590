#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xplain {

// Root of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

// Grounding found no KG entity in the question/answer text.
class NoSeedEntities : public Error {
public:
    using Error::Error;
};

// Network/HTTP failure talking to an external model endpoint.
class TransportError : public Error {
public:
    using Error::Error;
};

// The generator returned something unusable (e.g. an empty completion).
class GenerationError : public Error {
public:
    using Error::Error;
};

// The evaluator output could not be turned into a debugger-score.
class EvaluationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// Operation not allowed in the object's current state.
class StateError : public Error {
public:
    using Error::Error;
};

// Dataset record failed schema validation.
class SchemaError : public Error {
public:
    SchemaError(const std::string& field, const std::string& what, std::size_t line = 0)
        : Error((line ? "line " + std::to_string(line) + ": " : std::string()) + field + ": " + what),
          field_(field), line_(line) {}
    const std::string& field() const noexcept { return field_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string field_;
    std::size_t line_;
};

}  // namespace xplain
