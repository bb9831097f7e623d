#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bpf {

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Malformed input file; `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TransportError : public Error {
public:
    using Error::Error;
};

// Backend refused a request parameter.
class CapabilityError : public Error {
public:
    CapabilityError(std::string param, const std::string& detail)
        : Error("backend rejected parameter '" + param + "': " + detail), param_(std::move(param)) {}
    const std::string& param() const noexcept { return param_; }

private:
    std::string param_;
};

class ExtractionError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// State conflict; `ids()` lists the offending item ids, when any.
class ConflictError : public Error {
public:
    ConflictError(const std::string& what, std::vector<std::string> ids = {})
        : Error(what), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class PolarityError : public Error {
public:
    using Error::Error;
};

} // namespace bpf
