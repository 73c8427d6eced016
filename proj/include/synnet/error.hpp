#pragma once

#include <stdexcept>
#include <string>

namespace synnet {

// Every error carries a short category tag so the CLI can print a
// machine-parseable "<category>: <message>" line.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& m) : Error("parameter", m) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& m) : Error("usage", m) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& m) : Error("parse", m) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class LoadError : public Error {
public:
    explicit LoadError(const std::string& m) : Error("load", m) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("io", m) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& m) : Error("divergence", m) {}
};

} // namespace synnet
