#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace duckmorph {

// Root of every error thrown by the library. `kind()` is a stable, machine
// readable tag used by the CLI error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error("dimension", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error("argument", w) {}
};

struct StateError : Error {
    explicit StateError(const std::string& w) : Error("state", w) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

struct DegenerateGeometryError : Error {
    explicit DegenerateGeometryError(const std::string& w) : Error("degenerate-geometry", w) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error("validation", w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& w, std::size_t byte_offset)
        : Error("parse", w + " (at byte " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace duckmorph
