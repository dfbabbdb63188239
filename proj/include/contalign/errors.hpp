#pragma once

#include <stdexcept>
#include <string>

namespace contalign {

// Base of every error raised by the library. `kind()` is a stable short tag
// used by the CLI and the Python bindings to classify failures.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct InvalidInput : Error {
    explicit InvalidInput(const std::string& w) : Error("invalid-input", w) {}
};

struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& w) : Error("invalid-config", w) {}
};

struct EmptyShape : Error {
    explicit EmptyShape(const std::string& w) : Error("empty-shape", w) {}
};

struct SingularTransform : Error {
    explicit SingularTransform(const std::string& w) : Error("singular-transform", w) {}
};

struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& w) : Error("degenerate-input", w) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error("numerical", w) {}
};

struct ParseError : Error {
    ParseError(const std::string& w, std::size_t offset)
        : Error("parse", w + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

struct DegeneratePair : Error {
    explicit DegeneratePair(const std::string& w) : Error("degenerate-pair", w) {}
};

}  // namespace contalign
