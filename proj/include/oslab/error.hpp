#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oslab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an op's rule.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value is outside the range an operation accepts (alpha <= 0, lambda outside [0,1], ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

[[noreturn]] inline void shape_mismatch(const char* op, const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] inline void shape_invalid(const char* op, const std::vector<std::size_t>& a,
                                       const std::string& why) {
    throw ShapeError(std::string(op) + ": invalid shape " + shape_str(a) + " (" + why + ")");
}

} // namespace detail
} // namespace oslab
